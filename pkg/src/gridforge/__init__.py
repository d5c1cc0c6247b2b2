"""Phasor-domain grid simulator with dynamic-inertia VSG control."""

__version__ = "0.1.0"
