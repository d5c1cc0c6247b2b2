"""Virtual synchronous generator control with dynamic inertia and damping.

The controller keeps a large virtual inertia while a filtered limit-penalty
state ``gamma`` shifts the output frequency and phase angle whenever the
active-power limits are violated. All the interesting behaviour lives in the
coupling ``alpha = c_alpha * gamma``: virtual inertia ``tau_omega / alpha``
and damping ``1 / alpha`` are infinite while power stays inside its limits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .network import OMEGA_SYNC


class PoisonedMeasurement(ValueError):
    """A non-finite measurement reached the controller."""


@dataclass(frozen=True)
class VsgParams:
    tau_omega: float = 0.25      # s
    tau_gamma: float = 0.1       # s
    c_alpha: float = 10.0        # inverted-damping shift coefficient, 1/pu
    c_theta: float = 0.5         # rad per pu
    c_omega: float = 6.0         # rad/s per pu
    p_ref: float = 0.5           # pu
    p_max: float = 1.0           # pu
    p_min: float = 0.0           # pu
    omega_ref: float = OMEGA_SYNC
    v_ref: float = 1.0           # pu
    c_p: float = 2.0             # voltage PI proportional gain
    c_i: float = 5.0             # voltage PI integral gain, 1/s
    v_min: float = 0.8           # pu, output clamp
    v_max: float = 1.2           # pu, output clamp
    v_setpoint: float = 1.0      # nominal internal-source magnitude, pu
    alpha_min: float = 0.0       # optional floor on alpha; 0 disables

    def __post_init__(self):
        for name in ("tau_omega", "tau_gamma", "c_alpha", "c_theta", "c_omega"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not (self.p_min < self.p_ref <= self.p_max):
            raise ValueError("require p_min < p_ref <= p_max")
        if not self.v_min < self.v_ref < self.v_max:
            raise ValueError("require v_min < v_ref < v_max")


@dataclass(frozen=True)
class VsgState:
    omega: float = 0.0       # rad/s frequency deviation
    theta: float = 0.0       # rad phase-angle deviation
    gamma: float = 0.0       # pu filtered limit penalty
    v_err_int: float = 0.0   # pu*s voltage-error integral
    v_err_prev: float = 0.0  # previous error sample (trapezoid memory)


@dataclass(frozen=True)
class VsgMeasurements:
    p_out: float
    q_out: float = 0.0
    v_out: float = 1.0


@dataclass(frozen=True)
class VsgOutput:
    theta_set: float
    v_set: float


def limit_penalty_target(p_out: float, p_max: float, p_min: float) -> float:
    """Two-sided limit violation: max(0, P-Pmax) + min(0, P-Pmin).

    At most one term is nonzero since p_min < p_max; the sign tells which
    limit binds.
    """
    if p_min >= p_max:
        raise ValueError("require p_min < p_max")
    return max(0.0, p_out - p_max) + min(0.0, p_out - p_min)


def vsg_derivatives(
    state: VsgState, params: VsgParams, meas: VsgMeasurements
) -> tuple[float, float, float]:
    """Right-hand side (domega, dtheta, dgamma) of the two-sided controller."""
    if not (math.isfinite(meas.p_out) and math.isfinite(meas.v_out)):
        raise PoisonedMeasurement(f"non-finite measurement {meas}")
    gamma = state.gamma
    domega = (-state.omega + params.c_alpha * gamma * (params.p_ref - meas.p_out)) / params.tau_omega
    dtheta = state.omega - params.c_omega * gamma
    dgamma = (-gamma + limit_penalty_target(meas.p_out, params.p_max, params.p_min)) / params.tau_gamma
    return domega, dtheta, dgamma


def vsg_output_angle(state: VsgState, params: VsgParams, t: float) -> float:
    """Absolute modulation angle: theta - c_theta*gamma + omega_ref*t."""
    return state.theta - params.c_theta * state.gamma + params.omega_ref * t


def voltage_pi(
    state: VsgState, params: VsgParams, v_out: float, dt: float
) -> tuple[float, VsgState]:
    """One discrete step of the excitation-style voltage PI.

    The integral advances by the trapezoid rule; while the clamped output is
    saturated against the error sign the integrator is frozen (anti-windup).
    Returns the clamped setpoint and the updated state.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    err = params.v_ref - v_out
    cand_int = state.v_err_int + 0.5 * dt * (state.v_err_prev + err)
    raw = params.v_setpoint + params.c_p * err + params.c_i * cand_int
    if raw > params.v_max and err > 0:
        new_int = state.v_err_int  # frozen high
    elif raw < params.v_min and err < 0:
        new_int = state.v_err_int  # frozen low
    else:
        new_int = cand_int
    v_set = params.v_setpoint + params.c_p * err + params.c_i * new_int
    v_set = min(max(v_set, params.v_min), params.v_max)
    return v_set, replace(state, v_err_int=new_int, v_err_prev=err)


def effective_virtual_parameters(
    params: VsgParams, gamma: float
) -> tuple[float, float]:
    """Virtual (inertia, damping) = (tau_omega/alpha, 1/alpha) at |gamma|.

    Returns (inf, inf) in the sliding regime alpha = 0.
    """
    alpha = max(params.c_alpha * abs(gamma), params.alpha_min)
    if alpha == 0.0:
        return math.inf, math.inf
    return params.tau_omega / alpha, 1.0 / alpha
