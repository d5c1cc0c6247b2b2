"""Single-bus aggregate plant and the bang-bang reference controller.

The plant is the classical swing equation
``M_S * domega_S = -D_S * omega_S + P_G - P_L + P_out`` with the controlled
injection bounded by [P_min, P_max]. The reference policy switches between the
limits on the sign of the frequency deviation and slides at the balancing
output once the deviation is inside a small dead-band; it is the lower cost
envelope against which other controllers are compared.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class AggregateParams:
    m_s: float            # s*pu inertia
    d_s: float            # pu damping
    p_g: float            # pu aggregate generation (excluding the controlled unit)
    p_l: float            # pu aggregate load
    p_min: float
    p_max: float
    horizon: float        # s
    dead_band: float = 1e-9

    def __post_init__(self):
        if self.m_s <= 0:
            raise ValueError("m_s must be positive")
        if self.d_s < 0:
            raise ValueError("d_s must be non-negative")
        if self.p_min >= self.p_max:
            raise ValueError("require p_min < p_max")


def balancing_output(params: AggregateParams) -> float:
    """Injection that holds omega_S = 0: the clamped negative of P_G - P_L."""
    return min(max(-(params.p_g - params.p_l), params.p_min), params.p_max)


def pmp_control(omega_s: float, params: AggregateParams) -> float:
    """Bang-bang optimal feedback: P_min above band, P_max below, balance inside."""
    if omega_s > params.dead_band:
        return params.p_min
    if omega_s < -params.dead_band:
        return params.p_max
    return balancing_output(params)


@dataclass
class AggregateTrajectory:
    t: np.ndarray
    omega_s: np.ndarray
    p_out: np.ndarray


def simulate_aggregate(
    params: AggregateParams,
    controller: Callable[[float, float], float],
    dt: float,
    omega0: float = 0.0,
) -> AggregateTrajectory:
    """Fixed-step integration of the swing plant over [0, horizon].

    ``controller(omega_s, t)`` maps the measured deviation to an injection,
    clamped to [p_min, p_max] regardless of what it returns.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    n = int(round(params.horizon / dt))
    t = np.linspace(0.0, n * dt, n + 1)
    omega = np.empty(n + 1)
    p_out = np.empty(n + 1)
    w = omega0
    for k in range(n + 1):
        u = controller(w, t[k])
        if not math.isfinite(u):
            raise ValueError(f"controller returned non-finite output at t={t[k]}")
        u = min(max(u, params.p_min), params.p_max)
        omega[k] = w
        p_out[k] = u
        if k < n:
            # semi-implicit in the damping term keeps the sliding mode clean
            w = (w + dt / params.m_s * (params.p_g - params.p_l + u)) / (
                1.0 + dt * params.d_s / params.m_s)
    return AggregateTrajectory(t, omega, p_out)


def frequency_cost(trajectory: AggregateTrajectory) -> float:
    """Trapezoid quadrature of 0.5 * omega_S^2 over the trajectory."""
    return float(np.trapezoid(0.5 * trajectory.omega_s**2, trajectory.t))


def vsg_aggregate_controller(
    params: AggregateParams,
    tau_omega: float = 0.25,
    tau_gamma: float = 0.1,
    c_alpha: float = 10.0,
    c_theta: float = 0.5,
    c_omega: float = 6.0,
    coupling_b: float = 20.0,
    p_ref: float | None = None,
    dt: float = 1e-3,
    gamma_trace: list | None = None,
) -> Callable[[float, float], float]:
    """Dynamic-penalty VSG closed over a stiff coupling to the aggregate bus.

    Internally integrates the controller states (omega, theta, gamma) and the
    grid-side angle; the injection is the linearized stiff-link transfer
    ``coupling_b * (theta_out - theta_S)``, clamped by the plant.
    """
    if p_ref is None:
        p_ref = 0.5 * (params.p_min + params.p_max)
    state = {"omega": 0.0, "theta": 0.0, "gamma": 0.0, "theta_s": 0.0, "t": 0.0}

    def control(omega_s: float, t: float) -> float:
        # advance internal states across the elapsed plant interval
        while state["t"] < t - 0.5 * dt:
            theta_out = state["theta"] - c_theta * state["gamma"]
            p_out = coupling_b * (theta_out - state["theta_s"])
            penalty = max(0.0, p_out - params.p_max) + min(0.0, p_out - params.p_min)
            domega = (-state["omega"] + c_alpha * state["gamma"] * (p_ref - p_out)) / tau_omega
            dtheta = state["omega"] - c_omega * state["gamma"]
            dgamma = (-state["gamma"] + penalty) / tau_gamma
            state["omega"] += dt * domega
            state["theta"] += dt * dtheta
            state["gamma"] += dt * dgamma
            state["theta_s"] += dt * omega_s
            state["t"] += dt
            if gamma_trace is not None:
                gamma_trace.append(state["gamma"])
        theta_out = state["theta"] - c_theta * state["gamma"]
        return coupling_b * (theta_out - state["theta_s"])

    return control


def fixed_vsg_controller(
    params: AggregateParams,
    tau_omega: float = 0.25,
    alpha: float = 1.0,
    coupling_b: float = 20.0,
    p_ref: float | None = None,
    dt: float = 1e-3,
) -> Callable[[float, float], float]:
    """Constant-parameter VSG (fixed virtual inertia and damping) over the same link."""
    if p_ref is None:
        p_ref = 0.5 * (params.p_min + params.p_max)
    state = {"omega": 0.0, "theta": 0.0, "theta_s": 0.0, "t": 0.0}

    def control(omega_s: float, t: float) -> float:
        while state["t"] < t - 0.5 * dt:
            p_out = coupling_b * (state["theta"] - state["theta_s"])
            domega = (-state["omega"] + alpha * (p_ref - p_out)) / tau_omega
            state["omega"] += dt * domega
            state["theta"] += dt * state["omega"]
            state["theta_s"] += dt * omega_s
            state["t"] += dt
        return coupling_b * (state["theta"] - state["theta_s"])

    return control


def droop_controller(params: AggregateParams, gain: float = 10.0) -> Callable[[float, float], float]:
    """Proportional frequency droop, clamped by the plant."""

    def control(omega_s: float, _t: float) -> float:
        return -gain * omega_s

    return control


def constant_controller(value: float) -> Callable[[float, float], float]:
    def control(_omega_s: float, _t: float) -> float:
        return value

    return control
