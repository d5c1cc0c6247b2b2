"""Classical synchronous generator: swing dynamics and reactance-derived damping."""

from __future__ import annotations

from dataclasses import dataclass

from .network import OMEGA_SYNC


@dataclass(frozen=True)
class SgParams:
    m: float                     # pu*s^2/rad inertia on system base (2H/omega_s)
    d: float = 0.0               # pu*s/rad damping
    x: float = 0.1               # pu step-up transformer reactance
    xq_t: float = 0.5            # pu q-axis transient reactance X'_q
    xq_st: float = 0.2           # pu q-axis subtransient reactance X''_q
    tq_st: float = 0.05          # s open-circuit q-axis time constant T''_q
    p_mech: float = 0.0          # pu turbine power
    governor_droop: float = 0.0  # pu-frequency droop R; 0 disables the governor

    def __post_init__(self):
        if self.m <= 0:
            raise ValueError("inertia m must be positive")
        if self.d < 0:
            raise ValueError("damping d must be non-negative")
        if not self.xq_t > self.xq_st > 0:
            raise ValueError("require xq_t > xq_st > 0")
        if self.tq_st <= 0:
            raise ValueError("tq_st must be positive")


@dataclass(frozen=True)
class SgState:
    delta: float = 0.0  # rad rotor angle, unwrapped
    omega: float = 0.0  # rad/s speed deviation


def swing_derivatives(
    state: SgState, params: SgParams, p_elec: float
) -> tuple[float, float]:
    """(ddelta, domega) of the classical swing equation with optional droop."""
    p_mech = params.p_mech
    if params.governor_droop > 0:
        # zero-lag primary droop on per-unit frequency deviation
        p_mech -= (state.omega / OMEGA_SYNC) / params.governor_droop
    domega = (-params.d * state.omega + p_mech - p_elec) / params.m
    return state.omega, domega


def damping_from_reactances(
    x: float, xq_t: float, xq_st: float, tq_st: float, v_out: float
) -> float:
    """D = ((X'_q - X''_q)/(X + X'_q)) * (X'_q/X''_q) * T''_q * V_out."""
    if xq_st <= 0 or x + xq_t <= 0:
        raise ValueError("require xq_st > 0 and x + xq_t > 0")
    return (xq_t - xq_st) / (x + xq_t) * (xq_t / xq_st) * tq_st * v_out


def loss_of_synchronism(deltas: list[float], limit: float = 3.141592653589793) -> bool:
    """True when any rotor-angle pair in one island separates beyond ``limit``."""
    if len(deltas) < 2:
        return False
    return max(deltas) - min(deltas) > limit
