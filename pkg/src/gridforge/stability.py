"""Small-signal analysis of the united penalty-controller system.

Builds the closed-form 3x3 linearization matrix ``A`` of the
(omega, theta, gamma) dynamics at an operating point, its off-diagonal part
``B``, the closed-form characteristic roots of ``B``, and a numeric stability
certificate. A central finite-difference Jacobian is provided as an
independent oracle, together with the exact analytic Jacobian of the united
system for cross-checking (the closed-form ``A`` differs from the exact
Jacobian in three entries; both are exposed so the discrepancy is testable).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .vsg import VsgParams


@dataclass(frozen=True)
class LinearizationPoint:
    omega0: float
    theta0: float
    gamma0: float
    t0: float
    f_ref0: float       # f(theta0 - c_theta*gamma0, t0) - P_ref
    grad_f_ref0: float  # df/dtheta at the shifted angle
    grad_f_max0: float  # same gradient seen by the max-shifted function

    def __post_init__(self):
        if self.gamma0 < 0:
            raise ValueError("gamma0 must be non-negative in the analyzed regime")


@dataclass
class StabilityReport:
    det_a: float
    eigenvalues: np.ndarray
    stable: bool
    matrix: np.ndarray


def evaluate_shifted_functions(
    f_handle: Callable[[float, float], float],
    p_ref: float,
    p_max: float,
    theta: float,
    t: float,
) -> tuple[float, float]:
    """(f - P_ref, f - P_max) at the given angle; first >= second for Pmax >= Pref."""
    value = f_handle(theta, t)
    return value - p_ref, value - p_max


def linearized_a(point: LinearizationPoint, params: VsgParams) -> np.ndarray:
    """Closed-form system matrix at the operating point, built entry-wise."""
    tw, tg = params.tau_omega, params.tau_gamma
    ct, cw = params.c_theta, params.c_omega
    g0 = point.gamma0
    fr, dfr, dfm = point.f_ref0, point.grad_f_ref0, point.grad_f_max0
    return np.array([
        [-1.0 / tw, -(ct / tw) * g0 * dfr, -(ct / tw) * (fr + cw * dfr)],
        [1.0, 0.0, -cw],
        [0.0, (g0 / tg) * dfm, -(1.0 + ct * dfm) / tg],
    ])


def off_diagonal_b(point: LinearizationPoint, params: VsgParams) -> np.ndarray:
    """The linearization matrix with its diagonal zeroed."""
    a = linearized_a(point, params)
    np.fill_diagonal(a, 0.0)
    return a


def characteristic_roots_b(
    point: LinearizationPoint, params: VsgParams
) -> tuple[complex, complex, complex]:
    """Closed-form roots {0, +i*sqrt(a), -i*sqrt(a)} of the off-diagonal matrix.

    a = c_theta*gamma0*grad_f_ref0/tau_omega + c_omega*gamma0*grad_f_max0/tau_gamma.
    """
    if point.grad_f_ref0 < 0 or point.grad_f_max0 < 0:
        raise ValueError("gradients must be non-negative (monotone regime)")
    a = (params.c_theta * point.gamma0 * point.grad_f_ref0 / params.tau_omega
         + params.c_omega * point.gamma0 * point.grad_f_max0 / params.tau_gamma)
    if a < 0:
        raise ValueError(f"negative oscillation coefficient a={a}")
    w = math.sqrt(a)
    return complex(0.0, 0.0), complex(0.0, w), complex(0.0, -w)


def check_stability(point: LinearizationPoint, params: VsgParams) -> StabilityReport:
    """Numeric certificate: nonsingular A (balanced det) and Re(eig) <= 1e-9."""
    a = linearized_a(point, params)
    scale = np.max(np.abs(a), axis=1)
    scale[scale == 0.0] = 1.0
    det_balanced = float(np.linalg.det(a / scale[:, None]))
    eig = np.linalg.eigvals(a)
    stable = abs(det_balanced) > 1e-12 and float(np.max(eig.real)) <= 1e-9
    return StabilityReport(float(np.linalg.det(a)), eig, stable, a)


def finite_difference_jacobian(
    dynamics: Callable[[Sequence[float]], Sequence[float]],
    x0: Sequence[float],
    h: float = 1e-6,
) -> np.ndarray:
    """Central-difference Jacobian of a 3-state right-hand side."""
    if h <= 0:
        raise ValueError("h must be positive")
    x0 = np.asarray(x0, dtype=float)
    n = x0.size
    jac = np.empty((n, n))
    for j in range(n):
        dx = np.zeros(n)
        dx[j] = h
        fp = np.asarray(dynamics(x0 + dx), dtype=float)
        fm = np.asarray(dynamics(x0 - dx), dtype=float)
        if not (np.all(np.isfinite(fp)) and np.all(np.isfinite(fm))):
            raise ValueError("dynamics evaluated to a non-finite value")
        jac[:, j] = (fp - fm) / (2.0 * h)
    return jac


def united_rhs(
    params: VsgParams,
    f_handle: Callable[[float, float], float],
    t: float = 0.0,
) -> Callable[[Sequence[float]], tuple[float, float, float]]:
    """Right-hand side of the united (omega, theta, gamma) system, upper-limit branch.

    tau_omega*domega = -omega - c_alpha*gamma*(f(theta - c_theta*gamma) - P_ref)
    dtheta          = omega - c_omega*gamma
    tau_gamma*dgamma = -gamma + (f(theta - c_theta*gamma) - P_max)
    """

    def rhs(x: Sequence[float]) -> tuple[float, float, float]:
        omega, theta, gamma = x
        shifted = theta - params.c_theta * gamma
        value = f_handle(shifted, t)
        f_ref = value - params.p_ref
        f_max = value - params.p_max
        domega = (-omega - params.c_alpha * gamma * f_ref) / params.tau_omega
        dtheta = omega - params.c_omega * gamma
        dgamma = (-gamma + f_max) / params.tau_gamma
        return (domega, dtheta, dgamma)

    return rhs


def frozen_gradient_rhs(
    point: LinearizationPoint, params: VsgParams
) -> Callable[[Sequence[float]], tuple[float, float, float]]:
    """United system with f replaced by its tangent model at the point.

    f(theta_shifted) is modelled as affine with the point's value and gradient,
    so finite differences of this right-hand side recover the exact Jacobian of
    the united system at the point.
    """
    shift0 = point.theta0 - params.c_theta * point.gamma0
    p_gap = point.f_ref0  # f(shift0) - P_ref
    grad = point.grad_f_ref0

    def f_affine(theta: float, _t: float) -> float:
        return params.p_ref + p_gap + grad * (theta - shift0)

    return united_rhs(params, f_affine)


def exact_jacobian(point: LinearizationPoint, params: VsgParams) -> np.ndarray:
    """Analytic Jacobian of the united system at the point.

    Differs from :func:`linearized_a` in entries (0,1), (0,2) and (2,1); the
    finite-difference oracle sides with this matrix.
    """
    tw, tg = params.tau_omega, params.tau_gamma
    ca, ct, cw = params.c_alpha, params.c_theta, params.c_omega
    g0 = point.gamma0
    fr, dfr, dfm = point.f_ref0, point.grad_f_ref0, point.grad_f_max0
    return np.array([
        [-1.0 / tw, -(ca / tw) * g0 * dfr, -(ca / tw) * (fr - ct * g0 * dfr)],
        [1.0, 0.0, -cw],
        [0.0, dfm / tg, -(1.0 + ct * dfm) / tg],
    ])
