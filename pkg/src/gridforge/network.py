"""Algebraic transmission network: admittance matrix, linear bus solves, power flow.

Conventions
-----------
* System base 100 MVA, network base 230 kV, 60 Hz.
* A line stores its series conductance ``g`` and susceptance ``b`` in the
  positive-for-inductive convention: the series admittance is ``g - 1j*b``,
  so a lossless line of reactance ``x`` has ``g = 0, b = 1/x``.
* Loads are constant-impedance, converted once at nominal voltage (1 pu):
  ``y_load = (P - 1j*Q) / 1.0**2``.
* Devices couple to their terminal bus as internal voltage phasors behind a
  coupling admittance ``y_c`` (default pure reactance 0.15 pu).
"""

from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

SYSTEM_BASE_MVA = 100.0
NETWORK_BASE_KV = 230.0
NOMINAL_HZ = 60.0
OMEGA_SYNC = 2.0 * math.pi * NOMINAL_HZ

DEFAULT_COUPLING_X = 0.15
DEFAULT_FAULT_CONDUCTANCE = 1.0e4


class TopologyError(ValueError):
    """Raised for dangling endpoints, duplicate ids, or unknown references."""


class DispatchError(RuntimeError):
    """Raised when the requested dispatch cannot be met by a power flow."""

    def __init__(self, message: str, mismatch: float | None = None):
        super().__init__(message)
        self.mismatch = mismatch


@dataclass(frozen=True)
class Bus:
    id: int
    kind: str = "passive"  # device | load | passive
    nominal_kv: float = NETWORK_BASE_KV


@dataclass(frozen=True)
class Line:
    id: int
    from_bus: int
    to_bus: int
    g: float
    b: float
    charging_b: float = 0.0  # total line charging susceptance (split pi-model)
    status: str = "closed"

    def series_admittance(self) -> complex:
        return complex(self.g, -self.b)


@dataclass(frozen=True)
class LoadSpec:
    bus: int
    p_mw: float
    q_mvar: float

    def shunt_admittance(self) -> complex:
        # constant-impedance conversion at 1 pu nominal voltage
        return complex(self.p_mw, -self.q_mvar) / SYSTEM_BASE_MVA


@dataclass(frozen=True)
class GridModel:
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    loads: tuple[LoadSpec, ...]

    def __post_init__(self):
        ids = [b.id for b in self.buses]
        if len(set(ids)) != len(ids):
            raise TopologyError("duplicate bus ids")
        known = set(ids)
        for ln in self.lines:
            if ln.from_bus == ln.to_bus:
                raise TopologyError(f"line {ln.id}: from == to == {ln.from_bus}")
            if ln.from_bus not in known or ln.to_bus not in known:
                raise TopologyError(f"line {ln.id}: dangling endpoint")
            if abs(ln.g) > 0 and abs(ln.b) < 3.0 * abs(ln.g):
                warnings.warn(
                    f"line {ln.id}: |b| not much larger than |g|; "
                    "transmission-line assumption weak",
                    stacklevel=2,
                )
        for ld in self.loads:
            if ld.bus not in known:
                raise TopologyError(f"load at unknown bus {ld.bus}")

    @property
    def bus_ids(self) -> list[int]:
        return [b.id for b in self.buses]

    def bus_index(self) -> dict[int, int]:
        return {b.id: i for i, b in enumerate(self.buses)}

    def line_by_id(self, line_id: int) -> Line:
        for ln in self.lines:
            if ln.id == line_id:
                return ln
        raise TopologyError(f"unknown line id {line_id}")


@dataclass(frozen=True)
class AdmittanceMatrix:
    bus_ids: tuple[int, ...]
    Y: np.ndarray  # dense complex, ordered as bus_ids

    @property
    def n(self) -> int:
        return len(self.bus_ids)

    def index(self, bus_id: int) -> int:
        return self.bus_ids.index(bus_id)


@dataclass(frozen=True)
class DeviceSource:
    """Internal voltage phasor behind a coupling admittance at a terminal bus."""

    bus: int
    emf: complex
    coupling_x: float = DEFAULT_COUPLING_X

    @property
    def coupling_y(self) -> complex:
        return 1.0 / complex(0.0, self.coupling_x)


@dataclass
class NetworkSolution:
    bus_ids: tuple[int, ...]
    voltages: np.ndarray  # complex phasors per bus
    injections: list[tuple[float, float]]  # (P, Q) per device, network side
    collapsed_islands: list[tuple[int, ...]] = field(default_factory=list)

    def voltage(self, bus_id: int) -> complex:
        return self.voltages[self.bus_ids.index(bus_id)]


def injection_power(v_out: float, v_s: float, g: float, b: float, dtheta: float) -> float:
    """Two-bus active power transfer across a (g, b) branch at angle ``dtheta``."""
    return v_out * v_s * (g * math.cos(dtheta) + b * math.sin(dtheta))


def monotonicity_margin(v_out: float, v_s: float, g: float, b: float, dtheta: float) -> float:
    """d(injection_power)/d(dtheta); positive return certifies local monotonicity."""
    return v_out * v_s * (b * math.cos(dtheta) - g * math.sin(dtheta))


def build_admittance(
    buses: tuple[Bus, ...] | GridModel,
    lines: tuple[Line, ...] = (),
    loads: tuple[LoadSpec, ...] = (),
    fault_shunts: dict[int, complex] | None = None,
    open_lines: frozenset[int] | None = None,
    load_overrides: dict[int, complex] | None = None,
) -> AdmittanceMatrix:
    """Assemble the dense bus admittance matrix.

    ``open_lines`` supplements per-line status flags; ``fault_shunts`` maps
    bus id to an extra diagonal admittance; ``load_overrides`` maps bus id to
    a replacement total load shunt for that bus (used by load-step events).
    """
    if isinstance(buses, GridModel):
        grid = buses
    else:
        grid = GridModel(tuple(buses), tuple(lines), tuple(loads))
    open_lines = open_lines or frozenset()
    idx = grid.bus_index()
    n = len(grid.buses)
    Y = np.zeros((n, n), dtype=complex)
    for ln in grid.lines:
        if ln.status == "open" or ln.id in open_lines:
            continue
        y = ln.series_admittance()
        i, j = idx[ln.from_bus], idx[ln.to_bus]
        Y[i, i] += y + 0.5j * ln.charging_b
        Y[j, j] += y + 0.5j * ln.charging_b
        Y[i, j] -= y
        Y[j, i] -= y
    load_totals: dict[int, complex] = {}
    for ld in grid.loads:
        load_totals[ld.bus] = load_totals.get(ld.bus, 0.0) + ld.shunt_admittance()
    if load_overrides:
        for bus_id, y in load_overrides.items():
            if bus_id not in idx:
                raise TopologyError(f"load override at unknown bus {bus_id}")
            load_totals[bus_id] = y
    for bus_id, y in load_totals.items():
        Y[idx[bus_id], idx[bus_id]] += y
    if fault_shunts:
        for bus_id, y in fault_shunts.items():
            if bus_id not in idx:
                raise TopologyError(f"fault shunt at unknown bus {bus_id}")
            Y[idx[bus_id], idx[bus_id]] += y
    return AdmittanceMatrix(tuple(grid.bus_ids), Y)


def detect_islands(
    buses: tuple[Bus, ...],
    lines: tuple[Line, ...],
    open_lines: frozenset[int] | None = None,
) -> list[tuple[int, ...]]:
    """Connected components over closed lines, as sorted bus-id tuples."""
    open_lines = open_lines or frozenset()
    adj: dict[int, set[int]] = {b.id: set() for b in buses}
    for ln in lines:
        if ln.status == "open" or ln.id in open_lines:
            continue
        adj[ln.from_bus].add(ln.to_bus)
        adj[ln.to_bus].add(ln.from_bus)
    seen: set[int] = set()
    islands: list[tuple[int, ...]] = []
    for b in buses:
        if b.id in seen:
            continue
        stack, comp = [b.id], []
        seen.add(b.id)
        while stack:
            u = stack.pop()
            comp.append(u)
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        islands.append(tuple(sorted(comp)))
    islands.sort(key=lambda c: c[0])
    return islands


def solve_bus_voltages(
    ymat: AdmittanceMatrix,
    devices: list[DeviceSource],
    islands: list[tuple[int, ...]] | None = None,
) -> NetworkSolution:
    """Solve Y_aug V = I_source for all bus phasors and device injections.

    Each island is solved independently; islands without any device are
    declared collapsed and their voltages zeroed.
    """
    bus_ids = ymat.bus_ids
    pos = {bid: i for i, bid in enumerate(bus_ids)}
    for d in devices:
        if d.bus not in pos:
            raise TopologyError(f"device at unknown bus {d.bus}")
    n = ymat.n
    if islands is None:
        islands = [tuple(bus_ids)]
    voltages = np.zeros(n, dtype=complex)
    collapsed: list[tuple[int, ...]] = []
    for comp in islands:
        comp_idx = [pos[b] for b in comp]
        comp_devs = [d for d in devices if d.bus in comp]
        if not comp_devs:
            collapsed.append(comp)
            continue
        sub = ymat.Y[np.ix_(comp_idx, comp_idx)].copy()
        rhs = np.zeros(len(comp_idx), dtype=complex)
        local = {b: i for i, b in enumerate(comp)}
        for d in comp_devs:
            k = local[d.bus]
            sub[k, k] += d.coupling_y
            rhs[k] += d.coupling_y * d.emf
        try:
            v = np.linalg.solve(sub, rhs)
        except np.linalg.LinAlgError:
            collapsed.append(comp)
            continue
        voltages[comp_idx] = v
    injections: list[tuple[float, float]] = []
    for d in devices:
        vt = voltages[pos[d.bus]]
        i_inj = d.coupling_y * (d.emf - vt)
        s = vt * np.conj(i_inj)
        injections.append((float(s.real), float(s.imag)))
    return NetworkSolution(bus_ids, voltages, injections, collapsed)


def branch_losses(grid: GridModel, ymat: AdmittanceMatrix, voltages: np.ndarray,
                  open_lines: frozenset[int] | None = None) -> float:
    """Active power dissipated in all closed series branches."""
    open_lines = open_lines or frozenset()
    pos = {bid: i for i, bid in enumerate(ymat.bus_ids)}
    total = 0.0
    for ln in grid.lines:
        if ln.status == "open" or ln.id in open_lines:
            continue
        vi, vj = voltages[pos[ln.from_bus]], voltages[pos[ln.to_bus]]
        total += ln.g * abs(vi - vj) ** 2
    return total


@dataclass(frozen=True)
class DispatchTarget:
    bus: int
    p_pu: float
    v_pu: float = 1.0
    coupling_x: float = DEFAULT_COUPLING_X


@dataclass
class SteadyState:
    bus_ids: tuple[int, ...]
    voltages: np.ndarray
    device_emfs: list[complex]
    device_pq: list[tuple[float, float]]
    iterations: int
    mismatch: float


def _newton_island(Y: np.ndarray, p_spec: np.ndarray, v_spec: np.ndarray,
                   slack: int, pv: list[int], pq: list[int],
                   tol: float, max_iter: int) -> tuple[np.ndarray, int, float]:
    """Polar Newton power flow on one island; loads live inside Y as shunts."""
    n = Y.shape[0]
    G, B = Y.real, Y.imag
    theta = np.zeros(n)
    vm = np.ones(n)
    vm[slack] = v_spec[slack]
    for i in pv:
        vm[i] = v_spec[i]
    order_p = pv + pq
    for it in range(max_iter + 1):
        V = vm * np.exp(1j * theta)
        S = V * np.conj(Y @ V)
        dp = p_spec[order_p] - S.real[order_p]
        dq = -S.imag[pq]  # PQ buses: loads are in Y, so net injection is zero
        mis = np.concatenate([dp, dq])
        err = float(np.max(np.abs(mis))) if mis.size else 0.0
        if err < tol:
            return V, it, err
        if it == max_iter:
            raise DispatchError(
                f"power flow did not converge in {max_iter} iterations "
                f"(final mismatch {err:.3e} pu)", mismatch=err)
        dt = theta[:, None] - theta[None, :]
        cf = np.cos(dt)
        sf = np.sin(dt)
        vv = vm[:, None] * vm[None, :]
        # standard polar Jacobian blocks
        H = vv * (G * sf - B * cf)
        np.fill_diagonal(H, -S.imag - B.diagonal() * vm**2)
        N = vm[:, None] * (G * cf + B * sf)
        np.fill_diagonal(N, S.real / vm + G.diagonal() * vm)
        J = -vv * (G * cf + B * sf)
        np.fill_diagonal(J, S.real - G.diagonal() * vm**2)
        L = vm[:, None] * (G * sf - B * cf)
        np.fill_diagonal(L, S.imag / vm - B.diagonal() * vm)
        top = np.hstack([H[np.ix_(order_p, order_p)], N[np.ix_(order_p, pq)]])
        bot = np.hstack([J[np.ix_(pq, order_p)], L[np.ix_(pq, pq)]])
        Jac = np.vstack([top, bot])
        dx = np.linalg.solve(Jac, mis)
        theta[order_p] += dx[: len(order_p)]
        vm[pq] += dx[len(order_p):]
    raise AssertionError("unreachable")


def init_steady_state(
    grid: GridModel,
    dispatch: list[DispatchTarget],
    fault_shunts: dict[int, complex] | None = None,
    open_lines: frozenset[int] | None = None,
    load_overrides: dict[int, complex] | None = None,
    tol: float = 1e-8,
    max_iter: int = 50,
) -> SteadyState:
    """Newton power flow, then back-compute device internal phasors.

    The first device of each island is its slack; the remaining device buses
    are PV at their dispatch targets. Device internal phasors are chosen so
    that all device-state derivatives vanish at t = 0.
    """
    if not dispatch:
        raise DispatchError("no devices to dispatch")
    total_load = sum(ld.p_mw for ld in grid.loads) / SYSTEM_BASE_MVA
    total_gen = sum(d.p_pu for d in dispatch)
    if total_load > 0 and total_gen < 0.8 * total_load:
        raise DispatchError(
            f"infeasible dispatch: targets {total_gen:.3f} pu cover less than "
            f"80% of load {total_load:.3f} pu")
    ymat = build_admittance(grid, fault_shunts=fault_shunts,
                            open_lines=open_lines, load_overrides=load_overrides)
    pos = {bid: i for i, bid in enumerate(ymat.bus_ids)}
    islands = detect_islands(grid.buses, grid.lines, open_lines)
    voltages = np.zeros(ymat.n, dtype=complex)
    iterations, mismatch = 0, 0.0
    for comp in islands:
        comp_devs = [d for d in dispatch if d.bus in comp]
        if not comp_devs:
            continue  # collapsed at t=0; stays dark
        comp_idx = [pos[b] for b in comp]
        local = {b: i for i, b in enumerate(comp)}
        sub = ymat.Y[np.ix_(comp_idx, comp_idx)]
        p_spec = np.zeros(len(comp))
        v_spec = np.ones(len(comp))
        slack = local[comp_devs[0].bus]
        v_spec[slack] = comp_devs[0].v_pu
        pv = []
        for d in comp_devs[1:]:
            k = local[d.bus]
            pv.append(k)
            p_spec[k] = d.p_pu
            v_spec[k] = d.v_pu
        pq = [i for i in range(len(comp)) if i != slack and i not in pv]
        V, it, err = _newton_island(sub, p_spec, v_spec, slack, pv, pq, tol, max_iter)
        voltages[comp_idx] = V
        iterations = max(iterations, it)
        mismatch = max(mismatch, err)
    emfs: list[complex] = []
    pqs: list[tuple[float, float]] = []
    for d in dispatch:
        vt = voltages[pos[d.bus]]
        comp = next(c for c in islands if d.bus in c)
        comp_idx = [pos[b] for b in comp]
        local = {b: i for i, b in enumerate(comp)}
        i_inj = (ymat.Y[np.ix_(comp_idx, comp_idx)] @ voltages[comp_idx])[local[d.bus]]
        y_c = 1.0 / complex(0.0, d.coupling_x)
        emf = vt + i_inj / y_c
        s = vt * np.conj(i_inj)
        emfs.append(complex(emf))
        pqs.append((float(s.real), float(s.imag)))
    return SteadyState(ymat.bus_ids, voltages, emfs, pqs, iterations, mismatch)
