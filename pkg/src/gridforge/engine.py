"""Coupled differential-algebraic simulation engine.

Device ODE states advance with classical fixed-step RK4; the network is
re-solved algebraically at every integrator stage so power measurements are
stage-consistent. Timed events edit topology between steps (matrices are
rebuilt, never mutated), and fault-on intervals automatically refine the
timestep.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from . import network as net
from .network import GridModel, TopologyError
from .sg import SgParams, SgState, swing_derivatives
from .vsg import VsgParams, VsgState, VsgMeasurements, vsg_derivatives

NOMINAL_HZ = net.NOMINAL_HZ
TWO_PI = 2.0 * math.pi

EVENT_KINDS = frozenset({
    "apply_fault", "clear_fault", "trip_line", "reclose_line",
    "load_step", "disconnect_device",
})


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class DeviceSpec:
    id: str
    bus: int
    kind: str  # vsg | sg
    vsg: VsgParams | None = None
    sg: SgParams | None = None
    coupling_x: float = net.DEFAULT_COUPLING_X
    dispatch_p_mw: float = 0.0
    v_setpoint_pu: float = 1.0
    capacity_mva: float = 100.0
    # excitation PI used by SG devices (VSG devices carry theirs in VsgParams)
    exc_c_p: float = 2.0
    exc_c_i: float = 5.0
    exc_v_min: float = 0.8
    exc_v_max: float = 1.2
    # first-order lag between the PI output and the applied source magnitude;
    # without it the per-step hold plus the instant algebraic network forms a
    # period-two limit cycle at typical proportional gains
    exc_lag_s: float = 0.05

    def __post_init__(self):
        if self.kind not in ("vsg", "sg"):
            raise ValueError(f"device {self.id}: unknown kind {self.kind!r}")
        if self.kind == "vsg" and self.vsg is None:
            raise ValueError(f"device {self.id}: vsg params required")
        if self.kind == "sg" and self.sg is None:
            raise ValueError(f"device {self.id}: sg params required")


@dataclass(frozen=True)
class Event:
    time: float
    kind: str
    bus: int | None = None
    line: int | None = None
    device: str | None = None
    shunt_g: float = net.DEFAULT_FAULT_CONDUCTANCE
    dp_mw: float = 0.0
    dq_mvar: float = 0.0

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {self.kind!r}")


@dataclass(frozen=True)
class Scenario:
    name: str
    grid: GridModel
    devices: tuple[DeviceSpec, ...]
    events: tuple[Event, ...] = ()
    dt: float = 1e-3
    duration: float = 10.0
    recording_stride: int = 10
    fault_refine: int = 10

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.duration <= 0:
            raise ValueError("duration must be positive")
        if self.recording_stride < 1:
            raise ValueError("recording_stride must be >= 1")
        times = [e.time for e in self.events]
        if times != sorted(times):
            raise ValueError("events must be sorted by time")
        bus_ids = set(b.id for b in self.grid.buses)
        line_ids = set(ln.id for ln in self.grid.lines)
        dev_ids = set()
        for d in self.devices:
            if d.bus not in bus_ids:
                raise TopologyError(f"device {d.id} at unknown bus {d.bus}")
            if d.id in dev_ids:
                raise ValueError(f"duplicate device id {d.id}")
            dev_ids.add(d.id)
        for e in self.events:
            if e.kind in ("trip_line", "reclose_line") and e.line not in line_ids:
                raise TopologyError(f"event references unknown line {e.line}")
            if e.kind in ("apply_fault", "clear_fault", "load_step") and e.bus not in bus_ids:
                raise TopologyError(f"event references unknown bus {e.bus}")
            if e.kind == "disconnect_device" and e.device not in dev_ids:
                raise TopologyError(f"event references unknown device {e.device!r}")

    @property
    def disturbance_time(self) -> float | None:
        return self.events[0].time if self.events else None


@dataclass
class Metrics:
    nadir_hz: float
    rocof_max_hz_s: float
    recovery_time_s: float  # inf when never recovered
    max_sg_angle_spread_rad: float
    freq_std_final_hz: float
    min_bus_v_pu: float
    survived: bool

    def as_items(self) -> list[tuple[str, object]]:
        return [
            ("nadir_hz", self.nadir_hz),
            ("rocof_max_hz_s", self.rocof_max_hz_s),
            ("recovery_time_s", self.recovery_time_s),
            ("max_sg_angle_spread_rad", self.max_sg_angle_spread_rad),
            ("freq_std_final_hz", self.freq_std_final_hz),
            ("min_bus_v_pu", self.min_bus_v_pu),
            ("survived", self.survived),
        ]


@dataclass
class TimeSeries:
    t: np.ndarray
    device_ids: list[str]
    device_kinds: list[str]
    freq_hz: np.ndarray      # (T, D), NaN when disconnected
    theta_rad: np.ndarray    # output/rotor angle relative to island reference
    gamma_pu: np.ndarray
    p_mw: np.ndarray
    q_mvar: np.ndarray
    v_out_pu: np.ndarray
    island: np.ndarray       # (T, D) int island index, -1 when disconnected
    bus_ids: list[int]
    bus_v_pu: np.ndarray     # (T, N)
    residual_pu: np.ndarray  # (T,) power balance residual
    disturbance_t: float | None
    any_collapse: bool


@dataclass
class SimulationResult:
    scenario: Scenario
    series: TimeSeries
    metrics: Metrics
    final_deriv_max: float
    final_device_ops: list[dict]


# ---------------------------------------------------------------------------
# runtime structures
# ---------------------------------------------------------------------------


class _Dev:
    __slots__ = ("spec", "kind", "bus", "y_c", "active", "x", "v_set",
                 "v_err_int", "v_err_prev", "vsg", "sgp", "v_ref",
                 "v_setpoint", "c_p", "c_i", "v_min", "v_max", "lag",
                 "island")

    def __init__(self, spec: DeviceSpec):
        self.spec = spec
        self.kind = spec.kind
        self.bus = spec.bus
        self.y_c = 1.0 / complex(0.0, spec.coupling_x)
        self.active = True
        self.island = -1
        # states: vsg -> [omega, theta, gamma]; sg -> [delta, omega]
        self.x = [0.0, 0.0, 0.0] if spec.kind == "vsg" else [0.0, 0.0]
        self.v_set = 1.0
        self.v_err_int = 0.0
        self.v_err_prev = 0.0
        self.vsg = spec.vsg
        self.sgp = spec.sg
        if spec.kind == "vsg":
            self.v_ref = spec.vsg.v_ref
            self.c_p, self.c_i = spec.vsg.c_p, spec.vsg.c_i
            self.v_min, self.v_max = spec.vsg.v_min, spec.vsg.v_max
        else:
            self.v_ref = 1.0
            self.c_p, self.c_i = spec.exc_c_p, spec.exc_c_i
            self.v_min, self.v_max = spec.exc_v_min, spec.exc_v_max
        self.v_setpoint = 1.0
        self.lag = spec.exc_lag_s

    def source_angle(self, x: list[float]) -> float:
        if self.kind == "vsg":
            return x[1] - self.vsg.c_theta * x[2]
        return x[0]

    def electrical_freq_hz(self) -> float:
        if self.kind == "vsg":
            return NOMINAL_HZ + (self.x[0] - self.vsg.c_omega * self.x[2]) / TWO_PI
        return NOMINAL_HZ + self.x[1] / TWO_PI


class _Island:
    __slots__ = ("comp", "idx", "local", "lu", "devices")

    def __init__(self, comp, idx, local, lu, devices):
        self.comp = comp
        self.idx = idx
        self.local = local
        self.lu = lu
        self.devices = devices


class Simulation:
    """Owns one scenario run; strictly sequential."""

    def __init__(self, scenario: Scenario):
        self.sc = scenario
        self.grid = scenario.grid
        self.t = 0.0
        self.pos = {b.id: i for i, b in enumerate(self.grid.buses)}
        self.n_bus = len(self.grid.buses)
        self.open_lines: set[int] = set()
        self.fault_shunts: dict[int, complex] = {}
        self.load_overrides: dict[int, complex] = {}
        self.pending = list(scenario.events)
        self.any_collapse = False
        self.devices = [_Dev(d) for d in scenario.devices]
        self._init_equilibrium()
        self._rebuild_topology()

    # -- initialization ----------------------------------------------------

    def _init_equilibrium(self):
        dispatch = [
            net.DispatchTarget(d.spec.bus, d.spec.dispatch_p_mw / net.SYSTEM_BASE_MVA,
                               d.spec.v_setpoint_pu, d.spec.coupling_x)
            for d in self.devices
        ]
        ss = net.init_steady_state(self.grid, dispatch)
        self.initial_state = ss
        for d, emf, (p, q) in zip(self.devices, ss.device_emfs, ss.device_pq):
            vt = ss.voltages[self.pos[d.bus]]
            d.v_setpoint = abs(emf)
            d.v_set = abs(emf)
            d.v_ref = abs(vt)
            if d.kind == "vsg":
                d.x = [0.0, cmath.phase(emf), 0.0]
                d.vsg = replace(d.vsg, p_ref=p, v_ref=abs(vt), v_setpoint=abs(emf))
            else:
                d.x = [cmath.phase(emf), 0.0]
                d.sgp = replace(d.sgp, p_mech=p)

    # -- topology ----------------------------------------------------------

    def _rebuild_topology(self):
        ymat = net.build_admittance(
            self.grid, fault_shunts=self.fault_shunts,
            open_lines=frozenset(self.open_lines),
            load_overrides=self.load_overrides)
        self.ymat = ymat
        comps = net.detect_islands(self.grid.buses, self.grid.lines,
                                   frozenset(self.open_lines))
        self.islands: list[_Island] = []
        self.collapsed: list[tuple[int, ...]] = []
        for d in self.devices:
            d.island = -1
        k = 0
        for comp in comps:
            devs = [d for d in self.devices if d.active and d.bus in comp]
            has_load = any(
                abs(self.ymat.Y[self.pos[b], self.pos[b]]) > 0 for b in comp)
            if not devs:
                if has_load or len(comp) > 1:
                    self.collapsed.append(comp)
                    self.any_collapse = True
                continue
            idx = np.array([self.pos[b] for b in comp])
            local = {b: i for i, b in enumerate(comp)}
            sub = ymat.Y[np.ix_(idx, idx)].copy()
            for d in devs:
                kk = local[d.bus]
                sub[kk, kk] += d.y_c
            lu = lu_factor(sub)
            isl = _Island(comp, idx, local, lu, devs)
            self.islands.append(isl)
            for d in devs:
                d.island = k
            k += 1

    # -- events ------------------------------------------------------------

    def apply_due_events(self):
        changed = False
        while self.pending and self.pending[0].time <= self.t + 1e-12:
            e = self.pending.pop(0)
            changed = True
            if e.kind == "apply_fault":
                self.fault_shunts[e.bus] = (
                    self.fault_shunts.get(e.bus, 0.0) + complex(e.shunt_g, 0.0))
            elif e.kind == "clear_fault":
                self.fault_shunts.pop(e.bus, None)
            elif e.kind == "trip_line":
                self.open_lines.add(e.line)
            elif e.kind == "reclose_line":
                self.open_lines.discard(e.line)
            elif e.kind == "load_step":
                current = self.load_overrides.get(e.bus)
                if current is None:
                    current = sum(
                        (ld.shunt_admittance() for ld in self.grid.loads
                         if ld.bus == e.bus), 0.0)
                delta = complex(e.dp_mw, -e.dq_mvar) / net.SYSTEM_BASE_MVA
                self.load_overrides[e.bus] = current + delta
            elif e.kind == "disconnect_device":
                for d in self.devices:
                    if d.spec.id == e.device:
                        d.active = False
        if changed:
            self._rebuild_topology()
        return changed

    @property
    def fault_active(self) -> bool:
        return bool(self.fault_shunts)

    # -- network solve -----------------------------------------------------

    def _solve(self, xs: list[list[float]]):
        """Solve all islands for bus phasors and device measurements.

        Returns (voltages complex array, list of (p, q, v_t) per device).
        """
        voltages = np.zeros(self.n_bus, dtype=complex)
        meas: list[tuple[float, float, float] | None] = [None] * len(self.devices)
        for isl in self.islands:
            rhs = np.zeros(len(isl.comp), dtype=complex)
            for d in isl.devices:
                di = self.devices.index(d)
                ang = d.source_angle(xs[di])
                rhs[isl.local[d.bus]] += d.y_c * (d.v_set * cmath.exp(1j * ang))
            v = lu_solve(isl.lu, rhs)
            voltages[isl.idx] = v
            for d in isl.devices:
                di = self.devices.index(d)
                vt = v[isl.local[d.bus]]
                ang = d.source_angle(xs[di])
                emf = d.v_set * cmath.exp(1j * ang)
                i_inj = d.y_c * (emf - vt)
                s = vt * i_inj.conjugate()
                meas[di] = (s.real, s.imag, abs(vt))
        return voltages, meas

    def _derivatives(self, xs: list[list[float]], meas) -> list[list[float]]:
        out = []
        for di, d in enumerate(self.devices):
            if not d.active:
                out.append([0.0] * len(d.x))
                continue
            p, q, v_t = meas[di]
            if not math.isfinite(p):
                raise SimulationError(
                    f"non-finite state at device {d.spec.id}, t={self.t}")
            if d.kind == "vsg":
                st = VsgState(xs[di][0], xs[di][1], xs[di][2])
                dom, dth, dga = vsg_derivatives(st, d.vsg, VsgMeasurements(p, q, v_t))
                out.append([dom, dth, dga])
            else:
                dd, dw = swing_derivatives(SgState(xs[di][0], xs[di][1]), d.sgp, p)
                out.append([dd, dw])
        return out

    # -- integration -------------------------------------------------------

    def step(self, dt: float):
        """One RK4 step; the network is re-solved at every stage."""
        devs = self.devices
        x0 = [list(d.x) for d in devs]

        def rhs(xs):
            _, meas = self._solve(xs)
            return self._derivatives(xs, meas)

        k1 = rhs(x0)
        k2 = rhs([[x + 0.5 * dt * k for x, k in zip(xd, kd)] for xd, kd in zip(x0, k1)])
        k3 = rhs([[x + 0.5 * dt * k for x, k in zip(xd, kd)] for xd, kd in zip(x0, k2)])
        k4 = rhs([[x + dt * k for x, k in zip(xd, kd)] for xd, kd in zip(x0, k3)])
        for di, d in enumerate(devs):
            if not d.active:
                continue
            d.x = [x + dt / 6.0 * (a + 2 * b + 2 * c + e)
                   for x, a, b, c, e in zip(x0[di], k1[di], k2[di], k3[di], k4[di])]
            for v in d.x:
                if not math.isfinite(v):
                    raise SimulationError(
                        f"non-finite state at device {d.spec.id}, t={self.t}")
        self.t += dt
        # zero-order-hold excitation update from the post-step measurement
        voltages, meas = self._solve([d.x for d in devs])
        for di, d in enumerate(devs):
            if not d.active:
                continue
            _, _, v_t = meas[di]
            err = d.v_ref - v_t
            cand = d.v_err_int + 0.5 * dt * (d.v_err_prev + err)
            raw = d.v_setpoint + d.c_p * err + d.c_i * cand
            if (raw > d.v_max and err > 0) or (raw < d.v_min and err < 0):
                cand = d.v_err_int  # anti-windup freeze
            d.v_err_int = cand
            d.v_err_prev = err
            target = d.v_setpoint + d.c_p * err + d.c_i * cand
            target = min(max(target, d.v_min), d.v_max)
            if d.lag > 0:
                d.v_set += dt / d.lag * (target - d.v_set)
            else:
                d.v_set = target
            d.v_set = min(max(d.v_set, d.v_min), d.v_max)
        return voltages, meas

    # -- measurement helpers ------------------------------------------------

    def _record(self, voltages, meas, rec):
        devs = self.devices
        refs = {}
        for isl_i, isl in enumerate(self.islands):
            refs[isl_i] = isl.devices[0].source_angle(isl.devices[0].x)
        row_f, row_th, row_g, row_p, row_q, row_v, row_i = [], [], [], [], [], [], []
        p_dev_total = 0.0
        for di, d in enumerate(devs):
            if not d.active:
                row_f.append(math.nan)
                row_th.append(math.nan)
                row_g.append(math.nan)
                row_p.append(math.nan)
                row_q.append(math.nan)
                row_v.append(math.nan)
                row_i.append(-1)
                continue
            p, q, v_t = meas[di]
            p_dev_total += p
            row_f.append(d.electrical_freq_hz())
            row_th.append(d.source_angle(d.x) - refs[d.island])
            row_g.append(d.x[2] if d.kind == "vsg" else 0.0)
            row_p.append(p * net.SYSTEM_BASE_MVA)
            row_q.append(q * net.SYSTEM_BASE_MVA)
            row_v.append(v_t)
            row_i.append(d.island)
        # power balance: injections vs constant-impedance loads, branch and
        # fault-shunt dissipation
        load_p = 0.0
        for bus_id, y in self._current_load_shunts().items():
            load_p += y.real * abs(voltages[self.pos[bus_id]]) ** 2
        loss = net.branch_losses(self.grid, self.ymat, voltages,
                                 frozenset(self.open_lines))
        for bus_id, y in self.fault_shunts.items():
            loss += y.real * abs(voltages[self.pos[bus_id]]) ** 2
        residual = p_dev_total - load_p - loss
        rec["t"].append(self.t)
        rec["f"].append(row_f)
        rec["th"].append(row_th)
        rec["g"].append(row_g)
        rec["p"].append(row_p)
        rec["q"].append(row_q)
        rec["v"].append(row_v)
        rec["isl"].append(row_i)
        rec["busv"].append(np.abs(voltages))
        rec["res"].append(residual)

    def _current_load_shunts(self) -> dict[int, complex]:
        shunts: dict[int, complex] = {}
        for ld in self.grid.loads:
            shunts[ld.bus] = shunts.get(ld.bus, 0.0) + ld.shunt_admittance()
        shunts.update(self.load_overrides)
        return shunts

    def final_deriv_max(self) -> float:
        """Largest state derivative, with angle rates taken relative to the
        island's common rotation (each island carries its own reference)."""
        _, meas = self._solve([d.x for d in self.devices])
        ders = self._derivatives([d.x for d in self.devices], meas)
        common: dict[int, list[float]] = {}
        for d, dd in zip(self.devices, ders):
            if d.active:
                common.setdefault(d.island, []).append(
                    dd[1] if d.kind == "vsg" else dd[0])
        mean_rate = {k: sum(v) / len(v) for k, v in common.items()}
        worst = 0.0
        for d, dd in zip(self.devices, ders):
            if not d.active:
                continue
            rel = list(dd)
            if d.kind == "vsg":
                rel[1] -= mean_rate[d.island]
            else:
                rel[0] -= mean_rate[d.island]
            worst = max(worst, max(abs(v) for v in rel))
        return worst

    def device_operating_points(self) -> list[dict]:
        voltages, meas = self._solve([d.x for d in self.devices])
        ops = []
        for di, d in enumerate(self.devices):
            if not d.active:
                ops.append({"id": d.spec.id, "active": False})
                continue
            p, q, v_t = meas[di]
            vt = voltages[self.pos[d.bus]]
            ang = d.source_angle(d.x)
            ops.append({
                "id": d.spec.id, "active": True, "kind": d.kind,
                "p_pu": p, "q_pu": q, "v_t": v_t,
                "emf_mag": d.v_set, "dtheta": ang - cmath.phase(vt),
                "coupling_b": 1.0 / d.spec.coupling_x,
                "gamma": d.x[2] if d.kind == "vsg" else 0.0,
                "vsg": d.vsg, "sg": d.sgp,
            })
        return ops


def run(scenario: Scenario) -> SimulationResult:
    """Run a scenario end to end and compute metrics."""
    sim = Simulation(scenario)
    rec = {k: [] for k in ("t", "f", "th", "g", "p", "q", "v", "isl", "busv", "res")}
    sim.apply_due_events()
    voltages, meas = sim._solve([d.x for d in sim.devices])
    sim._record(voltages, meas, rec)
    n_steps = int(round(scenario.duration / scenario.dt))
    for k in range(1, n_steps + 1):
        sim.apply_due_events()
        if sim.fault_active and scenario.fault_refine > 1:
            sub = scenario.dt / scenario.fault_refine
            for _ in range(scenario.fault_refine):
                voltages, meas = sim.step(sub)
            sim.t = k * scenario.dt  # suppress accumulation drift
        else:
            voltages, meas = sim.step(scenario.dt)
            sim.t = k * scenario.dt
        if k % scenario.recording_stride == 0:
            sim._record(voltages, meas, rec)
    series = TimeSeries(
        t=np.array(rec["t"]),
        device_ids=[d.id for d in scenario.devices],
        device_kinds=[d.kind for d in scenario.devices],
        freq_hz=np.array(rec["f"]),
        theta_rad=np.array(rec["th"]),
        gamma_pu=np.array(rec["g"]),
        p_mw=np.array(rec["p"]),
        q_mvar=np.array(rec["q"]),
        v_out_pu=np.array(rec["v"]),
        island=np.array(rec["isl"], dtype=int),
        bus_ids=list(scenario.grid.bus_ids),
        bus_v_pu=np.array(rec["busv"]),
        residual_pu=np.array(rec["res"]),
        disturbance_t=scenario.disturbance_time,
        any_collapse=sim.any_collapse,
    )
    metrics = compute_metrics(series)
    return SimulationResult(scenario, series, metrics, sim.final_deriv_max(),
                            sim.device_operating_points())


def compute_metrics(series: TimeSeries) -> Metrics:
    """Recompute all headline metrics from a recorded series alone."""
    t = series.t
    if t.size == 0:
        raise ValueError("empty series")
    with np.errstate(invalid="ignore"):
        f_sys = np.nanmean(series.freq_hz, axis=1)
    nadir = float(np.nanmin(f_sys))
    # RoCoF: centered differences over a 100 ms window
    rocof = 0.0
    if t.size > 2:
        dt_rec = t[1] - t[0]
        k = max(1, int(round(0.05 / dt_rec)))
        if t.size > 2 * k:
            diffs = (f_sys[2 * k:] - f_sys[:-2 * k]) / (t[2 * k:] - t[:-2 * k])
            finite = diffs[np.isfinite(diffs)]
            if finite.size:
                rocof = float(np.max(np.abs(finite)))
    # recovery: first instant after the disturbance holding |f-60| < 0.05 Hz
    # for a sustained 1 s
    t_d = series.disturbance_t if series.disturbance_t is not None else 0.0
    ok = np.abs(f_sys - NOMINAL_HZ) < 0.05
    recovery = math.inf
    for i in range(t.size):
        if t[i] < t_d or t[i] + 1.0 > t[-1] + 1e-9:
            continue
        j = np.searchsorted(t, t[i] + 1.0, side="right")
        window = ok[i:j]
        if window.size and bool(np.all(window)):
            recovery = float(t[i] - t_d)
            break
    spread = 0.0
    sg_cols = [i for i, k in enumerate(series.device_kinds) if k == "sg"]
    if len(sg_cols) >= 2:
        for row in range(t.size):
            groups: dict[int, list[float]] = {}
            for c in sg_cols:
                isl = int(series.island[row, c])
                if isl >= 0:
                    groups.setdefault(isl, []).append(series.theta_rad[row, c])
            for vals in groups.values():
                if len(vals) >= 2:
                    spread = max(spread, max(vals) - min(vals))
    final_mask = t >= t[-1] - 2.0
    final_f = f_sys[final_mask]
    final_f = final_f[np.isfinite(final_f)]
    freq_std = float(np.std(final_f)) if final_f.size else 0.0
    min_v = float(np.min(series.bus_v_pu)) if series.bus_v_pu.size else 0.0
    survived = (not series.any_collapse) and spread < math.pi
    return Metrics(nadir, rocof, recovery, spread, freq_std, min_v, survived)
