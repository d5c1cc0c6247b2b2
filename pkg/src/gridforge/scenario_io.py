"""Scenario files (TOML) and result files (delimited text).

The scenario schema is strict: unknown keys are rejected with their location
so typos surface immediately. All dimensional keys carry a unit suffix
(``p_max_mw``, ``tau_omega_s``, ``x_pu``). Results round-trip exactly: floats
are written with ``repr`` so a parse of the emitted file reproduces the
arrays bit for bit.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import network as net
from .engine import DeviceSpec, Event, Metrics, Scenario, TimeSeries
from .network import Bus, GridModel, Line, LoadSpec
from .sg import SgParams, damping_from_reactances
from .vsg import VsgParams


class ScenarioFormatError(ValueError):
    pass


def _reject_unknown(table: dict, allowed: set[str], where: str) -> None:
    extra = set(table) - allowed
    if extra:
        raise ScenarioFormatError(
            f"{where}: unknown key(s) {sorted(extra)}; allowed: {sorted(allowed)}")


def _require(table: dict, key: str, where: str):
    if key not in table:
        raise ScenarioFormatError(f"{where}: missing required key {key!r}")
    return table[key]


_SIM_KEYS = {"dt_s", "duration_s", "recording_stride", "fault_refine"}
_BUS_KEYS = {"id", "kind", "nominal_kv"}
_LINE_KEYS = {"id", "from", "to", "r_pu", "x_pu", "g_pu", "b_pu",
              "charging_b_pu", "status"}
_LOAD_KEYS = {"bus", "p_mw", "q_mvar"}
_DEV_KEYS = {"id", "bus", "kind", "dispatch_p_mw", "v_setpoint_pu",
             "coupling_x_pu", "capacity_mva", "exc_lag_s", "vsg", "sg"}
_VSG_KEYS = {"tau_omega_s", "tau_gamma_s", "c_alpha", "c_theta", "c_omega",
             "p_max_mw", "p_min_mw", "c_p", "c_i", "v_min_pu", "v_max_pu"}
_SG_KEYS = {"h_s", "d_pu", "x_pu", "xq_t_pu", "xq_st_pu", "tq_st_s",
            "governor_droop", "auto_damping"}
_EVENT_KEYS = {"t_s", "kind", "bus", "line", "device", "conductance_pu",
               "dp_mw", "dq_mvar"}


def parse_scenario(text: str, name: str = "scenario") -> Scenario:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioFormatError(f"invalid TOML: {exc}") from exc
    _reject_unknown(doc, {"name", "simulation", "bus", "line", "load",
                          "device", "event"}, "top level")
    name = doc.get("name", name)
    sim = doc.get("simulation", {})
    _reject_unknown(sim, _SIM_KEYS, "[simulation]")

    buses = []
    for i, tb in enumerate(doc.get("bus", [])):
        where = f"[[bus]] #{i + 1}"
        _reject_unknown(tb, _BUS_KEYS, where)
        buses.append(Bus(
            id=int(_require(tb, "id", where)),
            kind=str(tb.get("kind", "passive")),
            nominal_kv=float(tb.get("nominal_kv", net.NETWORK_BASE_KV)),
        ))

    lines = []
    for i, tl in enumerate(doc.get("line", [])):
        where = f"[[line]] #{i + 1}"
        _reject_unknown(tl, _LINE_KEYS, where)
        if "g_pu" in tl or "b_pu" in tl:
            if "r_pu" in tl or "x_pu" in tl:
                raise ScenarioFormatError(
                    f"{where}: give either r_pu/x_pu or g_pu/b_pu, not both")
            g = float(tl.get("g_pu", 0.0))
            b = float(_require(tl, "b_pu", where))
        else:
            r = float(tl.get("r_pu", 0.0))
            x = float(_require(tl, "x_pu", where))
            z2 = r * r + x * x
            if z2 <= 0:
                raise ScenarioFormatError(f"{where}: zero series impedance")
            g, b = r / z2, x / z2
        lines.append(Line(
            id=int(_require(tl, "id", where)),
            from_bus=int(_require(tl, "from", where)),
            to_bus=int(_require(tl, "to", where)),
            g=g,
            b=b,
            charging_b=float(tl.get("charging_b_pu", 0.0)),
            status=str(tl.get("status", "closed")),
        ))

    loads = []
    for i, tld in enumerate(doc.get("load", [])):
        where = f"[[load]] #{i + 1}"
        _reject_unknown(tld, _LOAD_KEYS, where)
        loads.append(LoadSpec(
            bus=int(_require(tld, "bus", where)),
            p_mw=float(_require(tld, "p_mw", where)),
            q_mvar=float(tld.get("q_mvar", 0.0)),
        ))

    devices = []
    for i, td in enumerate(doc.get("device", [])):
        where = f"[[device]] #{i + 1}"
        _reject_unknown(td, _DEV_KEYS, where)
        kind = str(_require(td, "kind", where))
        vsg = sg = None
        if kind == "vsg":
            tv = _require(td, "vsg", where)
            _reject_unknown(tv, _VSG_KEYS, f"{where}.vsg")
            vsg = VsgParams(
                tau_omega=float(tv.get("tau_omega_s", 0.25)),
                tau_gamma=float(tv.get("tau_gamma_s", 0.1)),
                c_alpha=float(tv.get("c_alpha", 10.0)),
                c_theta=float(tv.get("c_theta", 0.5)),
                c_omega=float(tv.get("c_omega", 6.0)),
                p_ref=0.5 * (float(tv.get("p_min_mw", 0.0))
                             + float(_require(tv, "p_max_mw", f"{where}.vsg")))
                / net.SYSTEM_BASE_MVA,
                p_max=float(_require(tv, "p_max_mw", f"{where}.vsg"))
                / net.SYSTEM_BASE_MVA,
                p_min=float(tv.get("p_min_mw", 0.0)) / net.SYSTEM_BASE_MVA,
                c_p=float(tv.get("c_p", 2.0)),
                c_i=float(tv.get("c_i", 5.0)),
                v_min=float(tv.get("v_min_pu", 0.8)),
                v_max=float(tv.get("v_max_pu", 1.2)),
            )
        elif kind == "sg":
            ts = _require(td, "sg", where)
            _reject_unknown(ts, _SG_KEYS, f"{where}.sg")
            h = float(_require(ts, "h_s", f"{where}.sg"))
            x = float(ts.get("x_pu", 0.1))
            xq_t = float(ts.get("xq_t_pu", 0.5))
            xq_st = float(ts.get("xq_st_pu", 0.2))
            tq_st = float(ts.get("tq_st_s", 0.05))
            if bool(ts.get("auto_damping", True)) and "d_pu" not in ts:
                d = damping_from_reactances(x, xq_t, xq_st, tq_st, 1.0)
            else:
                d = float(ts.get("d_pu", 0.0))
            sg = SgParams(
                m=2.0 * h / net.OMEGA_SYNC, d=d, x=x, xq_t=xq_t,
                xq_st=xq_st, tq_st=tq_st, p_mech=0.0,
                governor_droop=float(ts.get("governor_droop", 0.05)),
            )
        else:
            raise ScenarioFormatError(f"{where}: unknown device kind {kind!r}")
        devices.append(DeviceSpec(
            id=str(_require(td, "id", where)),
            bus=int(_require(td, "bus", where)),
            kind=kind, vsg=vsg, sg=sg,
            coupling_x=float(td.get("coupling_x_pu", net.DEFAULT_COUPLING_X)),
            dispatch_p_mw=float(td.get("dispatch_p_mw", 0.0)),
            v_setpoint_pu=float(td.get("v_setpoint_pu", 1.0)),
            capacity_mva=float(td.get("capacity_mva", net.SYSTEM_BASE_MVA)),
            exc_lag_s=float(td.get("exc_lag_s", 0.05)),
        ))

    events = []
    for i, te in enumerate(doc.get("event", [])):
        where = f"[[event]] #{i + 1}"
        _reject_unknown(te, _EVENT_KEYS, where)
        events.append(Event(
            time=float(_require(te, "t_s", where)),
            kind=str(_require(te, "kind", where)),
            bus=int(te["bus"]) if "bus" in te else None,
            line=int(te["line"]) if "line" in te else None,
            device=str(te["device"]) if "device" in te else None,
            shunt_g=float(te.get("conductance_pu", net.DEFAULT_FAULT_CONDUCTANCE)),
            dp_mw=float(te.get("dp_mw", 0.0)),
            dq_mvar=float(te.get("dq_mvar", 0.0)),
        ))
    events.sort(key=lambda e: e.time)

    try:
        return Scenario(
            name=name,
            grid=GridModel(tuple(buses), tuple(lines), tuple(loads)),
            devices=tuple(devices),
            events=tuple(events),
            dt=float(sim.get("dt_s", 1e-3)),
            duration=float(sim.get("duration_s", 10.0)),
            recording_stride=int(sim.get("recording_stride", 10)),
            fault_refine=int(sim.get("fault_refine", 10)),
        )
    except (ValueError, net.TopologyError) as exc:
        raise ScenarioFormatError(str(exc)) from exc


def load_scenario(path: str) -> Scenario:
    with open(path, "rb") as fh:
        text = fh.read().decode("utf-8")
    import os
    stem = os.path.splitext(os.path.basename(path))[0]
    return parse_scenario(text, name=stem)


def serialize_scenario(sc: Scenario) -> str:
    """Emit TOML whose parse equals the input scenario (fixpoint)."""
    out = io.StringIO()
    w = out.write
    w(f"name = {_toml_str(sc.name)}\n\n")
    w("[simulation]\n")
    w(f"dt_s = {sc.dt!r}\n")
    w(f"duration_s = {sc.duration!r}\n")
    w(f"recording_stride = {sc.recording_stride}\n")
    w(f"fault_refine = {sc.fault_refine}\n")
    for b in sc.grid.buses:
        w("\n[[bus]]\n")
        w(f"id = {b.id}\n")
        w(f"kind = {_toml_str(b.kind)}\n")
        w(f"nominal_kv = {b.nominal_kv!r}\n")
    for ln in sc.grid.lines:
        w("\n[[line]]\n")
        w(f"id = {ln.id}\n")
        w(f"from = {ln.from_bus}\n")
        w(f"to = {ln.to_bus}\n")
        w(f"g_pu = {ln.g!r}\n")
        w(f"b_pu = {ln.b!r}\n")
        w(f"charging_b_pu = {ln.charging_b!r}\n")
        w(f"status = {_toml_str(ln.status)}\n")
    for ld in sc.grid.loads:
        w("\n[[load]]\n")
        w(f"bus = {ld.bus}\n")
        w(f"p_mw = {ld.p_mw!r}\n")
        w(f"q_mvar = {ld.q_mvar!r}\n")
    for d in sc.devices:
        w("\n[[device]]\n")
        w(f"id = {_toml_str(d.id)}\n")
        w(f"bus = {d.bus}\n")
        w(f"kind = {_toml_str(d.kind)}\n")
        w(f"dispatch_p_mw = {d.dispatch_p_mw!r}\n")
        w(f"v_setpoint_pu = {d.v_setpoint_pu!r}\n")
        w(f"coupling_x_pu = {d.coupling_x!r}\n")
        w(f"capacity_mva = {d.capacity_mva!r}\n")
        w(f"exc_lag_s = {d.exc_lag_s!r}\n")
        if d.kind == "vsg":
            p = d.vsg
            w(f"\n[device.vsg]\n")
            w(f"tau_omega_s = {p.tau_omega!r}\n")
            w(f"tau_gamma_s = {p.tau_gamma!r}\n")
            w(f"c_alpha = {p.c_alpha!r}\n")
            w(f"c_theta = {p.c_theta!r}\n")
            w(f"c_omega = {p.c_omega!r}\n")
            w(f"p_max_mw = {p.p_max * net.SYSTEM_BASE_MVA!r}\n")
            w(f"p_min_mw = {p.p_min * net.SYSTEM_BASE_MVA!r}\n")
            w(f"c_p = {p.c_p!r}\n")
            w(f"c_i = {p.c_i!r}\n")
            w(f"v_min_pu = {p.v_min!r}\n")
            w(f"v_max_pu = {p.v_max!r}\n")
        else:
            p = d.sg
            w(f"\n[device.sg]\n")
            w(f"h_s = {p.m * net.OMEGA_SYNC / 2.0!r}\n")
            w(f"d_pu = {p.d!r}\n")
            w(f"x_pu = {p.x!r}\n")
            w(f"xq_t_pu = {p.xq_t!r}\n")
            w(f"xq_st_pu = {p.xq_st!r}\n")
            w(f"tq_st_s = {p.tq_st!r}\n")
            w(f"governor_droop = {p.governor_droop!r}\n")
    for e in sc.events:
        w("\n[[event]]\n")
        w(f"t_s = {e.time!r}\n")
        w(f"kind = {_toml_str(e.kind)}\n")
        if e.bus is not None:
            w(f"bus = {e.bus}\n")
        if e.line is not None:
            w(f"line = {e.line}\n")
        if e.device is not None:
            w(f"device = {_toml_str(e.device)}\n")
        if e.kind == "apply_fault":
            w(f"conductance_pu = {e.shunt_g!r}\n")
        if e.kind == "load_step":
            w(f"dp_mw = {e.dp_mw!r}\n")
            w(f"dq_mvar = {e.dq_mvar!r}\n")
    return out.getvalue()


def _toml_str(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


# ---------------------------------------------------------------------------
# result CSV
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def write_result_csv(series: TimeSeries, metrics: Metrics, path_or_buf) -> None:
    """Delimited output: one header row, data rows, then a ``#`` metrics block.

    Column layout: ``t``, then per device ``<id>_omega_hz``, ``<id>_theta_rad``,
    ``<id>_gamma_pu``, ``<id>_p_out_mw``, ``<id>_q_out_mvar``, ``<id>_v_out_pu``,
    ``<id>_island``, then per bus ``bus<id>_v_pu``, then ``residual_pu``.
    """
    own = isinstance(path_or_buf, str)
    fh = open(path_or_buf, "w", encoding="utf-8") if own else path_or_buf
    try:
        cols = ["t"]
        for dev in series.device_ids:
            cols += [f"{dev}_omega_hz", f"{dev}_theta_rad", f"{dev}_gamma_pu",
                     f"{dev}_p_out_mw", f"{dev}_q_out_mvar", f"{dev}_v_out_pu",
                     f"{dev}_island"]
        cols += [f"bus{b}_v_pu" for b in series.bus_ids]
        cols.append("residual_pu")
        fh.write(",".join(cols) + "\n")
        for row in range(series.t.size):
            parts = [_fmt(series.t[row])]
            for d in range(len(series.device_ids)):
                parts += [
                    _fmt(series.freq_hz[row, d]),
                    _fmt(series.theta_rad[row, d]),
                    _fmt(series.gamma_pu[row, d]),
                    _fmt(series.p_mw[row, d]),
                    _fmt(series.q_mvar[row, d]),
                    _fmt(series.v_out_pu[row, d]),
                    str(int(series.island[row, d])),
                ]
            parts += [_fmt(v) for v in series.bus_v_pu[row]]
            parts.append(_fmt(series.residual_pu[row]))
            fh.write(",".join(parts) + "\n")
        fh.write(f"# device_kinds={','.join(series.device_kinds)}\n")
        if series.disturbance_t is None:
            fh.write("# disturbance_t=none\n")
        else:
            fh.write(f"# disturbance_t={_fmt(series.disturbance_t)}\n")
        fh.write(f"# any_collapse={str(series.any_collapse).lower()}\n")
        for key, val in metrics.as_items():
            if isinstance(val, bool):
                fh.write(f"# {key}={str(val).lower()}\n")
            else:
                fh.write(f"# {key}={_fmt(val)}\n")
    finally:
        if own:
            fh.close()


@dataclass
class ResultFile:
    series: TimeSeries
    metrics: Metrics


def read_result_csv(path_or_buf) -> ResultFile:
    """Parse a result file back into arrays and the recorded metrics block."""
    own = isinstance(path_or_buf, str)
    fh = open(path_or_buf, "r", encoding="utf-8") if own else path_or_buf
    try:
        header = fh.readline().strip()
        cols = header.split(",")
        if not cols or cols[0] != "t":
            raise ScenarioFormatError("result file must start with a 't' column")
        rows = []
        tail: dict[str, str] = {}
        for raw in fh:
            raw = raw.strip()
            if not raw:
                continue
            if raw.startswith("#"):
                body = raw[1:].strip()
                if "=" in body:
                    key, val = body.split("=", 1)
                    tail[key.strip()] = val.strip()
                continue
            rows.append(raw.split(","))
    finally:
        if own:
            fh.close()
    device_ids = []
    for c in cols:
        if c.endswith("_omega_hz"):
            device_ids.append(c[: -len("_omega_hz")])
    bus_ids = [int(c[3:-5]) for c in cols if c.startswith("bus") and c.endswith("_v_pu")]
    n_d, n_b = len(device_ids), len(bus_ids)
    expected = 1 + 7 * n_d + n_b + 1
    if len(cols) != expected:
        raise ScenarioFormatError(
            f"column count {len(cols)} does not match layout ({expected})")
    data = np.array([[float(v) for v in r] for r in rows])
    if data.size and data.shape[1] != expected:
        raise ScenarioFormatError("ragged data row")
    t = data[:, 0]
    freq = np.empty((len(rows), n_d))
    theta = np.empty_like(freq)
    gamma = np.empty_like(freq)
    p = np.empty_like(freq)
    q = np.empty_like(freq)
    v = np.empty_like(freq)
    isl = np.empty((len(rows), n_d), dtype=int)
    for d in range(n_d):
        base = 1 + 7 * d
        freq[:, d] = data[:, base]
        theta[:, d] = data[:, base + 1]
        gamma[:, d] = data[:, base + 2]
        p[:, d] = data[:, base + 3]
        q[:, d] = data[:, base + 4]
        v[:, d] = data[:, base + 5]
        isl[:, d] = data[:, base + 6].astype(int)
    busv = data[:, 1 + 7 * n_d: 1 + 7 * n_d + n_b]
    residual = data[:, -1]
    kinds = tail.get("device_kinds", "").split(",") if n_d else []
    dist_raw = tail.get("disturbance_t", "none")
    dist = None if dist_raw == "none" else float(dist_raw)
    series = TimeSeries(
        t=t, device_ids=device_ids, device_kinds=kinds,
        freq_hz=freq, theta_rad=theta, gamma_pu=gamma, p_mw=p, q_mvar=q,
        v_out_pu=v, island=isl, bus_ids=bus_ids, bus_v_pu=busv,
        residual_pu=residual, disturbance_t=dist,
        any_collapse=tail.get("any_collapse", "false") == "true",
    )
    metrics = Metrics(
        nadir_hz=float(tail["nadir_hz"]),
        rocof_max_hz_s=float(tail["rocof_max_hz_s"]),
        recovery_time_s=float(tail["recovery_time_s"]),
        max_sg_angle_spread_rad=float(tail["max_sg_angle_spread_rad"]),
        freq_std_final_hz=float(tail["freq_std_final_hz"]),
        min_bus_v_pu=float(tail["min_bus_v_pu"]),
        survived=tail["survived"] == "true",
    )
    return ResultFile(series, metrics)
