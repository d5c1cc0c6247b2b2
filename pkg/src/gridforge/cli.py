"""Command-line entry point.

Subcommands: ``simulate`` (run a scenario and write the result file),
``linearize`` (small-signal certificate at an operating point), ``init``
(print the converged power flow), ``oracle-compare`` (network solution vs
the closed-form two-bus transfer). Exit codes: 0 success, 1 validation
error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from . import network as net
from . import presets
from .engine import Scenario, Simulation, SimulationError, run
from .network import DispatchError, TopologyError
from .scenario_io import (ScenarioFormatError, load_scenario,
                          serialize_scenario, write_result_csv)
from .stability import LinearizationPoint, check_stability
from .vsg import effective_virtual_parameters


class _ValidationFailure(Exception):
    pass


def _resolve_scenario(ref: str) -> Scenario:
    if ref in presets.PRESET_NAMES:
        return presets.build_preset(ref)
    if not os.path.exists(ref):
        raise _ValidationFailure(
            f"no such scenario file or preset: {ref!r}\n"
            f"known presets: {', '.join(presets.PRESET_NAMES)}")
    try:
        return load_scenario(ref)
    except ScenarioFormatError as exc:
        raise _ValidationFailure(f"{ref}: {exc}") from exc


def _out_dir(arg: str | None) -> str:
    out = arg or os.environ.get("GRIDFORGE_OUT") or "."
    os.makedirs(out, exist_ok=True)
    return out


def _cmd_simulate(args) -> int:
    sc = _resolve_scenario(args.scenario)
    overrides = {}
    if args.dt is not None:
        overrides["dt"] = args.dt
    if args.duration is not None:
        overrides["duration"] = args.duration
    if overrides:
        from dataclasses import replace
        sc = replace(sc, **overrides)
    result = run(sc)
    out = _out_dir(args.out)
    path = os.path.join(out, f"{sc.name}.csv")
    write_result_csv(result.series, result.metrics, path)
    m = result.metrics
    print(f"scenario: {sc.name}")
    print(f"wrote: {path}")
    print(f"nadir_hz: {m.nadir_hz:.4f}")
    print(f"rocof_max_hz_s: {m.rocof_max_hz_s:.4f}")
    rec = "never" if math.isinf(m.recovery_time_s) else f"{m.recovery_time_s:.2f}"
    print(f"recovery_time_s: {rec}")
    print(f"max_sg_angle_spread_rad: {m.max_sg_angle_spread_rad:.4f}")
    print(f"min_bus_v: {m.min_bus_v_pu:.4f} pu "
          f"({m.min_bus_v_pu * net.NETWORK_BASE_KV:.1f} kV)")
    print(f"survived: {str(m.survived).lower()}")
    return 0


def _linearization_points(sc: Scenario, at: float):
    """Operating points for every inverter device after simulating to ``at``."""
    if at > 0:
        from dataclasses import replace
        sim_sc = replace(sc, duration=at,
                         events=tuple(e for e in sc.events if e.time <= at))
        result = run(sim_sc)
        ops = result.final_device_ops
    else:
        sim = Simulation(sc)
        ops = sim.device_operating_points()
    points = []
    for op in ops:
        if not op.get("active") or op.get("kind") != "vsg":
            continue
        p = op["vsg"]
        v_t = op["v_t"]
        b_c = op["coupling_b"]
        grad = net.monotonicity_margin(op["emf_mag"], v_t, 0.0, b_c, op["dtheta"])
        point = LinearizationPoint(
            omega0=0.0, theta0=op["dtheta"], gamma0=max(op["gamma"], 0.0),
            t0=0.0, f_ref0=op["p_pu"] - p.p_ref,
            grad_f_ref0=grad, grad_f_max0=grad,
        )
        points.append((op["id"], point, p))
    return points


def _cmd_linearize(args) -> int:
    sc = _resolve_scenario(args.scenario)
    points = _linearization_points(sc, args.at)
    if not points:
        print("no inverter devices to linearize")
        return 0
    for dev_id, point, params in points:
        report = check_stability(point, params)
        inertia, damping = effective_virtual_parameters(params, point.gamma0)
        print(f"device: {dev_id}")
        print(f"  gamma0: {float(point.gamma0)!r}")
        print(f"  grad_f: {float(point.grad_f_ref0)!r}")
        print(f"  det_A: {float(report.det_a)!r}")
        eigs = ", ".join(f"{z.real:+.6g}{z.imag:+.6g}j" for z in report.eigenvalues)
        print(f"  eigenvalues: {eigs}")
        print(f"  virtual_inertia_s: {float(inertia)!r}")
        print(f"  virtual_damping_pu: {float(damping)!r}")
        print(f"  verdict: {'certified' if report.stable else 'not certified'}")
    return 0


def _cmd_init(args) -> int:
    sc = _resolve_scenario(args.scenario)
    sim = Simulation(sc)
    ss = sim.initial_state
    print(f"scenario: {sc.name}")
    print(f"power flow converged in {ss.iterations} iterations, "
          f"mismatch {ss.mismatch:.3e} pu")
    print("bus, v_pu, v_kv, angle_deg")
    for bid, v in zip(ss.bus_ids, ss.voltages):
        print(f"  {bid}, {abs(v):.5f}, {abs(v) * net.NETWORK_BASE_KV:.2f}, "
              f"{math.degrees(np.angle(v)):.3f}")
    print("device, p_mw, q_mvar, emf_pu")
    for d, emf, (p, q) in zip(sc.devices, ss.device_emfs, ss.device_pq):
        print(f"  {d.id}, {p * net.SYSTEM_BASE_MVA:.3f}, "
              f"{q * net.SYSTEM_BASE_MVA:.3f}, {abs(emf):.5f}")
    return 0


def _cmd_oracle_compare(args) -> int:
    sc = _resolve_scenario(args.scenario)
    # two-bus closed form against the full network solve at the operating point
    sim = Simulation(sc)
    worst = 0.0
    print("device, p_network_pu, p_two_bus_pu, deviation_pu")
    for op in sim.device_operating_points():
        if not op.get("active"):
            continue
        b_c = op["coupling_b"]
        p_closed = net.injection_power(
            op["emf_mag"], op["v_t"], 0.0, b_c, op["dtheta"])
        dev = abs(p_closed - op["p_pu"])
        worst = max(worst, dev)
        print(f"  {op['id']}, {float(op['p_pu'])!r}, "
              f"{float(p_closed)!r}, {float(dev)!r}")
    print(f"max_deviation_pu: {float(worst)!r}")
    # aggregate-plant cost table: bang-bang reference vs practical controllers
    from . import aggregate as agg
    params = agg.AggregateParams(
        m_s=0.2, d_s=0.05, p_g=0.0, p_l=args.deficit,
        p_min=-args.deficit, p_max=args.deficit, horizon=10.0)
    gamma_trace: list[float] = []
    dyn = agg.vsg_aggregate_controller(params, gamma_trace=gamma_trace)
    traj_dyn = agg.simulate_aggregate(params, dyn, dt=1e-3)
    mean_gamma = sum(gamma_trace) / len(gamma_trace) if gamma_trace else 0.0
    entries = [
        ("pmp_bang_bang", lambda w, t: agg.pmp_control(w, params)),
        ("dynamic_vsg", None),
        ("fixed_vsg", agg.fixed_vsg_controller(
            params, alpha=max(10.0 * mean_gamma, 1e-6))),
        ("droop", agg.droop_controller(params)),
        ("constant_zero", agg.constant_controller(0.0)),
    ]
    print(f"controller cost table (step deficit {-args.deficit} pu, "
          f"horizon {params.horizon} s)")
    print("controller, cost_pu2_s")
    for name, ctl in entries:
        if ctl is None:
            cost = agg.frequency_cost(traj_dyn)
        else:
            cost = agg.frequency_cost(agg.simulate_aggregate(params, ctl, dt=1e-3))
        print(f"  {name}, {float(cost)!r}")
    return 0


def _cmd_echo(args) -> int:
    sc = _resolve_scenario(args.scenario)
    sys.stdout.write(serialize_scenario(sc))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridforge",
        description="Phasor-domain grid simulator with adaptive "
                    "virtual-inertia inverter control.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run a scenario and write results")
    p_sim.add_argument("scenario", help="preset name or scenario file path")
    p_sim.add_argument("--out", default=None,
                       help="output directory (default: $GRIDFORGE_OUT or .)")
    p_sim.add_argument("--dt", type=float, default=None, help="timestep override, s")
    p_sim.add_argument("--duration", type=float, default=None,
                       help="duration override, s")
    p_sim.set_defaults(func=_cmd_simulate)

    p_lin = sub.add_parser("linearize", help="small-signal stability certificate")
    p_lin.add_argument("scenario")
    p_lin.add_argument("--at", type=float, default=0.0,
                       help="operating point time, s (default 0)")
    p_lin.set_defaults(func=_cmd_linearize)

    p_init = sub.add_parser("init", help="print the converged power flow")
    p_init.add_argument("scenario")
    p_init.set_defaults(func=_cmd_init)

    p_oc = sub.add_parser("oracle-compare",
                          help="closed-form and optimal-control reference checks")
    p_oc.add_argument("scenario")
    p_oc.add_argument("--deficit", type=float, default=0.3,
                      help="aggregate step deficit magnitude, pu (default 0.3)")
    p_oc.set_defaults(func=_cmd_oracle_compare)

    p_echo = sub.add_parser("echo", help="print the fully materialized scenario")
    p_echo.add_argument("scenario")
    p_echo.set_defaults(func=_cmd_echo)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except _ValidationFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ScenarioFormatError, TopologyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (SimulationError, DispatchError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
