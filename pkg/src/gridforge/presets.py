"""Shipped 9-bus study scenarios.

A three-device, nine-bus, three-load transmission test system with four
generation mixes (all synchronous machines through all inverter-based
devices) crossed with five disturbance families: a coincident load step,
a 15 ms and a 300 ms bus fault, loss of the smallest device, and a line
double-trip that splits the grid into two islands.
"""

from __future__ import annotations

from . import network as net
from .engine import DeviceSpec, Event, Scenario
from .network import Bus, GridModel, Line, LoadSpec
from .sg import SgParams, damping_from_reactances
from .vsg import VsgParams

MIXES = ("3sg", "1ibr", "2ibr", "3ibr")
FAMILIES = ("loadstep", "fault15", "fault300", "disconnect", "island")

PRESET_NAMES = tuple(
    f"nine_bus_{mix}_{family}" for mix in MIXES for family in FAMILIES
)

_DEVICE_BUSES = (1, 2, 3)
# (capacity MW, dispatch MW, inertia constant H s) per device
_CAPACITY_MW = (150.0, 250.0, 100.0)
_DISPATCH_MW = (72.0, 163.0, 85.0)
_INERTIA_H_S = (23.64, 6.4, 3.01)
_V_SETPOINT = (1.04, 1.025, 1.025)

# series impedances r, x and total charging b, all pu on 100 MVA / 230 kV
_LINES = (
    (1, 1, 4, 0.0, 0.0576, 0.0),
    (2, 4, 5, 0.010, 0.085, 0.176),
    (3, 5, 7, 0.032, 0.161, 0.306),
    (4, 7, 2, 0.0, 0.0625, 0.0),
    (5, 7, 8, 0.0085, 0.072, 0.149),
    (6, 8, 9, 0.0119, 0.1008, 0.209),
    (7, 9, 3, 0.0, 0.0586, 0.0),
    (8, 6, 9, 0.039, 0.170, 0.358),
    (9, 4, 6, 0.017, 0.092, 0.158),
)

_LOADS = ((5, 125.0, 50.0), (6, 90.0, 30.0), (8, 100.0, 35.0))


def nine_bus_grid() -> GridModel:
    buses = []
    for b in range(1, 10):
        kind = "device" if b in _DEVICE_BUSES else (
            "load" if b in (5, 6, 8) else "passive")
        buses.append(Bus(id=b, kind=kind))
    lines = tuple(
        Line(id=i, from_bus=f, to_bus=t,
             g=r / (r * r + x * x), b=x / (r * r + x * x), charging_b=c)
        for i, f, t, r, x, c in _LINES
    )
    loads = tuple(LoadSpec(bus=b, p_mw=p, q_mvar=q) for b, p, q in _LOADS)
    return GridModel(tuple(buses), lines, loads)


def _vsg_params(capacity_mw: float) -> VsgParams:
    cap = capacity_mw / net.SYSTEM_BASE_MVA
    return VsgParams(
        tau_omega=0.25, tau_gamma=0.1,
        c_alpha=10.0, c_theta=0.5, c_omega=6.0,
        p_ref=0.5 * cap, p_max=cap, p_min=0.0,
        c_p=2.0, c_i=5.0, v_min=0.8, v_max=1.2,
    )


def _sg_params(h_s: float, droop: float) -> SgParams:
    x, xq_t, xq_st, tq_st = 0.1, 0.5, 0.2, 0.05
    return SgParams(
        m=2.0 * h_s / net.OMEGA_SYNC,
        d=damping_from_reactances(x, xq_t, xq_st, tq_st, 1.0),
        x=x, xq_t=xq_t, xq_st=xq_st, tq_st=tq_st,
        p_mech=0.0, governor_droop=droop,
    )


def _devices(mix: str, family: str) -> tuple[DeviceSpec, ...]:
    n_ibr = {"3sg": 0, "1ibr": 1, "2ibr": 2, "3ibr": 3}[mix]
    # the fault studies end inside the governor dead time, so primary droop
    # (which this model applies with zero lag) is disabled for them
    droop = 0.0 if family in ("fault15", "fault300") else 0.05
    devs = []
    for i, bus in enumerate(_DEVICE_BUSES):
        is_ibr = i < n_ibr
        devs.append(DeviceSpec(
            id=f"g{bus}",
            bus=bus,
            kind="vsg" if is_ibr else "sg",
            vsg=_vsg_params(_CAPACITY_MW[i]) if is_ibr else None,
            sg=None if is_ibr else _sg_params(_INERTIA_H_S[i], droop),
            dispatch_p_mw=_DISPATCH_MW[i],
            v_setpoint_pu=_V_SETPOINT[i],
            capacity_mva=_CAPACITY_MW[i],
        ))
    return tuple(devs)


def _events(family: str) -> tuple[Event, ...]:
    t0 = 1.0
    if family == "loadstep":
        return tuple(
            Event(time=t0, kind="load_step", bus=b, dp_mw=30.0, dq_mvar=0.01)
            for b in (5, 6, 8)
        )
    if family == "fault15":
        # temporary fault near bus 7 on line 5-7: breakers clear it by
        # tripping the line, then auto-reclose
        return (Event(time=t0, kind="apply_fault", bus=7),
                Event(time=t0 + 0.015, kind="clear_fault", bus=7),
                Event(time=t0 + 0.015, kind="trip_line", line=3),
                Event(time=t0 + 0.5, kind="reclose_line", line=3))
    if family == "fault300":
        # permanent fault: slow clearing, line stays out
        return (Event(time=t0, kind="apply_fault", bus=7),
                Event(time=t0 + 0.300, kind="clear_fault", bus=7),
                Event(time=t0 + 0.300, kind="trip_line", line=3))
    if family == "disconnect":
        return (Event(time=t0, kind="disconnect_device", device="g3"),)
    if family == "island":
        # opening lines 5-7 and 6-9 splits off {1, 4, 5, 6}
        return (Event(time=t0, kind="trip_line", line=3),
                Event(time=t0, kind="trip_line", line=8))
    raise KeyError(family)


def build_preset(name: str) -> Scenario:
    if name not in PRESET_NAMES:
        raise KeyError(f"unknown preset {name!r}; known: {PRESET_NAMES}")
    _, _, mix, family = name.split("_", 3)
    return Scenario(
        name=name,
        grid=nine_bus_grid(),
        devices=_devices(mix, family),
        events=_events(family),
        dt=1e-3,
        duration=10.0,
        recording_stride=10,
        fault_refine=10,
    )
