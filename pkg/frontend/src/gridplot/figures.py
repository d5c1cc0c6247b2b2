"""Figure assembly: stacked channel axes over one or more overlaid runs."""

from __future__ import annotations

from dataclasses import dataclass, field

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .reader import RunData, SchemaError, read_run

CHANNELS = ("frequency", "voltage", "P", "Q")
MAX_RUNS = 4

_CHANNEL_AXES = {
    "frequency": ("frequency, Hz", "omega_hz"),
    "voltage": ("terminal voltage, pu", "v_out_pu"),
    "P": ("active power, MW", "p_out_mw"),
    "Q": ("reactive power, MVar", "q_out_mvar"),
}


@dataclass
class FigureSpec:
    csv_paths: list[str]
    channels: list[str] = field(default_factory=lambda: ["frequency"])
    t_start: float | None = None
    t_end: float | None = None
    out_path: str = "figure.png"

    def __post_init__(self):
        if not 1 <= len(self.csv_paths) <= MAX_RUNS:
            raise ValueError(
                f"between 1 and {MAX_RUNS} input files required, "
                f"got {len(self.csv_paths)}")
        if not self.channels:
            raise ValueError("at least one channel required")
        bad = [c for c in self.channels if c not in CHANNELS]
        if bad:
            raise ValueError(f"unknown channel(s) {bad}; pick from {CHANNELS}")
        if (self.t_start is not None and self.t_end is not None
                and self.t_end <= self.t_start):
            raise ValueError("empty time window: t_end must exceed t_start")


def _window_mask(run: RunData, spec: FigureSpec) -> np.ndarray:
    t = run.t
    mask = np.ones(t.size, dtype=bool)
    if spec.t_start is not None:
        mask &= t >= spec.t_start
    if spec.t_end is not None:
        mask &= t <= spec.t_end
    if not mask.any():
        raise ValueError(
            f"{run.name}: no samples inside the requested time window")
    return mask


def _annotate_metrics(ax, runs: list[RunData]) -> None:
    # quote the metrics block verbatim so the annotation matches the file
    lines = []
    for run in runs:
        nadir = run.tail.get("nadir_hz", "?")
        rec = run.tail.get("recovery_time_s", "?")
        lines.append(f"{run.name}: nadir {nadir} Hz, recovery {rec} s")
    ax.text(0.02, 0.02, "\n".join(lines), transform=ax.transAxes,
            fontsize=7, va="bottom",
            bbox=dict(boxstyle="round", fc="white", ec="0.6", alpha=0.9))


def render(spec: FigureSpec) -> str:
    """Render one image for the given FigureSpec; returns the output path."""
    runs = [read_run(p) for p in spec.csv_paths]
    # fail before any drawing if a requested channel is missing anywhere
    for run in runs:
        for channel in spec.channels:
            run.device_channel(_CHANNEL_AXES[channel][1])
    masks = [_window_mask(run, spec) for run in runs]

    fig, axes = plt.subplots(
        len(spec.channels), 1, sharex=True,
        figsize=(8.0, 2.6 * len(spec.channels)), squeeze=False)
    for row, channel in enumerate(spec.channels):
        ax = axes[row, 0]
        ylabel, suffix = _CHANNEL_AXES[channel]
        for run, mask in zip(runs, masks):
            t = run.t[mask]
            if channel == "frequency":
                ax.plot(t, run.system_frequency()[mask], label=run.name)
            else:
                series = run.device_channel(suffix)[mask]
                for d, dev in enumerate(run.device_ids):
                    label = dev if len(runs) == 1 else f"{run.name}:{dev}"
                    ax.plot(t, series[:, d], label=label)
        ax.set_ylabel(ylabel)
        ax.grid(True, alpha=0.3)
        if channel == "frequency":
            ax.axhline(60.0, color="0.5", lw=0.8, ls="--")
            _annotate_metrics(ax, runs)
        ax.legend(loc="upper right", fontsize=7)
    axes[-1, 0].set_xlabel("t, s")
    fig.tight_layout()
    fig.savefig(spec.out_path, dpi=150, metadata={"Software": "gridplot"})
    plt.close(fig)
    return spec.out_path
