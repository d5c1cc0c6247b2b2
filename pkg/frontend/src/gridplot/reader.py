"""Reader for the simulator's result CSV contract.

Layout: one header row (``t``, per-device ``<id>_omega_hz``, ``<id>_theta_rad``,
``<id>_gamma_pu``, ``<id>_p_out_mw``, ``<id>_q_out_mvar``, ``<id>_v_out_pu``,
``<id>_island``, per-bus ``bus<id>_v_pu``, ``residual_pu``), data rows, then a
trailing block of ``# key=value`` comment lines carrying the run metadata and
metrics. Metric values are kept verbatim as strings so annotations can quote
the file exactly.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np


class SchemaError(ValueError):
    """The file does not follow the result CSV contract."""


@dataclass
class RunData:
    name: str
    columns: list[str]
    data: np.ndarray              # (rows, cols)
    tail: dict[str, str]          # verbatim metrics/metadata block
    device_ids: list[str] = field(init=False)
    bus_ids: list[int] = field(init=False)

    def __post_init__(self):
        self.device_ids = [c[: -len("_omega_hz")] for c in self.columns
                           if c.endswith("_omega_hz")]
        self.bus_ids = [int(c[3:-5]) for c in self.columns
                        if c.startswith("bus") and c.endswith("_v_pu")]

    @property
    def t(self) -> np.ndarray:
        return self.column("t")

    def column(self, name: str) -> np.ndarray:
        try:
            return self.data[:, self.columns.index(name)]
        except ValueError:
            raise SchemaError(f"{self.name}: missing column {name!r}") from None

    def device_channel(self, suffix: str) -> np.ndarray:
        """(rows, devices) array of ``<id>_<suffix>`` columns."""
        cols = [self.column(f"{dev}_{suffix}") for dev in self.device_ids]
        return np.column_stack(cols)

    def system_frequency(self) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            return np.nanmean(self.device_channel("omega_hz"), axis=1)


def read_run(path: str) -> RunData:
    name = os.path.splitext(os.path.basename(path))[0]
    tail: dict[str, str] = {}
    rows: list[list[float]] = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header or not header.startswith("t"):
            raise SchemaError(f"{name}: first row must be the column header")
        columns = header.split(",")
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
            parts = raw.split(",")
            if len(parts) != len(columns):
                raise SchemaError(f"{name}: ragged row with {len(parts)} fields")
            rows.append([float(v) for v in parts])
    if not rows:
        raise SchemaError(f"{name}: no data rows")
    return RunData(name, columns, np.array(rows), tail)
