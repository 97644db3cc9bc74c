"""Metrics persistence: one CSV row per training iteration, append-only.

Columns are fixed; cells that do not apply to the running algorithm stay
empty (loss_surrogate under podpo, drift diagnostics under the baseline,
wall_ms unless timing is enabled). Numbers are written with shortest
round-trip repr so identical runs produce byte-identical files.
"""

from __future__ import annotations

import math
from pathlib import Path

from .trainer import MetricsRow

CSV_COLUMNS = ("iteration", "mean_episode_return", "frac_positive", "loss_drift",
               "loss_value", "loss_surrogate", "rv_total",
               "ess_ratio_t1", "ess_ratio_t2", "ess_ratio_t3",
               "max_p_t1", "max_p_t2", "max_p_t3", "wall_ms")


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float) and math.isnan(value):
        return "nan"
    return repr(float(value)) if isinstance(value, float) else str(value)


def row_cells(row: MetricsRow, temps: tuple[float, ...]) -> list[str]:
    ess = [row.ess_ratio.get(t) for t in temps[:3]]
    maxp = [row.max_p.get(t) for t in temps[:3]]
    ess += [None] * (3 - len(ess))
    maxp += [None] * (3 - len(maxp))
    values = [row.iteration, row.mean_episode_return, row.frac_positive, row.loss_drift,
              row.loss_value, row.loss_surrogate, row.rv_total, *ess, *maxp, row.wall_ms]
    return [_cell(v) for v in values]


class MetricsWriter:
    """Appends rows to a CSV file, flushing after every write."""

    def __init__(self, path: str | Path, temps: tuple[float, ...]):
        self.path = Path(path)
        self.temps = tuple(temps)
        self._fh = open(self.path, "w")
        self._fh.write(",".join(CSV_COLUMNS) + "\n")
        self._fh.flush()

    def write(self, row: MetricsRow) -> None:
        self._fh.write(",".join(row_cells(row, self.temps)) + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> "MetricsWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def read_metrics(path: str | Path) -> dict[str, list[float]]:
    """Parse a metrics CSV into column lists; empty cells become NaN."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        cols: dict[str, list[float]] = {name: [] for name in header}
        for line in fh:
            for name, cell in zip(header, line.rstrip("\n").split(",")):
                cols[name].append(float(cell) if cell else float("nan"))
    return cols
