"""Measurement and artifact output.

Per-epoch rows go to a CSV with the fixed header
``epoch,coop_fraction,defect_fraction,mean_payoff,global_g``; reals print
with six decimal places and rows end with a bare newline. Strategy grids
export as binary PGM (P5, defect 0 / cooperate 255, row 0 first) and payoff
fields as binary PPM (P6) heatmaps through a five-anchor piecewise-linear
colormap with channels floored to integers after interpolation. Replicate
campaigns aggregate final cooperation fractions into a normal-approximation
95% confidence interval clipped to [0, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CSV_HEADER = "epoch,coop_fraction,defect_fraction,mean_payoff,global_g"
SUMMARY_HEADER = "param_value,n,mean,std,ci_low,ci_high"

_ANCHOR_T = np.array([0.0, 0.25, 0.5, 0.75, 1.0])
_ANCHOR_RGB = np.array(
    [[68, 1, 84], [59, 82, 139], [33, 145, 140], [94, 201, 98], [253, 231, 37]],
    dtype=np.float64,
)

__all__ = [
    "CSV_HEADER",
    "SUMMARY_HEADER",
    "MetricsRow",
    "MetricsSeries",
    "RunSummary",
    "AggregateStats",
    "RunWriter",
    "record_epoch",
    "format_row",
    "write_timeseries_csv",
    "parse_timeseries_csv",
    "write_snapshot",
    "write_heatmap",
    "aggregate_runs",
    "write_summary_csv",
]


@dataclass(frozen=True)
class MetricsRow:
    epoch: int
    coop_fraction: float
    defect_fraction: float
    mean_payoff: float
    global_g: float


@dataclass
class MetricsSeries:
    """Everything a finished run hands back to its caller."""

    rows: list
    reports: list = field(default_factory=list)
    final_grid: np.ndarray | None = None
    params: object | None = None


@dataclass(frozen=True)
class RunSummary:
    seed: int
    final_coop_fraction: float
    epochs_run: int


@dataclass(frozen=True)
class AggregateStats:
    n: int
    mean: float
    std: float
    ci_low: float
    ci_high: float


def record_epoch(grid: np.ndarray, pfield, epoch: int) -> MetricsRow:
    """Summarize one lattice state; ``pfield`` is its payoff field."""
    coop = float(grid.mean())
    return MetricsRow(
        epoch=epoch,
        coop_fraction=coop,
        defect_fraction=float((grid == 0).mean()),
        mean_payoff=float(pfield.values.mean()),
        global_g=coop,
    )


def format_row(row: MetricsRow) -> str:
    return (
        f"{row.epoch},{row.coop_fraction:.6f},{row.defect_fraction:.6f},"
        f"{row.mean_payoff:.6f},{row.global_g:.6f}"
    )


def write_timeseries_csv(rows, path) -> None:
    with open(path, "w", newline="") as f:
        f.write(CSV_HEADER + "\n")
        for row in rows:
            f.write(format_row(row) + "\n")


def parse_timeseries_csv(path) -> list[MetricsRow]:
    with open(path, "r", newline="") as f:
        lines = f.read().splitlines()
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError(f"unexpected timeseries header in {path}")
    rows = []
    for line in lines[1:]:
        parts = line.split(",")
        if len(parts) != 5:
            raise ValueError(f"malformed timeseries row: {line!r}")
        rows.append(
            MetricsRow(
                epoch=int(parts[0]),
                coop_fraction=float(parts[1]),
                defect_fraction=float(parts[2]),
                mean_payoff=float(parts[3]),
                global_g=float(parts[4]),
            )
        )
    return rows


def write_snapshot(grid: np.ndarray, path) -> None:
    """Binary PGM of a strategy grid: defectors 0, cooperators 255."""
    h, w = grid.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write((grid.astype(np.uint8) * 255).tobytes())


def _colormap(t: np.ndarray) -> np.ndarray:
    channels = [np.floor(np.interp(t, _ANCHOR_T, _ANCHOR_RGB[:, c])) for c in range(3)]
    return np.stack(channels, axis=-1).astype(np.uint8)


def write_heatmap(values: np.ndarray, path) -> None:
    """Binary PPM of a scalar field, min-max normalized.

    A constant field maps everywhere to the colormap midpoint.
    """
    h, w = values.shape
    vmin = float(values.min())
    vmax = float(values.max())
    if vmax == vmin:
        t = np.full(values.shape, 0.5)
    else:
        t = (values - vmin) / (vmax - vmin)
    rgb = _colormap(t)
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(rgb.tobytes())


def aggregate_runs(summaries) -> AggregateStats:
    """Mean, sample std and 95% CI of the final cooperation fractions."""
    finals = np.array([s.final_coop_fraction for s in summaries], dtype=np.float64)
    n = finals.size
    if n < 2:
        raise ValueError(f"need at least 2 replicates to aggregate, got {n}")
    mean = float(finals.mean())
    std = float(finals.std(ddof=1))
    half = 1.96 * std / math.sqrt(n)
    return AggregateStats(
        n=n,
        mean=mean,
        std=std,
        ci_low=max(0.0, mean - half),
        ci_high=min(1.0, mean + half),
    )


def write_summary_csv(entries, path) -> None:
    """Sweep summary: one ``(param_value, AggregateStats)`` row per value."""
    with open(path, "w", newline="") as f:
        f.write(SUMMARY_HEADER + "\n")
        for value, stats in entries:
            f.write(
                f"{value:g},{stats.n},{stats.mean:.6f},{stats.std:.6f},"
                f"{stats.ci_low:.6f},{stats.ci_high:.6f}\n"
            )


class RunWriter:
    """Streams one run's artifacts into its directory.

    The timeseries file opens on the first row and is flushed row by row, so
    an aborted run leaves a readable prefix. Snapshots and heatmaps appear
    for every epoch listed in ``snapshot_epochs``.
    """

    def __init__(self, directory, snapshot_epochs=()):
        self.directory = Path(directory)
        self.snapshot_epochs = set(snapshot_epochs)
        self._file = None

    def write_row(self, row: MetricsRow) -> None:
        if self._file is None:
            self.directory.mkdir(parents=True, exist_ok=True)
            self._file = open(self.directory / "timeseries.csv", "w", newline="")
            self._file.write(CSV_HEADER + "\n")
        self._file.write(format_row(row) + "\n")
        self._file.flush()

    def maybe_snapshot(self, grid: np.ndarray, field_values: np.ndarray, epoch: int) -> None:
        if epoch not in self.snapshot_epochs:
            return
        self.directory.mkdir(parents=True, exist_ok=True)
        write_snapshot(grid, self.directory / f"snap_{epoch}.pgm")
        write_heatmap(field_values, self.directory / f"heat_{epoch}.ppm")

    def close(self) -> None:
        if self._file is not None:
            self._file.close()
            self._file = None
