"""Experiment drivers: single runs, parameter sweeps, replicate campaigns.

Artifacts land under an output root resolved as: explicit argument, then the
config's output_dir, then the PGG_OUTPUT_DIR environment variable, then
./runs. Each run writes into a directory named by its deterministic run id.

Sweeps and replicate campaigns derive each child run's master seed as
child_seed(master, value_index, replicate_index), so a campaign is fully
reproducible from its base config and independent of execution order.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace
from pathlib import Path

from . import seeds
from .baselines import FermiConfig, QConfig, QTables, fermi_epoch, q_epoch
from .config import ExperimentConfig, run_id
from .errors import ConfigError
from .grpo import run_training
from .lattice import init_lattice, payoff_field
from .metrics import (
    AggregateStats,
    MetricsSeries,
    RunSummary,
    RunWriter,
    aggregate_runs,
    record_epoch,
    write_summary_csv,
)

SWEEPABLE = ("r", "rho", "alpha", "beta", "clip_eps", "eta", "zeta", "epochs", "L",
             "q_alpha", "q_gamma", "q_epsilon", "fermi_k")
_INT_PARAMS = {"eta", "zeta", "epochs", "L"}

__all__ = ["SWEEPABLE", "SweepResult", "resolve_output_root", "run_baseline", "run_single", "run_sweep", "run_replicates"]


def resolve_output_root(config: ExperimentConfig, override=None) -> Path:
    if override is not None:
        return Path(override)
    if config.output_dir is not None:
        return Path(config.output_dir)
    env = os.environ.get("PGG_OUTPUT_DIR")
    if env:
        return Path(env)
    return Path("runs")


def run_baseline(config: ExperimentConfig, writer: RunWriter | None = None) -> MetricsSeries:
    """Drive a Q-learning or Fermi run with the shared epoch/artifact loop."""
    grid = init_lattice(config.L, config.init_mode, seeds.stream(config.seed, seeds.INIT_STREAM))
    if config.algorithm == "qlearning":
        tables = QTables.fresh(config.L * config.L, QConfig(config.q_alpha, config.q_gamma, config.q_epsilon))

        def step(g, rng):
            return q_epoch(tables, g, config.r, rng)
    elif config.algorithm == "fermi":
        fermi = FermiConfig(config.fermi_k)

        def step(g, rng):
            return fermi_epoch(g, config.r, fermi, rng)
    else:
        raise ConfigError(f"not a baseline algorithm: {config.algorithm}")

    field = payoff_field(grid, config.r)
    rows = [record_epoch(grid, field, 0)]
    try:
        if writer is not None:
            writer.write_row(rows[0])
            writer.maybe_snapshot(grid, field.values, 0)
        for epoch in range(config.epochs):
            grid = step(grid, seeds.stream(config.seed, seeds.EPOCH_STREAM, epoch))
            field = payoff_field(grid, config.r)
            row = record_epoch(grid, field, epoch + 1)
            rows.append(row)
            if writer is not None:
                writer.write_row(row)
                writer.maybe_snapshot(grid, field.values, epoch + 1)
    finally:
        if writer is not None:
            writer.close()
    return MetricsSeries(rows=rows, final_grid=grid)


def run_single(config: ExperimentConfig, output_root=None, write_artifacts: bool = True) -> RunSummary:
    """Execute one run, write its artifacts, return the final summary."""
    writer = None
    if write_artifacts:
        root = resolve_output_root(config, output_root)
        writer = RunWriter(root / run_id(config), config.snapshot_epochs)
    if config.algorithm in ("grpo_gcc", "grpo"):
        series = run_training(config, writer)
    else:
        series = run_baseline(config, writer)
    last = series.rows[-1]
    return RunSummary(seed=config.seed, final_coop_fraction=last.coop_fraction, epochs_run=last.epoch)


@dataclass
class SweepResult:
    directory: Path
    entries: list       # (param_value, AggregateStats) per swept value
    failures: list      # (param_value, replicate_index, error message)


def _degenerate_stats(finals) -> AggregateStats:
    if len(finals) == 1:
        v = finals[0]
        return AggregateStats(n=1, mean=v, std=0.0, ci_low=v, ci_high=v)
    nan = float("nan")
    return AggregateStats(n=0, mean=nan, std=nan, ci_low=nan, ci_high=nan)


def run_sweep(config: ExperimentConfig, param: str, values, replicates: int, output_root=None) -> SweepResult:
    """Run ``replicates`` seeds per value of ``param`` and aggregate finals.

    A failed child run is recorded and skipped; its value row aggregates over
    the survivors.
    """
    if param not in SWEEPABLE:
        raise ConfigError(f"cannot sweep {param!r} (choose from {', '.join(SWEEPABLE)})")
    if replicates < 1:
        raise ConfigError(f"replicates must be >= 1, got {replicates}")
    values = list(values)
    if not values:
        raise ConfigError("sweep needs at least one value")

    root = resolve_output_root(config, output_root)
    sweep_dir = root / f"sweep_{param}_{run_id(config)}"
    entries = []
    failures = []
    for vi, value in enumerate(values):
        if param in _INT_PARAMS:
            if float(value) != int(value):
                raise ConfigError(f"{param} must take integer values, got {value}")
            value = int(value)
        summaries = []
        for k in range(replicates):
            child = replace(config, **{param: value}, seed=seeds.child_seed(config.seed, vi, k))
            try:
                summaries.append(run_single(child, output_root=sweep_dir))
            except ConfigError:
                raise
            except Exception as exc:  # noqa: BLE001  (child failures must not sink the campaign)
                failures.append((value, k, f"{type(exc).__name__}: {exc}"))
        if len(summaries) >= 2:
            stats = aggregate_runs(summaries)
        else:
            stats = _degenerate_stats([s.final_coop_fraction for s in summaries])
        entries.append((float(value), stats))
    sweep_dir.mkdir(parents=True, exist_ok=True)
    write_summary_csv(entries, sweep_dir / "summary.csv")
    return SweepResult(directory=sweep_dir, entries=entries, failures=failures)


def run_replicates(config: ExperimentConfig, n: int, output_root=None, derive_seeds: bool = True) -> tuple[AggregateStats, list[RunSummary]]:
    """Run ``n`` replicates of one config under derived seeds and aggregate.

    ``derive_seeds=False`` reruns the same master seed n times (useful only
    for checking that the pipeline is deterministic: std collapses to 0).
    """
    if n < 2:
        raise ConfigError(f"replicates must be >= 2, got {n}")
    root = resolve_output_root(config, output_root)
    campaign_dir = root / f"{run_id(config)}_replicates"
    summaries = []
    for k in range(n):
        seed = seeds.child_seed(config.seed, 0, k) if derive_seeds else config.seed
        child = replace(config, seed=seed)
        summaries.append(run_single(child, output_root=campaign_dir))
    stats = aggregate_runs(summaries)
    campaign_dir.mkdir(parents=True, exist_ok=True)
    with open(campaign_dir / "replicates.csv", "w", newline="") as f:
        f.write("seed,final_coop_fraction,epochs_run\n")
        for s in summaries:
            f.write(f"{s.seed},{s.final_coop_fraction:.6f},{s.epochs_run}\n")
    with open(campaign_dir / "aggregate.csv", "w", newline="") as f:
        f.write("n,mean,std,ci_low,ci_high\n")
        f.write(f"{stats.n},{stats.mean:.6f},{stats.std:.6f},{stats.ci_low:.6f},{stats.ci_high:.6f}\n")
    return stats, summaries
