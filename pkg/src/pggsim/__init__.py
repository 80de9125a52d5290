"""Spatial public goods game simulator.

Agents on a toroidal lattice play a public goods game with their von Neumann
neighbourhoods and adapt by one of four rules: clipped policy-gradient
learning with a global cooperation constraint (grpo_gcc), the same without
the constraint (grpo), independent tabular Q-learning, or Fermi imitation.
Runs are deterministic given a master seed and independent of the worker
count.
"""

from .baselines import FermiConfig, QConfig, QTables, fermi_adopt_prob, fermi_epoch, q_epoch
from .config import ExperimentConfig, config_from_dict, parse_config, run_id
from .errors import ConfigError, EpochAbortError, PggSimError
from .grpo import (
    CandidateSet,
    EpochReport,
    GrpoHyper,
    PolicyTriplet,
    candidate_rewards,
    grpo_gcc_loss,
    normalize_advantages,
    run_training,
    sample_candidates,
    train_epoch,
)
from .lattice import (
    ALL_COOPERATE,
    ALL_DEFECT,
    HALF_HALF,
    GlobalSignal,
    InitMode,
    PayoffField,
    counterfactual_payoffs,
    gcc_adjust,
    init_lattice,
    largest_cluster_size,
    payoff_field,
    total_payoff,
)
from .metrics import (
    AggregateStats,
    MetricsRow,
    MetricsSeries,
    RunSummary,
    RunWriter,
    aggregate_runs,
    record_epoch,
    write_heatmap,
    write_snapshot,
    write_timeseries_csv,
)
from .policy import (
    AdamState,
    LrSchedule,
    MlpParams,
    adam_step,
    effective_lr,
    encode_state,
    forward,
    kl_two_point,
    load_params,
    save_params,
)
from .runner import run_baseline, run_replicates, run_single, run_sweep
from .seeds import child_seed, splitmix64, stream

__version__ = "0.1.0"
