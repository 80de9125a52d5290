"""Group-relative policy optimization on the lattice game.

Each epoch every agent samples eta candidate actions from the frozen
behaviour policy theta_old at its current local state, scores each candidate
by the payoff it would earn if played unilaterally (cooperator payoffs scaled
by the global cooperation constraint), and normalizes the candidate rewards
into advantages using the per-agent population standard deviation. The shared
policy theta then takes zeta clipped-surrogate ascent steps

    J = mean_i (1/eta) sum_g min(ratio * A, clip(ratio, 1 +/- eps) * A)
        - beta * mean_i KL(pi_theta(. | s_i) || pi_ref(. | s_i))

via Adam on the negated objective, after which every agent commits its next
strategy by sampling from the updated policy at its current state. The
reference policy is refreshed from theta every ref_update_period epochs.

Only 32 distinct local states exist, so each inner step runs the network once
on the (32, 5) state matrix and scatters/gathers per-agent quantities through
the state index. Per-agent gradient contributions are reduced in fixed-size
agent blocks with a fixed serial combination order; worker threads only split
the per-block elementwise work, which keeps results bitwise identical for any
worker count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import kernels, seeds
from .errors import EpochAbortError
from .lattice import (
    GlobalSignal,
    counterfactual_payoffs,
    gcc_adjust,
    global_coop_rate,
    init_lattice,
    payoff_field,
    total_payoff,
)
from .policy import (
    PROB_CLAMP,
    STATE_VECTORS,
    AdamState,
    LrSchedule,
    MlpParams,
    adam_step,
    backward_batch,
    clamp_prob,
    effective_lr,
    encode_state,
    forward,
    forward_batch,
    kl_two_point,
)

# Agents per gradient-reduction block. Fixed regardless of lattice size and
# worker count; the serial block-order reduction is what makes results
# independent of the thread count.
AGENT_BLOCK = 1024

__all__ = [
    "AGENT_BLOCK",
    "GrpoHyper",
    "PolicyTriplet",
    "CandidateSet",
    "EpochData",
    "EpochReport",
    "sample_candidates",
    "candidate_rewards",
    "normalize_advantages",
    "build_candidate_set",
    "grpo_gcc_loss",
    "epoch_loss_and_grads",
    "train_epoch",
    "run_training",
]


@dataclass(frozen=True)
class GrpoHyper:
    """Hyperparameters of the GRPO update."""

    clip_eps: float = 0.2      # surrogate clip range
    beta: float = 0.04         # KL penalty weight
    eta: int = 8               # candidate actions per agent per epoch
    zeta: int = 3              # inner gradient steps per epoch
    rho: float = 1.0           # global cooperation constraint strength
    sigma_guard: float = 1e-8  # reward-std floor below which advantages are zeroed
    ref_update_period: int = 1

    def __post_init__(self):
        if self.eta < 2:
            raise ValueError("eta must be >= 2")
        if self.zeta < 1:
            raise ValueError(f"zeta must be >= 1, got {self.zeta}")
        if not 0.0 < self.clip_eps < 1.0:
            raise ValueError(f"clip_eps must be in (0, 1), got {self.clip_eps}")
        if self.beta < 0.0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if self.rho < 0.0:
            raise ValueError(f"rho must be >= 0, got {self.rho}")
        if self.sigma_guard <= 0.0:
            raise ValueError(f"sigma_guard must be > 0, got {self.sigma_guard}")
        if self.ref_update_period < 1:
            raise ValueError(f"ref_update_period must be >= 1, got {self.ref_update_period}")


@dataclass
class PolicyTriplet:
    """Current, behaviour (old) and reference parameter sets."""

    current: MlpParams
    old: MlpParams
    ref: MlpParams

    @classmethod
    def fresh(cls, params: MlpParams) -> "PolicyTriplet":
        return cls(current=params, old=params.copy(), ref=params.copy())


@dataclass
class CandidateSet:
    """One agent's sampled candidates with rewards and normalized advantages."""

    state: np.ndarray       # (5,) encoded local state
    actions: np.ndarray     # (eta,) in {0, 1}
    old_probs: np.ndarray   # (eta,) behaviour probability of each action
    rewards: np.ndarray     # (eta,)
    advantages: np.ndarray  # (eta,)


@dataclass
class EpochReport:
    """Per-epoch diagnostics."""

    epoch: int
    coop_fraction: float
    mean_loss: float
    mean_kl: float
    mean_adv_std: float
    lr: float


def sample_candidates(theta_old: MlpParams, state: np.ndarray, n_candidates: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Draw candidate actions from the behaviour policy at one state.

    Returns (actions, probabilities of the drawn actions). Sampling uses the
    clamped cooperate probability, so the returned probabilities never fall
    below the clamp floor.
    """
    if n_candidates < 2:
        raise ValueError("candidate count must be >= 2")
    p1 = clamp_prob(forward(theta_old, state).probs[0, 1])
    u = rng.random(n_candidates)
    actions = (u < p1).astype(np.int64)
    old_probs = np.where(actions == 1, p1, 1.0 - p1)
    return actions, old_probs


def candidate_rewards(grid: np.ndarray, idx: tuple[int, int], actions: np.ndarray, r: float, signal: GlobalSignal) -> np.ndarray:
    """Counterfactual reward of each candidate action for the agent at ``idx``.

    Each candidate is evaluated as a unilateral replacement of the agent's
    strategy with everyone else frozen; cooperation rewards are scaled by the
    global cooperation constraint.
    """
    actions = np.asarray(actions)
    if not np.all((actions == 0) | (actions == 1)):
        raise ValueError("actions must be binary")
    work = grid.copy()
    out = np.empty(len(actions), dtype=np.float64)
    for k, a in enumerate(actions):
        work[idx] = a
        out[k] = gcc_adjust(total_payoff(work, idx, r), int(a), signal)
    work[idx] = grid[idx]
    return out


def normalize_advantages(rewards: np.ndarray, sigma_guard: float) -> np.ndarray:
    """Center rewards and scale by their population standard deviation.

    Degenerate candidate sets (std below the guard) get all-zero advantages
    instead of a division blow-up.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    sd = rewards.std()
    if sd < sigma_guard:
        return np.zeros_like(rewards)
    return (rewards - rewards.mean()) / sd


def build_candidate_set(theta_old: MlpParams, grid: np.ndarray, idx: tuple[int, int], r: float, signal: GlobalSignal, hyper: GrpoHyper, rng: np.random.Generator) -> CandidateSet:
    """Sample, score and normalize one agent's candidates."""
    state = encode_state(grid, idx)
    actions, old_probs = sample_candidates(theta_old, state, hyper.eta, rng)
    rewards = candidate_rewards(grid, idx, actions, r, signal)
    return CandidateSet(
        state=state,
        actions=actions,
        old_probs=old_probs,
        rewards=rewards,
        advantages=normalize_advantages(rewards, hyper.sigma_guard),
    )


def grpo_gcc_loss(theta: MlpParams, candidates: CandidateSet, theta_ref: MlpParams, hyper: GrpoHyper) -> tuple[float, list[np.ndarray]]:
    """Single-agent objective and gradient of the negated objective.

    The objective is the clipped surrogate averaged over the candidate set
    minus beta times the KL divergence to the reference policy at this state.
    """
    if np.any(candidates.old_probs < PROB_CLAMP):
        raise RuntimeError("stored behaviour probability below clamp floor")
    cache = forward(theta, candidates.state)
    p1_raw = cache.probs[0, 1]
    p1 = float(clamp_prob(p1_raw))
    live = PROB_CLAMP < p1_raw < 1.0 - PROB_CLAMP

    is_coop = candidates.actions == 1
    p_act = np.where(is_coop, p1, 1.0 - p1)
    ratio = p_act / candidates.old_probs
    unclipped = ratio * candidates.advantages
    clipped = np.clip(ratio, 1.0 - hyper.clip_eps, 1.0 + hyper.clip_eps) * candidates.advantages
    term = np.minimum(unclipped, clipped)

    q1 = float(clamp_prob(forward(theta_ref, candidates.state).probs[0, 1]))
    kl = kl_two_point(p1, q1)
    objective = float(term.mean()) - hyper.beta * kl
    if not np.isfinite(objective):
        raise EpochAbortError("non-finite objective in policy update")

    flow = unclipped <= clipped
    sign = np.where(is_coop, 1.0, -1.0)
    dclip_dp1 = float(np.where(flow, candidates.advantages / candidates.old_probs * sign, 0.0).mean())
    dkl_dp1 = float(np.log(p1 / q1) - np.log((1.0 - p1) / (1.0 - q1)))
    dloss_dp1 = -(dclip_dp1 - hyper.beta * dkl_dp1) * (1.0 if live else 0.0)

    pq = cache.probs[0, 0] * cache.probs[0, 1]
    dlogits = np.array([[-dloss_dp1 * pq, dloss_dp1 * pq]])
    return objective, backward_batch(theta, cache, dlogits)


@dataclass
class EpochData:
    """Frozen per-epoch sampling results the inner updates repeatedly score."""

    sidx: np.ndarray          # (n,) local state index per agent
    counts32: np.ndarray      # (32,) agents per state
    sign: np.ndarray          # (n, eta) +1 for cooperate candidates, -1 for defect
    old_p: np.ndarray         # (n, eta) behaviour probability of each candidate
    adv: np.ndarray           # (n, eta) normalized advantages
    commit_u: np.ndarray      # (n,) uniforms for the strategy commit
    mean_adv_std: float


def _epoch_setup(policies: PolicyTriplet, grid: np.ndarray, hyper: GrpoHyper, r: float, rng: np.random.Generator) -> EpochData:
    """Refresh theta_old and precompute everything the inner steps reuse."""
    n = grid.size
    policies.old = policies.current.copy()

    g = global_coop_rate(grid)
    factor = 1.0 + hyper.rho * (g * (1.0 - g))
    sidx = kernels.state_index(grid).ravel()
    counts32 = np.bincount(sidx, minlength=32).astype(np.float64)

    p1_old32 = clamp_prob(forward_batch(policies.old, STATE_VECTORS).probs[:, 1])
    p1_old = p1_old32[sidx]

    cand_u = rng.random((n, hyper.eta))
    commit_u = rng.random(n)

    is_coop = cand_u < p1_old[:, None]
    sign = np.where(is_coop, 1.0, -1.0)
    old_p = np.where(is_coop, p1_old[:, None], 1.0 - p1_old[:, None])

    pay_d, pay_c = counterfactual_payoffs(grid, r)
    rew_c = pay_c.ravel() * factor
    rew_d = pay_d.ravel()
    rewards = np.where(is_coop, rew_c[:, None], rew_d[:, None])

    mu = rewards.mean(axis=1)
    sd = rewards.std(axis=1)
    live = sd >= hyper.sigma_guard
    adv = np.where(live[:, None], (rewards - mu[:, None]) / np.where(live, sd, 1.0)[:, None], 0.0)
    mean_adv_std = float(adv.std(axis=1).mean())

    return EpochData(
        sidx=sidx,
        counts32=counts32,
        sign=sign,
        old_p=old_p,
        adv=adv,
        commit_u=commit_u,
        mean_adv_std=mean_adv_std,
    )


def _inner_step_blocks(sidx, sign, old_p, adv, p1c_by_state, live_by_state, clip_eps, eta, workers):
    """Per-agent surrogate terms and d(objective)/d(p1), reduced per block.

    Returns (sum of surrogate terms, per-state gradient sums from the clipped
    surrogate). Blocks are combined serially in index order, so the result
    does not depend on the worker count.
    """
    n = sidx.shape[0]
    n_blocks = (n + AGENT_BLOCK - 1) // AGENT_BLOCK

    def one_block(b: int):
        sl = slice(b * AGENT_BLOCK, min(n, (b + 1) * AGENT_BLOCK))
        states = sidx[sl]
        p1 = p1c_by_state[states]
        p_act = np.where(sign[sl] > 0.0, p1[:, None], 1.0 - p1[:, None])
        ratio = p_act / old_p[sl]
        unclipped = ratio * adv[sl]
        clipped = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * adv[sl]
        term_sum = float(np.minimum(unclipped, clipped).sum())
        dterm = np.where(unclipped <= clipped, adv[sl] / old_p[sl] * sign[sl], 0.0)
        coef = dterm.sum(axis=1) / eta * live_by_state[states]
        return term_sum, np.bincount(states, weights=coef, minlength=32)

    if workers <= 1 or n_blocks == 1:
        results = [one_block(b) for b in range(n_blocks)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one_block, range(n_blocks)))

    term_total = 0.0
    dclip_by_state = np.zeros(32)
    for term_sum, partial in results:
        term_total += term_sum
        dclip_by_state += partial
    return term_total, dclip_by_state


def epoch_loss_and_grads(
    theta: MlpParams,
    data: EpochData,
    q1_ref: np.ndarray,
    hyper: GrpoHyper,
    workers: int = 1,
) -> tuple[float, list[np.ndarray], float]:
    """Loss of the negated objective on frozen epoch data, with its gradient.

    Returns (loss, grads, mean KL). This is the exact function one inner Adam
    step descends; it is separated out so gradient checks can probe it
    directly with finite differences.
    """
    n = data.sidx.shape[0]
    cache = forward_batch(theta, STATE_VECTORS)
    p1_raw = cache.probs[:, 1]
    p1c = clamp_prob(p1_raw)
    live = ((p1_raw > PROB_CLAMP) & (p1_raw < 1.0 - PROB_CLAMP)).astype(np.float64)

    kl_by_state = kl_two_point(p1c, q1_ref)
    mean_kl = float((data.counts32 * kl_by_state).sum() / n)
    dkl_by_state = (np.log(p1c / q1_ref) - np.log((1.0 - p1c) / (1.0 - q1_ref))) * live

    term_total, dclip_by_state = _inner_step_blocks(
        data.sidx, data.sign, data.old_p, data.adv, p1c, live, hyper.clip_eps, hyper.eta, workers
    )
    loss = -(term_total / (n * hyper.eta) - hyper.beta * mean_kl)

    # d(loss)/d(p1) per state: clipped surrogate part plus the KL part
    # weighted by how many agents sit in each state, averaged over agents.
    dobj_by_state = dclip_by_state - hyper.beta * data.counts32 * dkl_by_state
    dloss_dp1 = -dobj_by_state / n
    pq = cache.probs[:, 0] * cache.probs[:, 1]
    dlogits = np.stack([-dloss_dp1 * pq, dloss_dp1 * pq], axis=1)
    return loss, backward_batch(theta, cache, dlogits), mean_kl


def train_epoch(
    policies: PolicyTriplet,
    grid: np.ndarray,
    hyper: GrpoHyper,
    r: float,
    opt: AdamState,
    schedule: LrSchedule,
    epoch: int,
    rng: np.random.Generator,
    workers: int = 1,
) -> tuple[np.ndarray, EpochReport]:
    """One full training epoch. Returns the next strategy grid and a report."""
    L = grid.shape[0]
    theta = policies.current

    data = _epoch_setup(policies, grid, hyper, r, rng)
    q1_ref = clamp_prob(forward_batch(policies.ref, STATE_VECTORS).probs[:, 1])
    lr = effective_lr(schedule, epoch)

    losses = []
    kls = []
    for inner in range(hyper.zeta):
        loss, grads, mean_kl = epoch_loss_and_grads(theta, data, q1_ref, hyper, workers)
        if not np.isfinite(loss):
            raise EpochAbortError(f"non-finite loss at epoch {epoch}, inner step {inner}", epoch=epoch, inner_step=inner)
        try:
            adam_step(theta, grads, opt, lr)
        except ValueError as exc:
            raise EpochAbortError(
                f"non-finite gradient at epoch {epoch}, inner step {inner}", epoch=epoch, inner_step=inner
            ) from exc
        losses.append(loss)
        kls.append(mean_kl)

    p1_post = clamp_prob(forward_batch(theta, STATE_VECTORS).probs[:, 1])[data.sidx]
    next_grid = (data.commit_u < p1_post).astype(np.uint8).reshape(L, L)

    if (epoch + 1) % hyper.ref_update_period == 0:
        policies.ref = policies.current.copy()

    report = EpochReport(
        epoch=epoch,
        coop_fraction=float(next_grid.mean()),
        mean_loss=float(np.mean(losses)),
        mean_kl=float(np.mean(kls)),
        mean_adv_std=data.mean_adv_std,
        lr=lr,
    )
    return next_grid, report


def run_training(config, writer=None):
    """Train on the lattice per ``config`` and return the collected series.

    Streams rows (and any due snapshots) to ``writer`` as epochs finish, and
    closes it even when an epoch aborts, so partial output survives.
    """
    from .metrics import MetricsSeries, record_epoch

    rho = 0.0 if config.algorithm == "grpo" else config.rho
    hyper = GrpoHyper(
        clip_eps=config.clip_eps,
        beta=config.beta,
        eta=config.eta,
        zeta=config.zeta,
        rho=rho,
        sigma_guard=config.sigma_guard,
        ref_update_period=config.ref_update_period,
    )
    grid = init_lattice(config.L, config.init_mode, seeds.stream(config.seed, seeds.INIT_STREAM))
    params = MlpParams.init(config.hidden, seeds.stream(config.seed, seeds.WEIGHTS_STREAM))
    policies = PolicyTriplet.fresh(params)
    opt = AdamState.for_params(params)
    schedule = LrSchedule(config.alpha, config.lr_halve_period)

    field = payoff_field(grid, config.r)
    rows = [record_epoch(grid, field, 0)]
    reports: list[EpochReport] = []
    try:
        if writer is not None:
            writer.write_row(rows[0])
            writer.maybe_snapshot(grid, field.values, 0)
        for epoch in range(config.epochs):
            rng = seeds.stream(config.seed, seeds.EPOCH_STREAM, epoch)
            grid, report = train_epoch(
                policies, grid, hyper, config.r, opt, schedule, epoch, rng, config.workers
            )
            reports.append(report)
            field = payoff_field(grid, config.r)
            row = record_epoch(grid, field, epoch + 1)
            rows.append(row)
            if writer is not None:
                writer.write_row(row)
                writer.maybe_snapshot(grid, field.values, epoch + 1)
    finally:
        if writer is not None:
            writer.close()
    return MetricsSeries(rows=rows, reports=reports, final_grid=grid, params=policies.current)
