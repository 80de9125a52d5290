"""Classical learning rules used as comparison baselines.

Both baselines share the payoff structure and the synchronous update
convention of the policy-gradient path: every agent decides from the same
pre-update lattice state, then all strategies switch at once.

Q-learning: each agent keeps its own 32 x 2 table over local states and
actions, acts epsilon-greedily on it, and regresses toward the raw payoff it
earns on the post-update lattice plus the discounted best value of its next
state. No global signal enters the reward.

Fermi imitation: each agent picks one von Neumann neighbour uniformly and
copies its strategy with probability 1 / (1 + exp((pi_self - pi_nb) / K)),
both payoffs read from the same pre-update field. Uniform lattices are
absorbing because there is nothing different left to copy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .lattice import payoff_field

N_STATES = 32

__all__ = ["N_STATES", "QConfig", "QTables", "FermiConfig", "q_epoch", "fermi_epoch", "fermi_adopt_prob"]


@dataclass(frozen=True)
class QConfig:
    alpha: float = 0.1    # table learning rate
    gamma: float = 0.9    # discount
    epsilon: float = 0.02  # exploration probability

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must be in [0, 1), got {self.gamma}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon must be in [0, 1], got {self.epsilon}")


@dataclass
class QTables:
    """Per-agent action values, shape (n_agents, 32, 2), zero initialized."""

    q: np.ndarray
    config: QConfig = field(default_factory=QConfig)

    @classmethod
    def fresh(cls, n_agents: int, config: QConfig | None = None) -> "QTables":
        return cls(q=np.zeros((n_agents, N_STATES, 2)), config=config or QConfig())


def q_epoch(tables: QTables, grid: np.ndarray, r: float, rng: np.random.Generator) -> np.ndarray:
    """One synchronous Q-learning epoch; updates ``tables`` in place.

    Uniform draws per agent, in column order: explore-or-exploit, the random
    action used when exploring, and the coin that breaks exact value ties.
    The reward is the agent's raw payoff on the post-update lattice.
    """
    cfg = tables.config
    L = grid.shape[0]
    n = grid.size
    agents = np.arange(n)
    s = kernels.state_index(grid).ravel()

    u = rng.random((n, 3))
    q_here = tables.q[agents, s]
    q0, q1 = q_here[:, 0], q_here[:, 1]
    tie = (u[:, 2] < 0.5).astype(np.int64)
    greedy = np.where(q1 > q0, 1, np.where(q0 > q1, 0, tie))
    explore = u[:, 0] < cfg.epsilon
    random_action = (u[:, 1] < 0.5).astype(np.int64)
    actions = np.where(explore, random_action, greedy)

    next_grid = actions.astype(np.uint8).reshape(L, L)
    reward = payoff_field(next_grid, r).values.ravel()
    s_next = kernels.state_index(next_grid).ravel()
    best_next = tables.q[agents, s_next].max(axis=1)

    chosen = (agents, s, actions)
    tables.q[chosen] += cfg.alpha * (reward + cfg.gamma * best_next - tables.q[chosen])
    return next_grid


@dataclass(frozen=True)
class FermiConfig:
    k: float = 0.5  # selection temperature

    def __post_init__(self):
        if self.k <= 0.0:
            raise ValueError(f"temperature K must be > 0, got {self.k}")


def fermi_adopt_prob(payoff_self: float, payoff_other: float, k: float) -> float:
    """Probability of copying the other agent's strategy."""
    if k <= 0.0:
        raise ValueError(f"temperature K must be > 0, got {k}")
    with np.errstate(over="ignore"):
        return float(1.0 / (1.0 + np.exp((payoff_self - payoff_other) / k)))


def fermi_epoch(grid: np.ndarray, r: float, config: FermiConfig, rng: np.random.Generator) -> np.ndarray:
    """One synchronous Fermi imitation epoch.

    Uniform draws per agent, in column order: neighbour choice (quartered
    into N/S/W/E), then the adoption coin. Payoffs come from the shared
    pre-update field.
    """
    L = grid.shape[0]
    u = rng.random((grid.size, 2))
    dirs = np.floor(u[:, 0] * 4.0).astype(np.int64).reshape(L, L)

    field_values = payoff_field(grid, r).values
    nb_strategy = kernels.pick_neighbor(grid, dirs)
    nb_payoff = kernels.pick_neighbor(field_values, dirs)
    with np.errstate(over="ignore"):
        p_adopt = 1.0 / (1.0 + np.exp((field_values - nb_payoff) / config.k))
    adopt = u[:, 1].reshape(L, L) < p_adopt
    return np.where(adopt, nb_strategy, grid.astype(np.int64)).astype(np.uint8)
