"""Toroidal lattice environment for the spatial public goods game.

Agents sit on an L x L torus, one per cell, with strategy 1 (cooperate) or 0
(defect). Each agent belongs to the five overlapping groups centred on itself
and its four von Neumann neighbours. A group centred on c collects the
strategies of c and its neighbours, multiplies the cooperator count by r/5,
and pays that amount to each member; cooperators additionally pay a unit cost
per group. An agent's total payoff is therefore

    pi_i = (r/5) * sum over the 5 groups containing i of N_C(group) - 5 * s_i

The group sums are plus-stencil convolutions, so the whole payoff field comes
from two applications of the compiled/fallback ``plus_sum`` kernel. All
arithmetic that decides equality tests is integer until the single multiply
by r/5, which keeps scalar and field paths bitwise consistent.

Neighbour order is fixed everywhere as (N, S, W, E) with row 0 at the top:
north is row x-1, south row x+1, west column y-1, east column y+1, all mod L.

The global cooperation constraint (GCC) rescales a cooperator's payoff by
1 + rho * g * (1 - g) where g is the global cooperation rate; defectors are
paid their raw payoff. The factor is 1 at g = 0 and g = 1, so the constraint
only bends incentives away from the fixed points.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from . import kernels

GROUP_SIZE = 5
COOPERATE = 1
DEFECT = 0

__all__ = [
    "GROUP_SIZE",
    "COOPERATE",
    "DEFECT",
    "InitMode",
    "HALF_HALF",
    "ALL_DEFECT",
    "ALL_COOPERATE",
    "GlobalSignal",
    "PayoffField",
    "init_lattice",
    "von_neumann_neighbors",
    "group_cooperator_count",
    "group_payoff",
    "total_payoff",
    "coop_count",
    "global_coop_rate",
    "neighbor_coop_field",
    "group_coop_sum_field",
    "payoff_field",
    "counterfactual_payoffs",
    "gcc_factor",
    "gcc_adjust",
    "largest_cluster_size",
]


@dataclass(frozen=True)
class InitMode:
    """Initial strategy layout.

    kind: "half_half" (rows [0, L//2) defect, the rest cooperate),
    "bernoulli" (iid cooperate with probability p), "all_defect",
    "all_cooperate".
    """

    kind: str
    p: float = 0.5

    def __post_init__(self):
        if self.kind not in ("half_half", "bernoulli", "all_defect", "all_cooperate"):
            raise ValueError(f"unknown init mode: {self.kind!r}")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"bernoulli p must be in [0, 1], got {self.p}")


HALF_HALF = InitMode("half_half")
ALL_DEFECT = InitMode("all_defect")
ALL_COOPERATE = InitMode("all_cooperate")


@dataclass(frozen=True)
class GlobalSignal:
    """Global cooperation rate g in [0, 1] plus the GCC strength rho >= 0."""

    g: float
    rho: float

    def __post_init__(self):
        if not 0.0 <= self.g <= 1.0:
            raise ValueError(f"cooperation rate g must be in [0, 1], got {self.g}")
        if self.rho < 0.0:
            raise ValueError(f"rho must be >= 0, got {self.rho}")


@dataclass
class PayoffField:
    """Per-cell total payoffs for one lattice state at enhancement factor r.

    Sum over cells equals 5 * (r - 1) * (number of cooperators).
    """

    values: np.ndarray
    r: float


def init_lattice(L: int, mode: InitMode, rng: np.random.Generator) -> np.ndarray:
    """Return an (L, L) uint8 strategy grid for the given initial layout."""
    if L < 2:
        raise ValueError(f"lattice side must be >= 2, got {L}")
    if mode.kind == "half_half":
        grid = np.ones((L, L), dtype=np.uint8)
        grid[: L // 2, :] = DEFECT
        return grid
    if mode.kind == "bernoulli":
        return (rng.random((L, L)) < mode.p).astype(np.uint8)
    if mode.kind == "all_defect":
        return np.zeros((L, L), dtype=np.uint8)
    return np.ones((L, L), dtype=np.uint8)


def von_neumann_neighbors(idx: tuple[int, int], L: int) -> tuple[tuple[int, int], ...]:
    """Neighbour coordinates of ``idx`` on the L-torus, in (N, S, W, E) order."""
    x, y = idx
    return ((x - 1) % L, y), ((x + 1) % L, y), (x, (y - 1) % L), (x, (y + 1) % L)


def group_cooperator_count(grid: np.ndarray, center: tuple[int, int]) -> int:
    """Cooperators in the group centred on ``center`` (centre plus 4 neighbours)."""
    L = grid.shape[0]
    n = int(grid[center])
    for nb in von_neumann_neighbors(center, L):
        n += int(grid[nb])
    return n


def group_payoff(s: int, n_c: int, r: float) -> float:
    """Payoff one group pays a member with strategy ``s`` when it holds ``n_c``
    cooperators. A cooperating member must be counted in ``n_c``."""
    if s not in (0, 1):
        raise ValueError(f"strategy must be 0 or 1, got {s}")
    if not 0 <= n_c <= GROUP_SIZE:
        raise ValueError(f"cooperator count must be in [0, {GROUP_SIZE}], got {n_c}")
    if s == COOPERATE and n_c == 0:
        raise ValueError("a cooperating member implies at least one cooperator in the group")
    return (r / GROUP_SIZE) * n_c - float(s)


def total_payoff(grid: np.ndarray, idx: tuple[int, int], r: float) -> float:
    """Total payoff of the agent at ``idx``: sum over its five groups."""
    L = grid.shape[0]
    sigma = group_cooperator_count(grid, idx)
    for nb in von_neumann_neighbors(idx, L):
        sigma += group_cooperator_count(grid, nb)
    return (r / GROUP_SIZE) * sigma - GROUP_SIZE * float(grid[idx])


def coop_count(grid: np.ndarray) -> int:
    return int(grid.sum())


def global_coop_rate(grid: np.ndarray) -> float:
    return coop_count(grid) / grid.size


def neighbor_coop_field(grid: np.ndarray) -> np.ndarray:
    """N_C of the group centred on each cell (centre included), int64."""
    return kernels.plus_sum(grid)


def group_coop_sum_field(grid: np.ndarray) -> np.ndarray:
    """Per cell, the sum of N_C over the five groups containing the cell."""
    return kernels.plus_sum(kernels.plus_sum(grid))


def payoff_field(grid: np.ndarray, r: float) -> PayoffField:
    """Total payoffs for every agent at once."""
    sigma = group_coop_sum_field(grid)
    values = (r / GROUP_SIZE) * sigma - GROUP_SIZE * grid.astype(np.float64)
    return PayoffField(values=values, r=r)


def counterfactual_payoffs(grid: np.ndarray, r: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-cell payoffs each agent would earn by unilaterally playing D or C.

    Everyone else's strategy is held fixed. Replacing agent i's strategy s_i
    by a shifts each of its five group sums by (a - s_i), so the summed
    cooperator count becomes sigma_i + 5 * (a - s_i). Returns (pay_d, pay_c).
    """
    sigma = group_coop_sum_field(grid)
    s = grid.astype(np.int64)
    pay_d = (r / GROUP_SIZE) * (sigma - GROUP_SIZE * s)
    pay_c = (r / GROUP_SIZE) * (sigma + GROUP_SIZE * (1 - s)) - GROUP_SIZE
    return pay_d, pay_c


def gcc_factor(signal: GlobalSignal) -> float:
    """Cooperator payoff multiplier 1 + rho * g * (1 - g)."""
    return 1.0 + signal.rho * (signal.g * (1.0 - signal.g))


def gcc_adjust(payoff: float, s: int, signal: GlobalSignal) -> float:
    """Apply the global cooperation constraint to one agent's payoff."""
    if s not in (0, 1):
        raise ValueError(f"strategy must be 0 or 1, got {s}")
    if s == COOPERATE:
        return payoff * gcc_factor(signal)
    return payoff


def largest_cluster_size(grid: np.ndarray, strategy: int) -> int:
    """Size of the largest 4-connected cluster of ``strategy`` cells, toroidal."""
    L = grid.shape[0]
    target = grid == strategy
    seen = np.zeros_like(target, dtype=bool)
    best = 0
    for sx in range(L):
        for sy in range(grid.shape[1]):
            if not target[sx, sy] or seen[sx, sy]:
                continue
            size = 0
            queue = deque([(sx, sy)])
            seen[sx, sy] = True
            while queue:
                x, y = queue.popleft()
                size += 1
                for nb in von_neumann_neighbors((x, y), L):
                    if target[nb] and not seen[nb]:
                        seen[nb] = True
                        queue.append(nb)
            best = max(best, size)
    return best
