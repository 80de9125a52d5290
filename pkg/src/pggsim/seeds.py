"""Deterministic seed derivation.

Every source of randomness in a run is a Philox stream keyed by a child seed
derived from the master seed and a tuple of integer indices via splitmix64
mixing. The derivation is pure 64-bit integer arithmetic, so a (master seed,
index tuple) pair maps to the same stream on every platform and for every
worker count.

Stream tags used by the runners:

    INIT_STREAM     initial lattice draw
    WEIGHTS_STREAM  policy network weight init
    EPOCH_STREAM    per-epoch action sampling (one child per epoch index)

Sweeps and replicate campaigns derive per-run master seeds as
``child_seed(master, value_index, replicate_index)``.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15

INIT_STREAM = 1
WEIGHTS_STREAM = 2
EPOCH_STREAM = 3

__all__ = [
    "INIT_STREAM",
    "WEIGHTS_STREAM",
    "EPOCH_STREAM",
    "splitmix64",
    "child_seed",
    "stream",
]


def splitmix64(x: int) -> int:
    """One splitmix64 output step for the 64-bit state ``x``."""
    x = (x + _GAMMA) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return (z ^ (z >> 31)) & _MASK


def child_seed(master: int, *indices: int) -> int:
    """Derive a 64-bit child seed from ``master`` and an index tuple.

    Each index is folded into the state with one splitmix64 round, so
    (master, i) and (master, j) collide only if splitmix64 does.
    """
    state = splitmix64(master & _MASK)
    for idx in indices:
        state = splitmix64((state ^ (idx & _MASK)) & _MASK)
    return state


def stream(master: int, *indices: int) -> np.random.Generator:
    """Philox generator keyed by ``child_seed(master, *indices)``."""
    return np.random.Generator(np.random.Philox(key=child_seed(master, *indices)))
