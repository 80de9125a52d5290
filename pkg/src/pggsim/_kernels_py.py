"""Pure numpy implementations of the lattice kernels.

Fallback used when the compiled extension is unavailable. All arithmetic is
exact integer work (or a plain gather), so results are bitwise identical to
the compiled path.
"""

from __future__ import annotations

import numpy as np

IMPL = "python"


def plus_sum(a: np.ndarray) -> np.ndarray:
    """Sum of each cell and its four von Neumann neighbours, toroidal."""
    return (
        a
        + np.roll(a, 1, axis=0)
        + np.roll(a, -1, axis=0)
        + np.roll(a, 1, axis=1)
        + np.roll(a, -1, axis=1)
    )


def state_index(s: np.ndarray) -> np.ndarray:
    """5-bit local state per cell: bits (self, N, S, W, E) from high to low."""
    return (
        16 * s
        + 8 * np.roll(s, 1, axis=0)
        + 4 * np.roll(s, -1, axis=0)
        + 2 * np.roll(s, 1, axis=1)
        + np.roll(s, -1, axis=1)
    )


def pick_neighbor(values: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """Per-cell value of the neighbour selected by ``dirs`` (0=N 1=S 2=W 3=E)."""
    stacked = np.stack(
        [
            np.roll(values, 1, axis=0),
            np.roll(values, -1, axis=0),
            np.roll(values, 1, axis=1),
            np.roll(values, -1, axis=1),
        ]
    )
    return np.take_along_axis(stacked, dirs[None, :, :], axis=0)[0]
