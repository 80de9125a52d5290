"""Kernel selection: compiled extension if available, numpy fallback otherwise.

Set ``PGGSIM_KERNELS=python`` or ``PGGSIM_KERNELS=compiled`` to force a path
(the latter raises if the extension was not built). Inputs are coerced to
C-contiguous int64/float64 here so both implementations see identical dtypes;
since every kernel is integer-exact or a pure gather, the two paths return
bitwise-identical arrays.
"""

from __future__ import annotations

import os

import numpy as np

from . import _kernels_py

_forced = os.environ.get("PGGSIM_KERNELS", "").strip().lower()

if _forced in ("python", "py"):
    _impl = _kernels_py
elif _forced in ("compiled", "c"):
    from . import _kernels as _impl  # noqa: F401  (ImportError is the contract here)
else:
    try:
        from . import _kernels as _impl
    except ImportError:
        _impl = _kernels_py

IMPL = _impl.IMPL
HAVE_COMPILED = IMPL == "compiled"

__all__ = ["IMPL", "HAVE_COMPILED", "plus_sum", "state_index", "pick_neighbor"]


def _as_i64(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.int64)


def plus_sum(a: np.ndarray) -> np.ndarray:
    """Toroidal sum of each cell and its four von Neumann neighbours (int64)."""
    return _impl.plus_sum(_as_i64(a))


def state_index(grid: np.ndarray) -> np.ndarray:
    """Per-cell 5-bit local state index in [0, 32).

    Bit layout, high to low: (self, N, S, W, E).
    """
    return _impl.state_index(_as_i64(grid))


def pick_neighbor(values: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """Gather the neighbour value selected by ``dirs`` (0=N, 1=S, 2=W, 3=E)."""
    if values.dtype == np.float64:
        v = np.ascontiguousarray(values)
    else:
        v = _as_i64(values)
    return _impl.pick_neighbor(v, _as_i64(dirs))
