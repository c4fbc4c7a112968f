"""Fixed-depth signal histories keyed by absolute sample index.

The controller pipeline is full of "value of x at step k-i" lookups; doing
them through an indexed ring buffer (instead of relative list slicing) keeps
the time bookkeeping in one place and turns every stale access into an
explicit :class:`HistoryUnderrunError` instead of silent zero padding.
"""

from __future__ import annotations

import numpy as np

from .errors import HistoryUnderrunError


class History:
    """Ring buffer of vector samples indexed by an absolute step counter.

    Samples must be pushed with consecutive indices; ``get(k)`` returns the
    sample pushed at step ``k`` as long as it is among the newest ``depth``
    samples.
    """

    def __init__(self, depth: int, dim: int):
        if depth < 1:
            raise ValueError("depth must be >= 1")
        self.depth = depth
        self.dim = dim
        self._buf = np.zeros((depth, dim))
        self._last_k: int | None = None
        self._count = 0

    @property
    def last_k(self) -> int | None:
        return self._last_k

    def push(self, k: int, value) -> None:
        value = np.asarray(value, dtype=float)
        if value.shape != (self.dim,):
            raise ValueError(f"expected shape ({self.dim},), got {value.shape}")
        if self._last_k is not None and k != self._last_k + 1:
            raise ValueError(f"non-consecutive push: last k={self._last_k}, got {k}")
        self._last_k = k
        self._count = min(self._count + 1, self.depth)
        self._buf[k % self.depth] = value

    def has(self, k: int) -> bool:
        if self._last_k is None:
            return False
        return 0 <= self._last_k - k < self._count

    def get(self, k: int) -> np.ndarray:
        if not self.has(k):
            raise HistoryUnderrunError(
                f"history underrun: sample k={k} not available "
                f"(last={self._last_k}, kept={self._count})"
            )
        return self._buf[k % self.depth].copy()

    def window(self, k: int, count: int) -> np.ndarray:
        """Samples at k, k-1, ..., k-count+1 stacked newest-first, shape (count, dim)."""
        out = np.empty((count, self.dim))
        for i in range(count):
            out[i] = self.get(k - i)
        return out
