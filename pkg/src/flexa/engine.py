"""Shared-memory worker pool with deterministic reductions.

Work is split over a *fixed* chunk grid that does not depend on the
worker count, and reductions combine chunk partials in fixed pairwise
order.  Together these make every result bit-identical for any number of
workers, which is what lets the solvers promise worker-count invariance.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Sequence, Tuple

import numpy as np

# Number of column/block chunks used for matrix products regardless of the
# worker count; workers just pick up chunks from this grid.
FIXED_CHUNKS = 16


def chunk_ranges(n: int, k: int = FIXED_CHUNKS) -> List[Tuple[int, int]]:
    """Split ``range(n)`` into at most ``k`` contiguous near-equal ranges."""
    k = max(1, min(k, n))
    bounds = np.linspace(0, n, k + 1).astype(int)
    return [(int(bounds[i]), int(bounds[i + 1])) for i in range(k) if bounds[i] < bounds[i + 1]]


def pairwise_sum(arrays: Sequence[np.ndarray]) -> np.ndarray:
    """Sum arrays with a fixed-shape pairwise tree (order independent of
    how the terms were produced)."""
    items = list(arrays)
    if not items:
        raise ValueError("nothing to sum")
    while len(items) > 1:
        nxt = []
        for i in range(0, len(items) - 1, 2):
            nxt.append(items[i] + items[i + 1])
        if len(items) % 2:
            nxt.append(items[-1])
        items = nxt
    return items[0]


class WorkerPool:
    """Maps callables over work items with ``workers`` threads.

    With one worker everything runs inline; results come back in item
    order either way.  Numpy releases the GIL inside BLAS kernels, so
    chunked matrix products do overlap.
    """

    def __init__(self, workers: int = 1):
        if workers < 1:
            raise ValueError("need at least one worker")
        self.workers = int(workers)
        self._pool = (
            ThreadPoolExecutor(max_workers=self.workers) if self.workers > 1 else None
        )

    def map(self, fn: Callable, items: Sequence) -> list:
        if self._pool is None or len(items) <= 1:
            return [fn(it) for it in items]
        return list(self._pool.map(fn, items))

    def close(self):
        if self._pool is not None:
            self._pool.shutdown(wait=True)
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def partition_blocks(N: int, P: int) -> List[List[int]]:
    """Default assignment of blocks to workers: contiguous equal slices."""
    P = max(1, min(P, N))
    bounds = np.linspace(0, N, P + 1).astype(int)
    return [list(range(int(bounds[p]), int(bounds[p + 1]))) for p in range(P)]
