"""Counter-based random streams keyed by ``(seed, index, salt)``.

Each Monte Carlo sample draws from its own Philox stream so results do not
depend on how samples are split across workers.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
import os

import numpy as np

MASK64 = (1 << 64) - 1


def stream(seed: int, index: int, salt: int = 0) -> np.random.Generator:
    """Independent generator for sample ``index`` of experiment ``seed``.

    The seed is the Philox key; ``index`` and ``salt`` occupy the two high
    counter words, leaving 2**128 draws per stream before any overlap.
    """
    bitgen = np.random.Philox(key=int(seed) & MASK64, counter=[0, 0, int(index) & MASK64, int(salt) & MASK64])
    return np.random.Generator(bitgen)


def resolve_threads(threads: int | None = None) -> int:
    if threads is None:
        threads = int(os.environ.get("KCSM_THREADS", "1") or 1)
    return max(1, int(threads))


def map_chunks(fn, n: int, threads: int | None = None, chunk: int = 4096):
    """Apply ``fn(start, stop)`` over ``range(n)`` in index order.

    Chunks may run concurrently; the returned list is always ordered by
    ``start`` so downstream reductions are deterministic.
    """
    bounds = [(s, min(n, s + chunk)) for s in range(0, n, chunk)]
    threads = resolve_threads(threads)
    if threads == 1 or len(bounds) <= 1:
        return [fn(a, b) for a, b in bounds]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda ab: fn(*ab), bounds))
