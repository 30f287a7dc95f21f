"""Replication blocks with derived seeds.

Replications are cut into fixed-size blocks; block ``c`` draws from streams
derived from ``(seed, *key, c)``.  Blocks may run on a thread pool, but the
block layout never depends on the number of workers, so results are
reproducible bit for bit.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

from ._rng import split_streams

BLOCK = 500
_threads = None


def set_threads(n):
    global _threads
    _threads = None if n is None else max(1, int(n))


def get_threads() -> int:
    return _threads or os.cpu_count() or 1


def blocks(reps: int, block: int = BLOCK):
    out, start = [], 0
    while start < reps:
        out.append((start, min(block, reps - start)))
        start += block
    return out


def map_blocks(fn, reps: int, seed: int, key: tuple, block: int = BLOCK):
    """Call ``fn(size, rho_rng, eps_rng)`` per block; results in block order."""
    jobs = [(size, *split_streams(seed, *key, c)) for c, (_, size) in enumerate(blocks(reps, block))]
    workers = min(get_threads(), len(jobs))
    if workers <= 1:
        return [fn(*job) for job in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: fn(*job), jobs))
