"""Deterministic worker-pool helpers.

Chunk boundaries are a fixed function of the input size, never of the worker
count, and partial results are always combined in chunk order, so outputs are
bit-identical whether work runs on 1 thread or many.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

CHUNK_ROWS = 2048

_ENV_THREADS = "HGLMM_THREADS"


def resolve_threads(threads: int | None = None) -> int:
    """CLI --threads value, else HGLMM_THREADS, else 1."""
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get(_ENV_THREADS)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def iter_chunks(n: int, chunk: int = CHUNK_ROWS):
    """Yield (begin, end) ranges covering 0..n in fixed-size chunks."""
    for begin in range(0, n, chunk):
        yield begin, min(begin + chunk, n)


def map_chunks(fn, n: int, threads: int = 1, chunk: int = CHUNK_ROWS) -> list:
    """Apply fn(begin, end) to every chunk; return results in chunk order."""
    ranges = list(iter_chunks(n, chunk))
    if threads <= 1 or len(ranges) <= 1:
        return [fn(b, e) for b, e in ranges]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(fn, b, e) for b, e in ranges]
        return [f.result() for f in futures]


def map_items(fn, items, threads: int = 1) -> list:
    """Apply fn to each item; results returned in input order."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
