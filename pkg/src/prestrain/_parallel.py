"""Chunked, order-preserving map over flattened node arrays."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

DEFAULT_CHUNK = 8192


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get("PRESTRAIN_THREADS", "1")))
    except ValueError:
        return 1


def map_chunks(fn, *arrays, threads: int | None = None, chunk: int = DEFAULT_CHUNK):
    """Apply ``fn`` to aligned slices of ``arrays`` (split on axis 0).

    Results are concatenated in input order, so any reduction done afterwards
    is independent of the thread count.  ``fn`` may return an array or a tuple
    of arrays.
    """
    n = len(arrays[0])
    threads = default_threads() if threads is None else max(1, int(threads))
    bounds = [(i, min(i + chunk, n)) for i in range(0, n, chunk)] or [(0, 0)]
    slices = [tuple(a[i:j] for a in arrays) for i, j in bounds]
    if threads == 1 or len(slices) == 1:
        parts = [fn(*s) for s in slices]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda s: fn(*s), slices))
    if isinstance(parts[0], tuple):
        return tuple(np.concatenate(p, axis=0) for p in zip(*parts))
    return np.concatenate(parts, axis=0)
