"""Deterministic worker-pool helpers.

Work is split into fixed chunks independent of the pool size, and results are
reassembled by chunk index, so outputs are identical for any worker count.
"""

import os
from concurrent.futures import ThreadPoolExecutor

WORKERS_ENV = "PATHDENSITY_WORKERS"


def worker_count(explicit: int | None = None) -> int:
    if explicit is not None:
        return max(1, int(explicit))
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def map_indexed(fn, items, workers: int | None = None) -> list:
    """Apply fn to each item; results ordered like the input regardless of pool."""
    n = worker_count(workers)
    items = list(items)
    if n == 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))
