"""Process-based task fan-out.

Replica-level work (study fits, coverage replicas) is embarrassingly
parallel, so the only machinery needed is an order-preserving map over
picklable payloads.  A worker count of one short-circuits to a plain
loop, which keeps single-core boxes and debugging sessions free of
multiprocessing noise.  Results do not depend on the worker count;
every payload carries its own derived seed.
"""

import multiprocessing
from concurrent.futures import ProcessPoolExecutor


def run_tasks(fn, payloads, n_workers=1):
    """Apply fn to each payload, preserving order.

    With n_workers > 1 the payloads are spread over a process pool
    (fork start method where available, so jitted code stays warm in
    the children).
    """
    payloads = list(payloads)
    n_workers = int(n_workers)
    if n_workers <= 1 or len(payloads) <= 1:
        return [fn(p) for p in payloads]
    try:
        context = multiprocessing.get_context("fork")
    except ValueError:
        context = multiprocessing.get_context()
    with ProcessPoolExecutor(max_workers=n_workers, mp_context=context) as pool:
        return list(pool.map(fn, payloads))
