import hashlib
import os
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Iterable, List, Tuple

import numpy as np


def get_settings() -> dict:
    """Environment settings (read after load_dotenv)"""
    output_root = Path(os.getenv("HIERRB_OUTPUT_ROOT", "./runs"))
    return {
        "output_root": output_root,
        "database_url": os.getenv("DATABASE_URL", f"sqlite:///{output_root / 'registry.db'}"),
        "log_file": os.getenv("HIERRB_LOG_FILE", "hierrb.log"),
        "log_level": os.getenv("HIERRB_LOG_LEVEL", "INFO").upper(),
        "workers": int(os.getenv("HIERRB_WORKERS", "1")),
        "dense_limit": int(os.getenv("HIERRB_DENSE_LIMIT", "2500")),
    }


def dense_limit() -> int:
    return int(os.getenv("HIERRB_DENSE_LIMIT", "2500"))


def worker_count() -> int:
    return max(1, int(os.getenv("HIERRB_WORKERS", "1")))


def array_fingerprint(*arrays) -> str:
    """Short SHA-256 of array contents, shapes and dtypes"""
    digest = hashlib.sha256()
    for a in arrays:
        a = np.ascontiguousarray(a)
        digest.update(str((a.shape, a.dtype.str)).encode())
        digest.update(a.tobytes())
    return digest.hexdigest()[:16]


def parallel_map(fn: Callable, items: Iterable, workers: int = None) -> List:
    """
    Map fn over items, optionally on a thread pool

    Args:
        fn: function of one item
        items: inputs
        workers: thread count (defaults to HIERRB_WORKERS)

    Returns:
        Results in input order
    """
    items = list(items)
    workers = workers or worker_count()
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def median_time(fn: Callable, repeats: int = 11) -> Tuple[object, float]:
    """
    Median wall time of repeated calls (warm cache)

    Args:
        fn: zero-argument callable
        repeats: number of timed calls

    Returns:
        (result of the last call, median seconds)
    """
    result = fn()
    samples = []
    for _ in range(max(1, repeats)):
        start = time.perf_counter()
        result = fn()
        samples.append(time.perf_counter() - start)
    return result, float(np.median(samples))


def format_mu(mu) -> str:
    """Compact parameter formatting for logs and reports"""
    return "(" + ", ".join(f"{float(x):.6g}" for x in np.atleast_1d(mu)) + ")"


def mu_key(mu) -> tuple:
    return tuple(float(x) for x in np.atleast_1d(mu))
