import logging
from typing import Callable, Iterable, Optional

from joblib import Parallel, delayed

from app.core.config import settings

logger = logging.getLogger(__name__)

_pool: Optional[Parallel] = None


def start_workers(n_jobs: Optional[int] = None) -> Parallel:
    """Open the shared thread pool used for sweeps and pipelined fits"""
    global _pool
    if _pool is None:
        n_jobs = n_jobs or settings.THREADS
        _pool = Parallel(n_jobs=n_jobs, prefer="threads", return_as="generator")
        _pool.__enter__()
        logger.info("started %d worker thread(s)", n_jobs)
    return _pool


def shutdown_workers() -> None:
    """Shutdown the pool"""
    global _pool
    if _pool is not None:
        _pool.__exit__(None, None, None)
        _pool = None
        logger.info("workers shut down")


def imap(func: Callable, items: Iterable):
    """Ordered results of func over items, streamed while later items are still being produced."""
    pool = _pool if _pool is not None else Parallel(n_jobs=1, return_as="generator")
    return pool(delayed(func)(item) for item in items)


def parallel_map(func: Callable, items: Iterable) -> list:
    return list(imap(func, items))
