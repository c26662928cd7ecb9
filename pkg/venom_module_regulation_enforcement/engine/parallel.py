"""Process pool for independent training runs.

Jobs are zero-argument callables that must pickle: ``functools.partial`` over
module-level functions with plain data or dataclass arguments.
"""

from __future__ import annotations

import logging
import multiprocessing
from collections.abc import Callable, Hashable, Mapping
from concurrent.futures import ProcessPoolExecutor, as_completed
from typing import TypeVar

import torch

logger = logging.getLogger(__name__)

K = TypeVar("K", bound=Hashable)
T = TypeVar("T")


def _init_worker() -> None:
    # One intra-op thread per process; the pool already fills the cores.
    torch.set_num_threads(1)


def run_jobs(jobs: Mapping[K, Callable[[], T]], max_workers: int) -> dict[K, T]:
    """Run every job and return results keyed like ``jobs``, in the same order."""
    workers = max(1, min(max_workers, len(jobs)))
    if workers == 1:
        return {key: job() for key, job in jobs.items()}
    logger.debug("Running %d jobs on %d worker processes", len(jobs), workers)
    results: dict[K, T] = {}
    with ProcessPoolExecutor(
        max_workers=workers,
        mp_context=multiprocessing.get_context("spawn"),
        initializer=_init_worker,
    ) as executor:
        futures = {executor.submit(job): key for key, job in jobs.items()}
        for future in as_completed(futures):
            results[futures[future]] = future.result()
    return {key: results[key] for key in jobs}
