from __future__ import annotations

from functools import partial

import pytest

from venom_module_regulation_enforcement.engine.parallel import run_jobs
from venom_module_regulation_enforcement.engine.training import derive_seed


@pytest.mark.parametrize("workers", [1, 3])
def test_run_jobs_keeps_job_order(workers: int) -> None:
    jobs = {("b", index): partial(derive_seed, 5, "job", index) for index in range(6)}
    jobs[("a", 0)] = partial(derive_seed, 5, "first")

    results = run_jobs(jobs, max_workers=workers)

    assert list(results) == list(jobs)
    assert results[("b", 2)] == derive_seed(5, "job", 2)
    assert results[("a", 0)] == derive_seed(5, "first")


def test_run_jobs_empty() -> None:
    assert run_jobs({}, max_workers=4) == {}


def test_run_jobs_surfaces_worker_errors() -> None:
    jobs = {0: partial(derive_seed, 1, "ok"), 1: partial(int, "not a number")}

    with pytest.raises(ValueError):
        run_jobs(jobs, max_workers=2)
