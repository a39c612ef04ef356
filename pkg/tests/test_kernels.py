"""Compiled replica loops against the pure-Python route on identical streams."""

import math

import numpy as np
import pytest

from favwalk import (
    LocalTimeLedger,
    ThickPointConfig,
    WalkParams,
    count_thick_pairs,
    predicate_D,
    run_path,
    sample_total_local_time,
)
from favwalk import kernels
from favwalk._philox import step_threshold
from favwalk.experiments import CHUNK, ExperimentConfig, run_ledger, run_replicas, run_thick


@pytest.mark.parametrize("p_text", ["0.6", "0.75"])
def test_total_local_time_matches_python(p_text):
    prm = WalkParams(p_text)
    from favwalk import escape_distance

    d = escape_distance(prm, 1e-6)
    counts, steps, status = kernels.total_local_time_kernel(
        3, 0, 40, step_threshold(prm.p), np.array([2]), 2 + d, 10**7
    )
    for r in range(40):
        s = sample_total_local_time(prm, 3, r, 2)
        assert (s.count, s.steps) == (counts[r, 0], steps[r])
    assert not status.any()


def test_ledger_kernel_matches_python(p75):
    grid = [10, 100, 1000, 4000]
    cfg = ExperimentConfig(p75, "favorite-count-growth", replicas=15, seed=2, horizon=4000, burn_in=500)
    xi, fav, g, run_max, fav_max = run_ledger(cfg, grid)
    for r in range(cfg.replicas):
        path = run_path(p75, 2, r, 4000)
        ledger = LocalTimeLedger()
        best, best_k = 0.0, 0
        for n in range(1, 4001):
            ledger.record_visit(int(path[n]), n)
            if n in grid:
                i = grid.index(n)
                assert (xi[r, i], fav[r, i]) == (ledger.max_count, len(ledger.favorites))
            if n >= 500:
                best = max(best, len(ledger.favorites) / math.log(math.log(n)))
                best_k = max(best_k, len(ledger.favorites))
        assert run_max[r] == pytest.approx(best, rel=1e-14) and fav_max[r] == best_k
        for k in range(1, 6):
            assert g[r, k] == ledger.g[k]
        assert g[r].sum() == 4000


def test_thick_kernel_matches_python(p75):
    cfg = ExperimentConfig(p75, "thick-pair-decay", replicas=12, seed=8, epsilon=0.3, allow_inadmissible=True)
    grid = [50, 500, 2000]
    F, xi, in_band = run_thick(cfg, grid)
    tcfg = ThickPointConfig.for_params(p75, 0.3, strict=False)
    for r in range(cfg.replicas):
        path = run_path(p75, 8, r, 2000)
        for i, n in enumerate(grid):
            assert F[r, i] == count_thick_pairs(path[: n + 1], tcfg)
            assert in_band[r, i] == predicate_D(LocalTimeLedger.from_path(path[: n + 1]), tcfg)


def test_chunking_and_jobs_do_not_change_results(p75, monkeypatch):
    args = (5, step_threshold(p75.p), np.array([0, 1]), 14, 10**6)
    whole = run_replicas("total_local_time_kernel", args, 3000)
    monkeypatch.setattr("favwalk.experiments.CHUNK", 700)
    serial = run_replicas("total_local_time_kernel", args, 3000)
    parallel = run_replicas("total_local_time_kernel", args, 3000, jobs=2)
    for a, b, c in zip(whole, serial, parallel):
        assert np.array_equal(a, b) and np.array_equal(a, c)
    assert CHUNK > 700


def test_event_kernel_overflow_flag(p75):
    # a tiny location table overflows at the first level with many records
    _, _, _, _, status = kernels.event_kernel(0, 0, 20, step_threshold(p75.p), 2000, 64, 2, 0, 0, False)
    assert (status == kernels.OVERFLOW).any()
