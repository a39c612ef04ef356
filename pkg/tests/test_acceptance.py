"""Acceptance suite: one PASS/FAIL line per criterion, tolerances pinned here.

Run alone with ``pytest tests/test_acceptance.py -s`` (the lines are printed
even without ``-s``).
"""

import json
import math
import time

import numpy as np
import pytest

from favwalk import WalkParams, cli, derive_constants
from favwalk.experiments import (
    CHUNK,
    MAX_CENSORED_FRACTION,
    ExperimentConfig,
    estimate_event_probability,
    event_identity,
    favorite_count_growth,
    gap_growth,
    joint_tail_slope,
    local_time_growth,
    run_total_local_time,
    thick_pair_decay,
)
from favwalk.oracles import (
    atom_never_visit,
    enumerate_check,
    gamma_rate_check,
    no_return_sequence,
    pmf_total_local_time,
)

P = WalkParams("0.75")
SIGMAS_TWO_SIDED = 4.0
SIGMAS_ONE_SIDED = 3.0

# pinned thresholds
AC1_TOL, AC1_N, AC1_SECONDS = 1e-12, 16, 120
AC2_N_DP, AC2_N_MC, AC2_RATIO_SPREAD, AC2_SECONDS = 60, 10**6, 10.0, 300
AC3_N, AC3_TOL, AC3_K_MAX, AC3_SECONDS = 10**6, 1e-6, 10, 600
AC4_PATHS, AC4_HORIZON = 10**4, 10**5
AC5_TARGETS, AC5_N, AC5_CENSOR, AC5_SECONDS = ((3, 2), (5, 2), (5, 3), (8, 3)), 10**5, 0.05, 1200
AC6_REPLICAS, AC6_N, AC6_BAND = 100, 10**6, (0.75, 1.5)
AC7_BAND = (0.3, 5.0)
AC7_EPSILON = 0.02
AC7_LEVEL = 15  # level m at which pooled max G_m / ln m is read
AC8_REPLICAS, AC8_TOL, AC8_SLACK = 4 * 10**6, 1e-9, 0.15


def verdict(capsys, name, ok, detail):
    with capsys.disabled():
        print(f"\n{name} {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, detail


def sd(truth, n):
    return math.sqrt(truth * (1 - truth) / n)


def test_ac1_oracle_equivalence(capsys):
    t0 = time.perf_counter()
    out = enumerate_check(AC1_N, ps=("0.6", "0.75", "0.9"), tol=AC1_TOL)
    took = time.perf_counter() - t0
    ok = out["ok"] and out["rational_exact"] and out["max_float_diff"] <= AC1_TOL and took <= AC1_SECONDS
    verdict(
        capsys,
        "AC1",
        ok,
        f"n<=16, p in {{0.6,0.75,0.9}}: max float diff {out['max_float_diff']:.2e} (tol {AC1_TOL}), "
        f"rational exact={out['rational_exact']}, {out['checked']} cells, {took:.1f}s (limit {AC1_SECONDS}s)",
    )


def test_ac2_no_return(capsys):
    t0 = time.perf_counter()
    gamma = derive_constants(P).gamma
    seq = no_return_sequence(P, AC2_N_DP)
    monotone = all(b <= a for a, b in zip(seq, seq[1:]))
    above = all(g >= gamma for g in seq)
    report = estimate_event_probability(ExperimentConfig(P, "no-return", replicas=AC2_N_MC, seed=2))
    mc_ok = abs(report.estimate - gamma) <= SIGMAS_TWO_SIDED * sd(gamma, report.replicas_used)
    ratios = np.array([r for _, r in gamma_rate_check(P, range(10, 61))])
    spread = ratios.max() / np.median(ratios)
    took = time.perf_counter() - t0
    ok = seq[0] == 1.0 and monotone and above and mc_ok and spread <= AC2_RATIO_SPREAD and took <= AC2_SECONDS
    verdict(
        capsys,
        "AC2",
        ok,
        f"gamma(1)={seq[0]}, non-increasing={monotone}, >=gamma={above}; "
        f"MC {report.estimate:.5f} vs {gamma} ({(report.estimate - gamma) / sd(gamma, report.replicas_used):+.2f} sigma, "
        f"limit 4); ratio max/median {spread:.3f} (limit 10); {took:.1f}s",
    )


def test_ac3_total_local_time(capsys):
    t0 = time.perf_counter()
    sites = [-2, -1, 0, 1, 2]
    cfg = ExperimentConfig(P, "no-return", replicas=AC3_N, seed=3, tolerance=AC3_TOL)
    counts, _, status, d_star = run_total_local_time(cfg, sites)
    good = counts[status == 0]
    n = len(good)
    worst = 0.0
    for col, z in enumerate(sites):
        for k in range(0, AC3_K_MAX + 1):
            truth = float(atom_never_visit(P, z)) if k == 0 else float(pmf_total_local_time(P, z, k))
            freq = np.count_nonzero(good[:, col] == k) / n
            if truth == 0.0:
                dev = math.inf if freq > 0 else 0.0
            else:
                dev = abs(freq - truth) / sd(truth, n)
            worst = max(worst, dev)
    took = time.perf_counter() - t0
    ok = worst <= SIGMAS_TWO_SIDED and n == AC3_N and took <= AC3_SECONDS
    verdict(
        capsys,
        "AC3",
        ok,
        f"z in -2..2, k in 0..10, N={n}, d*={d_star}: worst bin {worst:.2f} sigma (limit 4), {took:.1f}s",
    )


def test_ac4_event_identity(capsys):
    out = event_identity(ExperimentConfig(P, "event-identity", replicas=AC4_PATHS, seed=4, horizon=AC4_HORIZON))
    ok = (
        out["ok"]
        and out["identity_mismatches"] == 0
        and out["ledger_mismatches"] == 0
        and out["record_chain_violations"] == 0
        and out["resolved_pairs"] > 0
    )
    verdict(
        capsys,
        "AC4",
        ok,
        f"{out['paths']} paths, {out['resolved_pairs']} resolved (m,k), identity mismatches "
        f"{out['identity_mismatches']}, G_m mismatches {out['ledger_mismatches']}, "
        f"record-chain violations {out['record_chain_violations']}; "
        f"{out['cross_checked_paths']} paths re-checked on stored paths",
    )


def test_ac5_lower_bound(capsys):
    t0 = time.perf_counter()
    parts, ok = [], True
    for i, (m, k) in enumerate(AC5_TARGETS):
        r = estimate_event_probability(ExperimentConfig(P, "c-prob", replicas=AC5_N, seed=50 + i, m=m, k=k))
        bound = r.extra["bound"]
        censor = r.censored / AC5_N
        this = r.estimate >= bound - SIGMAS_ONE_SIDED * r.stderr and censor < AC5_CENSOR
        ok &= this
        parts.append(f"C_{m}^{k} {r.estimate:.4f}>={bound:.4f}-3se censored {censor:.3%}")
    took = time.perf_counter() - t0
    ok &= took <= AC5_SECONDS
    verdict(capsys, "AC5", ok, "; ".join(parts) + f"; {took:.1f}s")


def test_ac6_local_time_band(capsys):
    out = local_time_growth(
        ExperimentConfig(P, "local-time-growth", replicas=AC6_REPLICAS, seed=6, n_grid=(AC6_N,))
    )
    lam = out["lambda"]
    med = out["rows"][0]["median_ratio"]
    lo, hi = AC6_BAND[0] * lam, AC6_BAND[1] * lam
    verdict(capsys, "AC6", lo <= med <= hi, f"median xi(1e6)/ln 1e6 = {med:.4f} in [{lo:.4f}, {hi:.4f}]")


def test_ac7_favorites(capsys):
    theta = derive_constants(P).theta
    lo, hi = AC7_BAND[0] * theta, AC7_BAND[1] * theta

    a = favorite_count_growth(
        ExperimentConfig(P, "favorite-count-growth", replicas=1000, seed=71, horizon=10**4, n_grid=(10**4,))
    )
    ok_a = a["g_all_positive"][1] and a["g_all_positive"][2]

    b = favorite_count_growth(ExperimentConfig(P, "favorite-count-growth", replicas=1000, seed=72, horizon=10**6))
    frac3 = b["g_positive_fraction"][3]
    ok_b = frac3 >= 0.9

    gaps = gap_growth(ExperimentConfig(P, "gap-growth", replicas=1000, seed=73, horizon=10**6))
    deepest = next(r for r in gaps["rows"] if r["m"] == AC7_LEVEL)
    running = b["rows"][-1]["running_max_ratio"]
    ok_c = deepest["valid"] and lo <= deepest["max_G_over_ln_m"] <= hi and lo <= running <= hi

    d = thick_pair_decay(ExperimentConfig(P, "thick-pair-decay", replicas=1000, seed=0, epsilon=AC7_EPSILON))
    rows = d["rows"]
    ok_d = all(
        y["frequency"] - x["frequency"] <= 2 * math.hypot(x["stderr"], y["stderr"]) for x, y in zip(rows, rows[1:])
    )
    freqs = ", ".join(f"{r['frequency']:.3f}" for r in rows)
    verdict(
        capsys,
        "AC7",
        ok_a and ok_b and ok_c and ok_d,
        f"(a) g(1),g(2)>0 in all replicas={ok_a}; (b) g(3)>0 fraction {frac3:.3f} (>=0.9); "
        f"(c) max G_{deepest['m']}/ln {deepest['m']} = {deepest['max_G_over_ln_m']:.3f}, "
        f"running max #K/lnln n = {running:.3f}, band [{lo:.3f}, {hi:.3f}]; "
        f"(d) eps={AC7_EPSILON} failure frequencies {freqs} non-increasing within 2 sigma={ok_d}",
    )


def test_ac8_joint_tail_slope(capsys):
    out = joint_tail_slope(
        ExperimentConfig(P, "joint-tail-slope", replicas=AC8_REPLICAS, seed=8, tolerance=AC8_TOL, amplitude=1.0)
    )
    limit = out["rate"] + AC8_SLACK
    slope = out["slope"]
    ok = slope is not None and slope <= limit
    est = ", ".join(f"{r['estimate']:.3g}" for r in out["rows"])
    verdict(capsys, "AC8", ok, f"slope {slope} <= {limit:.4f}; estimates {est}; censored {out['censored']}")


def _cli_bytes(tmp_path, capsys, tag, argv):
    out = tmp_path / tag
    code = cli.main(argv + ["--out-dir", str(out)])
    capsys.readouterr()
    assert code == 0, argv
    return {p.name: p.read_bytes() for p in sorted(out.iterdir())}


def test_ac9_reproducibility(tmp_path, capsys):
    runs = {
        "oracle": ["oracle", "no-return", "--p", "0.75", "--n", "30"],
        "simulate": ["simulate", "--p", "0.75", "--steps", "20000", "--seed", "9"],
        "experiment": ["experiment", "c-prob", "--p", "0.75", "--m", "3", "--k", "2",
                       "--replicas", str(2 * CHUNK + 17), "--seed", "9"],
        "table": ["experiment", "gap-growth", "--p", "0.75", "--replicas", str(CHUNK + 5),
                  "--horizon", "3000", "--seed", "9", "--format", "csv"],
    }
    same = {}
    for name, argv in runs.items():
        first = _cli_bytes(tmp_path, capsys, name + "1", argv)
        second = _cli_bytes(tmp_path, capsys, name + "2", argv)
        same[name] = first == second
        if argv[0] == "experiment":
            parallel = _cli_bytes(tmp_path, capsys, name + "j", argv + ["--jobs", "2"])
            same[name + " --jobs 2"] = first == parallel
    verdict(capsys, "AC9", all(same.values()), json.dumps(same))
