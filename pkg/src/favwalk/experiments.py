"""Monte Carlo harness: replica orchestration, estimators and the experiment suites.

Replica ``i`` always uses stream id ``i`` of the configured seed. Replica
ranges are cut into contiguous chunks, optionally run in worker processes, and
concatenated back in stream order, so every output is independent of the
number of workers.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
import multiprocessing

import numpy as np

from . import kernels
from ._philox import step_threshold
from .events import DetectorError, evaluate_events, scan_path
from .localtime import escape_distance
from .oracles import enumerate_check
from .thick import ThickPointConfig, snap
from .walk import ParameterError, WalkParams, derive_constants, run_path

log = logging.getLogger(__name__)

WILSON_Z = 1.959963984540054  # two-sided 95% normal quantile
MAX_CENSORED_FRACTION = 0.2
CHUNK = 4096  # replicas per task; any value gives identical results

EVENTS = ("c-prob", "c-hat", "no-return", "joint-tail", "thick-failure", "hit")
TABLES = (
    "local-time-growth",
    "favorite-count-growth",
    "gap-growth",
    "thick-pair-decay",
    "joint-tail-slope",
)
CHECKS = ("enumerate-check", "event-identity")
EXPERIMENTS = EVENTS + TABLES + CHECKS


@dataclass(frozen=True)
class ExperimentConfig:
    params: WalkParams
    name: str = "c-prob"
    replicas: int = 1000
    seed: int = 0
    horizon: int = 100_000
    m: int | None = None
    k: int | None = None
    z: int | None = None
    targets: tuple = (-1,)
    epsilon: float | None = None
    n_grid: tuple = ()
    m_max: int | None = None
    amplitude: float = 1.0  # A in the joint-tail threshold 2 lam A ln n
    tolerance: float = 1e-6  # truncation bias allowed for total local times
    burn_in: int = 1000
    n_enum: int = 12
    allow_inadmissible: bool = False
    jobs: int = 1  # wall time only; never echoed

    def __post_init__(self):
        if self.name not in EXPERIMENTS:
            raise ParameterError(f"unknown experiment {self.name!r}")
        if self.replicas < 1:
            raise ParameterError("replicas must be at least 1")
        if self.horizon < 1:
            raise ParameterError("horizon must be at least 1")
        if not 0 <= self.seed < 2**64:
            raise ParameterError("seed must be an unsigned 64-bit integer")
        if self.jobs < 1:
            raise ParameterError("jobs must be at least 1")
        if list(self.n_grid) != sorted(set(self.n_grid)):
            raise ParameterError("n-grid must be strictly increasing")
        if self.epsilon is not None:
            ThickPointConfig.for_params(
                self.params, self.epsilon, strict=not self.allow_inadmissible
            )

    def echo(self) -> dict:
        out = {"p": self.params.p, "start": self.params.start}
        for key, value in asdict(self).items():
            if key in ("params", "jobs"):
                continue
            out[key] = list(value) if isinstance(value, tuple) else value
        return out


@dataclass
class EstimateReport:
    estimate: float
    stderr: float
    ci95: tuple
    replicas_used: int
    censored: int
    successes: int
    optimistic: float
    pessimistic: float
    valid: bool
    seed: int
    config: dict
    extra: dict = field(default_factory=dict)
    wall_time: float | None = None  # serialized only on request

    def to_dict(self, timing: bool = False) -> dict:
        out = asdict(self)
        out["ci95"] = list(self.ci95)
        if not timing:
            out.pop("wall_time")
        return out


def wilson_interval(successes: int, trials: int, z: float = WILSON_Z) -> tuple:
    if trials == 0:
        return (0.0, 1.0)
    phat = successes / trials
    denom = 1 + z * z / trials
    centre = (phat + z * z / (2 * trials)) / denom
    half = z * math.sqrt(phat * (1 - phat) / trials + z * z / (4 * trials * trials)) / denom
    lo = 0.0 if successes == 0 else max(0.0, centre - half)
    hi = 1.0 if successes == trials else min(1.0, centre + half)
    return (lo, hi)


def bernoulli_report(
    successes: int, censored: int, total: int, config: ExperimentConfig, **extra
) -> EstimateReport:
    """Estimate from resolved replicas; censored ones are counted, never dropped silently.

    ``pessimistic`` counts censored replicas as failures and ``optimistic`` as
    successes; the two bracket ``estimate``.
    """
    resolved = total - censored
    phat = successes / resolved if resolved else float("nan")
    stderr = math.sqrt(phat * (1 - phat) / resolved) if resolved else float("nan")
    return EstimateReport(
        estimate=phat,
        stderr=stderr,
        ci95=wilson_interval(successes, resolved),
        replicas_used=resolved,
        censored=censored,
        successes=successes,
        optimistic=(successes + censored) / total,
        pessimistic=successes / total,
        valid=censored <= MAX_CENSORED_FRACTION * total,
        seed=config.seed,
        config=config.echo(),
        extra=dict(extra),
    )


# -- replica orchestration ---------------------------------------------------


def _call(kernel_name, args, lo, hi):
    seed, rest = args[0], args[1:]
    return getattr(kernels, kernel_name)(seed, lo, hi, *rest)


def run_replicas(kernel_name: str, args: tuple, replicas: int, jobs: int = 1) -> tuple:
    """Run ``kernels.<kernel_name>(seed, lo, hi, *rest)`` over ``0..replicas-1``.

    ``args`` is ``(seed, *rest)``. Chunks are merged in stream order.
    """
    bounds = [(lo, min(lo + CHUNK, replicas)) for lo in range(0, replicas, CHUNK)]
    if jobs == 1 or len(bounds) == 1:
        parts = [_call(kernel_name, args, lo, hi) for lo, hi in bounds]
    else:
        ctx = multiprocessing.get_context("fork")
        with ProcessPoolExecutor(max_workers=jobs, mp_context=ctx) as pool:
            futures = [pool.submit(_call, kernel_name, args, lo, hi) for lo, hi in bounds]
            parts = [f.result() for f in futures]
    return tuple(np.concatenate([p[i] for p in parts]) for i in range(len(parts[0])))


def _threshold(config):
    return step_threshold(config.params.p)


def run_events(config: ExperimentConfig, target=(0, 0), stop_at_target=False, horizon=None):
    m_max = 64
    return run_replicas(
        "event_kernel",
        (
            config.seed,
            _threshold(config),
            horizon or config.horizon,
            m_max,
            256,
            target[0],
            target[1],
            stop_at_target,
        ),
        config.replicas,
        config.jobs,
    )


def run_total_local_time(config: ExperimentConfig, sites, tolerance=None, max_steps=10**7):
    """Total local times at relative ``sites``, stopped ``d*`` above the highest one."""
    d_star = escape_distance(config.params, tolerance or config.tolerance)
    sites = np.asarray(sites, dtype=np.int64)
    counts, steps, status = run_replicas(
        "total_local_time_kernel",
        (config.seed, _threshold(config), sites, int(sites.max()) + d_star, max_steps),
        config.replicas,
        config.jobs,
    )
    return counts, steps, status, d_star


def run_ledger(config: ExperimentConfig, grid, burn_in=None, g_max=5):
    grid = np.asarray(grid, dtype=np.int64)
    return run_replicas(
        "ledger_kernel",
        (
            config.seed,
            _threshold(config),
            int(max(config.horizon, grid.max())),
            grid,
            burn_in or config.burn_in,
            g_max,
        ),
        config.replicas,
        config.jobs,
    )


def _thick_config(config: ExperimentConfig) -> ThickPointConfig:
    if config.epsilon is None:
        raise ParameterError("this experiment needs --epsilon")
    return ThickPointConfig.for_params(
        config.params, config.epsilon, strict=not config.allow_inadmissible
    )


def run_thick(config: ExperimentConfig, grid):
    cfg = _thick_config(config)
    grid = np.asarray(grid, dtype=np.int64)
    if grid.min() < 2:
        raise ParameterError("thick-point statistics need n >= 2")
    bands = np.array([cfg.band(int(n)) for n in grid])
    return run_replicas(
        "thick_kernel",
        (
            config.seed,
            _threshold(config),
            grid,
            np.array([cfg.threshold(int(n)) for n in grid]),
            np.array([cfg.window(int(n)) for n in grid], dtype=np.int64),
            bands[:, 0].copy(),
            bands[:, 1].copy(),
        ),
        config.replicas,
        config.jobs,
    )


def _raise_on_mismatch(checks):
    bad = checks[:, 1:4].sum(axis=0)
    if bad.any():
        raise DetectorError(
            f"event identities violated: {int(bad[0])} window/stopping-time, "
            f"{int(bad[1])} ledger, {int(bad[2])} record-chain mismatches"
        )


# -- events ------------------------------------------------------------------


def joint_tail_threshold(params: WalkParams, amplitude: float, n: float) -> float:
    return snap(2 * derive_constants(params).lam * amplitude * math.log(n))


def estimate_event_probability(config: ExperimentConfig) -> EstimateReport:
    """Bernoulli estimate of the configured event over ``config.replicas`` replicas."""
    t0 = time.perf_counter()
    name = config.name
    total = config.replicas
    extra = {}
    if name in ("c-prob", "c-hat"):
        if config.m is None or config.k is None or config.m < 1 or config.k < 1:
            raise ParameterError(f"{name} needs --m >= 1 and --k >= 1")
        _, checks, target, steps, status = run_events(
            config, (config.m, config.k), stop_at_target=True
        )
        _raise_on_mismatch(checks)
        col = 0 if name == "c-prob" else 1
        outcome = target[:, col]
        unusable = (outcome < 0) | (status == kernels.OVERFLOW)
        successes = int(np.count_nonzero((outcome == 1) & ~unusable))
        censored = int(np.count_nonzero(unusable))
        extra = {"bound": (1 - 2 * config.params.q) ** config.k, "mean_steps": float(steps.mean())}
    elif name == "no-return":
        counts, _, status, d_star = run_total_local_time(config, [0])
        censored = int(np.count_nonzero(status))
        successes = int(np.count_nonzero((counts[:, 0] == 0) & (status == 0)))
        extra = {"d_star": d_star, "bias_bound": derive_constants(config.params).h ** d_star}
    elif name == "joint-tail":
        z = 1 if config.z is None else config.z
        n = config.n_grid[0] if config.n_grid else 100
        counts, _, status, d_star = run_total_local_time(config, sorted({0, z}))
        level = joint_tail_threshold(config.params, config.amplitude, n)
        total_lt = counts.sum(axis=1) if z != 0 else 2 * counts[:, 0]
        censored = int(np.count_nonzero(status))
        successes = int(np.count_nonzero((total_lt > level) & (status == 0)))
        extra = {"n": n, "level": level, "d_star": d_star}
    elif name == "thick-failure":
        F, _, in_band = run_thick(config, [config.horizon])
        successes = int(np.count_nonzero((F[:, 0] > 0) | ~in_band[:, 0]))
        censored = 0
    elif name == "hit":
        targets = np.asarray(sorted(set(config.targets)), dtype=np.int64)
        escape = escape_distance(config.params, config.tolerance) if targets.max() < 0 else 0
        hit, _ = run_replicas(
            "hit_kernel",
            (config.seed, _threshold(config), targets, config.horizon, escape),
            total,
            config.jobs,
        )
        successes = int(np.count_nonzero(hit >= 0))
        censored = 0
        extra = {"cap": config.horizon, "escape": escape}
    else:
        raise ParameterError(f"{name} is not a Bernoulli event")
    report = bernoulli_report(successes, censored, total, config, **extra)
    report.wall_time = time.perf_counter() - t0
    return report


# -- tables ------------------------------------------------------------------


def _default_grid(config, fallback):
    return tuple(config.n_grid) if config.n_grid else fallback


def local_time_growth(config: ExperimentConfig) -> dict:
    """Per grid time: median, quartiles and relative spread of ``xi(n) / ln n``."""
    grid = _default_grid(config, (10**4, 10**5, 10**6))
    xi, *_ = run_ledger(replace(config, horizon=max(grid)), grid)
    lam = derive_constants(config.params).lam
    rows = []
    for i, n in enumerate(grid):
        ratio = xi[:, i] / math.log(n)
        q25, med, q75 = np.percentile(ratio, [25, 50, 75])
        rows.append(
            {
                "n": n,
                "median_ratio": float(med),
                "q25": float(q25),
                "q75": float(q75),
                "iqr_over_median": float((q75 - q25) / med),
                "median_over_lambda": float(med / lam),
                "max_xi": int(xi[:, i].max()),
            }
        )
    return {"rows": rows, "lambda": lam}


def favorite_count_growth(config: ExperimentConfig) -> dict:
    """Favorite counts: pooled maxima on the grid and ``g(k)`` occupation totals.

    ``running_max_ratio`` is the running maximum down the grid of
    ``max_replicas #K(n) / ln ln n``. ``sup_ratio_after_burn_in`` is the same
    supremum over every ``n >= burn_in`` rather than the grid.
    """
    grid = _default_grid(config, (10**3, 10**4, 10**5, 10**6))
    if min(grid) < 3:
        raise ParameterError("ln ln n needs n >= 3")
    horizon = max(config.horizon, max(grid))
    if horizon < 1000:
        raise ParameterError("favorite-count-growth needs horizon >= 1000")
    g_max = 5
    _, fav, g, run_max, fav_max = run_ledger(replace(config, horizon=horizon), grid, g_max=g_max)
    rows = []
    best = 0.0
    for i, n in enumerate(grid):
        pooled = int(fav[:, i].max())
        ratio = pooled / math.log(math.log(n))
        best = max(best, ratio)
        rows.append(
            {"n": n, "max_fav": pooled, "ratio": ratio, "running_max_ratio": best}
        )
    return {
        "rows": rows,
        "theta": derive_constants(config.params).theta,
        "g_totals": {k: int(g[:, k].sum()) for k in range(1, g_max + 1)},
        "g_positive_fraction": {
            k: float(np.count_nonzero(g[:, k] > 0) / config.replicas) for k in range(1, g_max + 1)
        },
        "g_all_positive": {k: bool((g[:, k] > 0).all()) for k in range(1, g_max + 1)},
        "sup_ratio_after_burn_in": float(run_max.max()),
        "burn_in": config.burn_in,
        "max_fav_after_burn_in": int(fav_max.max()),
    }


def default_m_max(params: WalkParams, horizon: int) -> int:
    """Largest level whose ``T_{m+1}^1`` is typically inside the horizon."""
    return max(1, math.floor(derive_constants(params).lam * math.log(horizon)) - 2)


def gap_growth(config: ExperimentConfig) -> dict:
    """Per level ``m``: pooled max and mean of ``G_m`` and the censored fraction."""
    m_max = config.m_max or default_m_max(config.params, config.horizon)
    gaps, checks, _, _, status = run_events(config)
    _raise_on_mismatch(checks)
    usable = status != kernels.OVERFLOW
    rows = []
    for m in range(1, m_max + 1):
        col = gaps[usable, m]
        resolved = col[col >= 0]
        censored = 1 - resolved.size / config.replicas
        row = {
            "m": m,
            "max_G": int(resolved.max()) if resolved.size else None,
            "mean_G": float(resolved.mean()) if resolved.size else None,
            "censored_fraction": censored,
            "valid": censored <= MAX_CENSORED_FRACTION,
            "max_G_over_ln_m": (float(resolved.max() / math.log(m)) if m > 1 and resolved.size else None),
        }
        rows.append(row)
    return {"rows": rows, "theta": derive_constants(config.params).theta, "m_max": m_max}


def thick_pair_decay(config: ExperimentConfig) -> dict:
    """Frequency of ``(D_n ∩ E_n)^c`` per grid time, with Wilson intervals."""
    grid = _default_grid(config, (10**3, 10**4, 10**5))
    F, xi, in_band = run_thick(config, grid)
    rows = []
    for i, n in enumerate(grid):
        fail = (F[:, i] > 0) | ~in_band[:, i]
        s = int(np.count_nonzero(fail))
        N = config.replicas
        phat = s / N
        rows.append(
            {
                "n": n,
                "frequency": phat,
                "stderr": math.sqrt(phat * (1 - phat) / N),
                "ci95": list(wilson_interval(s, N)),
                "d_failure": float(np.count_nonzero(~in_band[:, i]) / N),
                "e_failure": float(np.count_nonzero(F[:, i] > 0) / N),
                "mean_F": float(F[:, i].mean()),
            }
        )
    cfg = _thick_config(config)
    return {"rows": rows, "epsilon": cfg.epsilon, "admissible": cfg.admissible}


def joint_tail_slope(config: ExperimentConfig) -> dict:
    """Least-squares log-log slope of ``P(xi(0,inf) + xi(z,inf) > 2 lam A ln n)`` over the grid."""
    grid = _default_grid(config, (10**2, 10**3, 10**4))
    z = 1 if config.z is None else config.z
    counts, _, status, d_star = run_total_local_time(config, sorted({0, z}))
    total_lt = counts.sum(axis=1) if z != 0 else 2 * counts[:, 0]
    ok = status == 0
    N = int(np.count_nonzero(ok))
    rows = []
    for n in grid:
        level = joint_tail_threshold(config.params, config.amplitude, n)
        s = int(np.count_nonzero((total_lt > level) & ok))
        phat = s / N
        rows.append(
            {
                "n": n,
                "level": level,
                "estimate": phat,
                "stderr": math.sqrt(phat * (1 - phat) / N),
                "successes": s,
            }
        )
    slope = None
    if all(r["successes"] > 0 for r in rows) and len(rows) >= 2:
        x = np.log(np.asarray(grid, dtype=float))
        y = np.log([r["estimate"] for r in rows])
        slope = float(np.polyfit(x, y, 1)[0])
    delta = derive_constants(config.params).delta
    return {
        "rows": rows,
        "slope": slope,
        "rate": -config.amplitude * (1 + delta),
        "censored": int(config.replicas - N),
        "d_star": d_star,
    }


# -- checks ------------------------------------------------------------------


def event_identity(config: ExperimentConfig, cross_check: int = 200, cross_horizon: int = 2000) -> dict:
    """Both ``C_m^k`` computations on every resolved ``(m, k)`` of every replica.

    The compiled scan covers all replicas; the first ``cross_check`` replicas are
    also replayed on stored paths through the pure-Python detectors, whose
    gaps must match the compiled ones.
    """
    gaps, checks, _, _, status = run_events(config)
    summary = {
        "paths": config.replicas,
        "resolved_pairs": int(checks[:, 0].sum()),
        "identity_mismatches": int(checks[:, 1].sum()),
        "ledger_mismatches": int(checks[:, 2].sum()),
        "record_chain_violations": int(checks[:, 3].sum()),
        "early_window_hits": int(checks[:, 4].sum()),
        "overflow": int(np.count_nonzero(status == kernels.OVERFLOW)),
    }
    n_cross = min(cross_check, config.replicas)
    h = min(cross_horizon, config.horizon)
    small = replace(config, replicas=n_cross)
    k_gaps, *_ = run_events(small, horizon=h)
    pairs = 0
    for r in range(n_cross):
        path = run_path(config.params, config.seed, r, h)
        verdict = evaluate_events(path)  # raises DetectorError on disagreement
        pairs += verdict.checked
        log_, _ = scan_path(path)
        for m in range(1, k_gaps.shape[1]):
            if k_gaps[r, m] != log_.gaps.get(m, -1):
                raise DetectorError(f"replica {r}: compiled G_{m} differs from the stored-path scan")
    summary["cross_checked_paths"] = n_cross
    summary["cross_checked_pairs"] = pairs
    _raise_on_mismatch(checks)
    summary["ok"] = True
    return summary


def run_experiment(config: ExperimentConfig) -> dict:
    """Dispatch by name; returns a JSON-ready dict."""
    t0 = time.perf_counter()
    name = config.name
    if name in EVENTS:
        report = estimate_event_probability(config)
        return {"experiment": name, **report.to_dict(timing=True)}
    if name == "enumerate-check":
        out = enumerate_check(config.n_enum)
    elif name == "event-identity":
        out = event_identity(config)
    else:
        out = {
            "local-time-growth": local_time_growth,
            "favorite-count-growth": favorite_count_growth,
            "gap-growth": gap_growth,
            "thick-pair-decay": thick_pair_decay,
            "joint-tail-slope": joint_tail_slope,
        }[name](config)
    out = {"experiment": name, "seed": config.seed, "config": config.echo(), **out}
    out["wall_time"] = time.perf_counter() - t0
    log.info("%s finished in %.2fs", name, out["wall_time"])
    return out
