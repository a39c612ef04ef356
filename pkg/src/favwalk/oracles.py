"""Exact, sampling-free reference values.

Every query can run in binary floats (default) or exact rationals
(``exact=True``, using ``WalkParams.p_exact``). Enumeration walks all ``2**n``
step sequences in Gray-code order so consecutive paths differ in one step; the
changed suffix is short on average and the local-time histogram is updated in
place rather than rebuilt.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .events import DetectorError, scan_path
from .thick import ThickPointConfig, count_thick_pairs
from .walk import WalkParams, derive_constants

ENUMERATION_CAP = 24


@dataclass(frozen=True)
class ExactProbability:
    value: float | Fraction
    method: str  # closed-form | dynamic-program | enumeration
    arithmetic: str  # binary-float | exact-rational
    # set by enumeration when some paths leave the event unresolved
    lower: float | Fraction | None = None
    upper: float | Fraction | None = None

    def __float__(self):
        return float(self.value)


def _pq(params: WalkParams, exact: bool):
    if exact:
        return params.p_exact, params.q_exact
    return params.p, params.q


def _arith(exact: bool) -> str:
    return "exact-rational" if exact else "binary-float"


def _log_binom(n: int, k: int) -> float:
    # running sum of log((n - i) / (i + 1)); no factorial overflow
    k = min(k, n - k)
    return math.fsum(math.log((n - i) / (i + 1)) for i in range(k))


def pmf_position(params: WalkParams, n: int, z: int, exact: bool = False) -> ExactProbability:
    """``P(S_n = start + z)``: binomial weight when ``n + z`` is even and ``|z| <= n``."""
    if n < 0:
        raise ValueError("n must be non-negative")
    p, q = _pq(params, exact)
    if (n + z) % 2 or abs(z) > n:
        value = Fraction(0) if exact else 0.0
    else:
        up = (n + z) // 2
        if exact:
            value = math.comb(n, up) * p**up * q ** (n - up)
        elif n <= 64:
            value = math.comb(n, up) * p**up * q ** (n - up)
        else:
            value = math.exp(_log_binom(n, up) + up * math.log(p) + (n - up) * math.log(q))
    return ExactProbability(value, "closed-form", _arith(exact))


def pmf_total_local_time(
    params: WalkParams, z: int, k: int, exact: bool = False
) -> ExactProbability:
    """``P(xi(z, inf) = k)`` for ``k >= 1`` (``z`` relative to the start)."""
    if k <= 0:
        raise ValueError("k must be positive; use atom_never_visit for k = 0")
    p, q = _pq(params, exact)
    h = q / p
    two_q = 2 * q
    gamma = 1 - two_q
    if z < 0:
        value = h ** (-z) * two_q ** (k - 1) * gamma
    elif z == 0:
        value = two_q**k * gamma
    else:
        value = two_q ** (k - 1) * gamma
    return ExactProbability(value, "closed-form", _arith(exact))


def atom_never_visit(params: WalkParams, z: int, exact: bool = False) -> ExactProbability:
    """``P(xi(z, inf) = 0)``: ``1 - h**(-z)`` below the start, ``gamma`` at it, 0 above."""
    p, q = _pq(params, exact)
    if z < 0:
        value = 1 - (q / p) ** (-z)
    elif z == 0:
        value = 1 - 2 * q
    else:
        value = Fraction(0) if exact else 0.0
    return ExactProbability(value, "closed-form", _arith(exact))


def no_return_sequence(params: WalkParams, n_max: int, exact: bool = False) -> list:
    """``[gamma(1), ..., gamma(n_max)]`` with ``gamma(n) = P(S_i != S_0, 1 <= i <= n-1)``.

    Forward dynamic program over positions relative to the start, removing the
    mass that lands on 0; O(n_max**2).
    """
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    p, q = _pq(params, exact)
    width = 2 * n_max + 1
    mid = n_max
    if exact:
        dist = [Fraction(0)] * width
        dist[mid] = Fraction(1)
    else:
        dist = np.zeros(width)
        dist[mid] = 1.0
    out = [Fraction(1) if exact else 1.0]
    for step in range(1, n_max):
        if exact:
            new = [Fraction(0)] * width
            for i in range(mid - step + 1, mid + step):
                w = dist[i]
                if w:
                    new[i + 1] += w * p
                    new[i - 1] += w * q
            killed = new[mid]
            new[mid] = Fraction(0)
            out.append(out[-1] - killed)
        else:
            new = np.zeros(width)
            new[1:] += dist[:-1] * p
            new[:-1] += dist[1:] * q
            killed = new[mid]
            new[mid] = 0.0
            # subtracting the absorbed mass keeps the sequence monotone to the last bit
            out.append(out[-1] - killed)
        dist = new
    return out


def no_return_probability(params: WalkParams, n: int, exact: bool = False) -> ExactProbability:
    return ExactProbability(
        no_return_sequence(params, n, exact)[-1], "dynamic-program", _arith(exact)
    )


def counted_self_avoiding_probability(
    params: WalkParams, t: int, exact: bool = False
) -> ExactProbability:
    """``P(S_1, ..., S_t all distinct)``.

    Time 0 is not counted, so the distinct sites ``S_1..S_t`` must be monotone
    while the first step is free: ``p**(t-1) + q**(t-1)`` for ``t >= 2``.
    The value is built by a two-state recursion on the direction of travel.
    """
    p, q = _pq(params, exact)
    one = Fraction(1) if exact else 1.0
    if t <= 1:
        return ExactProbability(one, "dynamic-program", _arith(exact))
    up, down = p, q  # after step 2: mass of monotone-up / monotone-down prefixes
    for _ in range(3, t + 1):
        up, down = up * p, down * q
    return ExactProbability(up + down, "dynamic-program", _arith(exact))


def bound_return_tail(params: WalkParams, m: int) -> float:
    """``(4pq)^(m/4) / (1 - sqrt(4pq))`` bounding ``P(S_0 in S_[m/2, inf))``."""
    if m < 1:
        raise ValueError("m must be a positive integer")
    r = 4 * params.p * params.q
    if r >= 1:
        raise ValueError("4pq >= 1; the walk would not be transient")
    return r ** (m / 4) / (1 - math.sqrt(r))


def bound_joint_tail_rate(params: WalkParams, A: float, n: float) -> float:
    """``n ** (-A (1 + delta))``, the decay rate of the joint total-local-time tail."""
    if A <= 0 or n < 2:
        raise ValueError("need A > 0 and n >= 2")
    return n ** (-A * (1 + derive_constants(params).delta))


def gamma_rate_check(params: WalkParams, ns: Sequence[int]) -> list[tuple[int, float]]:
    """``(n, (gamma(n) - gamma) n^{3/2} / (4pq)^{n/2})`` for each ``n``."""
    ns = list(ns)
    seq = no_return_sequence(params, max(ns))
    gamma = derive_constants(params).gamma
    r = 4 * params.p * params.q
    return [(n, (seq[n - 1] - gamma) * n**1.5 / r ** (n / 2)) for n in ns]


# -- enumeration ------------------------------------------------------------


class _Histogram:
    """Local times at the final time with O(1) max/favorite-count updates."""

    def __init__(self):
        self.counts = Counter()
        self.hist = Counter()  # local time -> number of sites
        self.top = 0

    def add(self, site):
        c = self.counts[site]
        if c:
            self.hist[c] -= 1
        self.counts[site] = c + 1
        self.hist[c + 1] += 1
        if c + 1 > self.top:
            self.top = c + 1

    def remove(self, site):
        c = self.counts[site]
        self.hist[c] -= 1
        self.counts[site] = c - 1
        if c > 1:
            self.hist[c - 1] += 1
        while self.top and not self.hist[self.top]:
            self.top -= 1

    @property
    def favorites(self) -> int:
        return self.hist[self.top]


def gray_code_paths(n: int, start: int = 0):
    """Yield ``(positions, ups, hist)`` for all ``2**n`` step sequences.

    ``positions`` and ``hist`` are updated in place between yields; copy them to
    keep a path. Flipping Gray bit ``b`` flips step ``n - 1 - b``, so only the
    last ``b + 1`` positions change (two on average).
    """
    steps = [-1] * n
    pos = [start - t for t in range(n + 1)]
    hist = _Histogram()
    for t in range(1, n + 1):
        hist.add(pos[t])
    ups = 0
    yield pos, ups, hist
    for code in range(1, 2**n):
        b = (code & -code).bit_length() - 1
        i = n - 1 - b
        steps[i] = -steps[i]
        ups += 1 if steps[i] == 1 else -1
        shift = 2 * steps[i]
        for t in range(i + 1, n + 1):
            hist.remove(pos[t])
            pos[t] += shift
            hist.add(pos[t])
        yield pos, ups, hist


def _event_predicate(name: str, args: tuple, params: WalkParams, n: int) -> Callable:
    def _time(t):
        if not 0 <= t <= n:
            raise ValueError(f"event time {t} outside the enumeration horizon {n}")
        return t

    if name == "position-equals":
        t, z = _time(args[0]), args[1]
        return lambda pos, hist: pos[t] == params.start + z
    if name == "no-return-through":
        t = _time(args[0])
        return lambda pos, hist: all(pos[i] != params.start for i in range(1, t + 1))
    if name == "max-local-time-at-least":
        t, m = _time(args[0]), args[1]
        if t == n:
            return lambda pos, hist: hist.top >= m
        return lambda pos, hist: max(Counter(pos[1 : t + 1]).values(), default=0) >= m
    if name == "favorite-count-equals":
        t, k = _time(args[0]), args[1]
        if t < 1:
            raise ValueError("the favorite set is undefined at time 0")
        if t == n:
            return lambda pos, hist: hist.favorites == k

        def fav(pos, hist):
            c = Counter(pos[1 : t + 1])
            top = max(c.values())
            return sum(1 for v in c.values() if v == top) == k

        return fav
    if name == "C-event-resolved-true":
        m, k = args

        def c_event(pos, hist):
            log, _ = scan_path(pos)
            t_k = log.time(m, k)
            t_up = log.time(m + 1, 1)
            if t_k is not None and (t_up is None or t_k < t_up):
                return True
            if t_up is not None:
                return False
            return None

        return c_event
    if name == "F-count-equals":
        t, c, eps = _time(args[0]), args[1], args[2]
        cfg = ThickPointConfig.for_params(params, eps, strict=False)
        return lambda pos, hist: count_thick_pairs(pos[: t + 1], cfg) == c
    raise ValueError(f"unknown event {name!r}")


EVENT_NAMES = (
    "position-equals",
    "no-return-through",
    "max-local-time-at-least",
    "favorite-count-equals",
    "C-event-resolved-true",
    "F-count-equals",
)


def _weights(params, n, exact):
    p, q = _pq(params, exact)
    return [p**u * q ** (n - u) for u in range(n + 1)]


def _combine(tally: dict, weights: list, exact: bool):
    terms = [cnt * weights[u] for u, cnt in sorted(tally.items())]
    if exact:
        return sum(terms, Fraction(0))
    return math.fsum(terms)


def enumerate_distribution(
    params: WalkParams,
    n: int,
    statistic: Callable,
    exact: bool = False,
    max_n: int = ENUMERATION_CAP,
) -> dict:
    """Exact law of ``statistic(positions, hist)`` over all ``2**n`` paths.

    Paths are tallied by (value, number of up-steps) and weighted afterwards,
    so the result does not depend on the visiting order.
    """
    if n > max_n:
        raise ValueError(f"n={n} exceeds the enumeration cap {max_n}")
    tallies = defaultdict(Counter)
    for pos, ups, hist in gray_code_paths(n, params.start):
        tallies[statistic(pos, hist)][ups] += 1
    weights = _weights(params, n, exact)
    return {value: _combine(t, weights, exact) for value, t in tallies.items()}


def enumerate_exact(
    params: WalkParams,
    n: int,
    event: tuple,
    exact: bool = False,
    max_n: int = ENUMERATION_CAP,
) -> ExactProbability:
    """Probability of a named path-prefix event by brute force over ``2**n`` paths.

    ``event`` is ``(name, *args)`` with name in :data:`EVENT_NAMES`. If some
    paths leave the event unresolved at time ``n`` the result carries
    ``lower``/``upper`` (unresolved counted as false/true) and ``value`` is the
    lower end.
    """
    name, *args = event
    pred = _event_predicate(name, tuple(args), params, n)
    law = enumerate_distribution(params, n, pred, exact=exact, max_n=max_n)
    zero = Fraction(0) if exact else 0.0
    yes = law.get(True, zero)
    unresolved = law.get(None, zero)
    arith = _arith(exact)
    if unresolved:
        return ExactProbability(yes, "enumeration", arith, lower=yes, upper=yes + unresolved)
    return ExactProbability(yes, "enumeration", arith)


def enumerate_check(n_max: int = 12, ps=("0.6", "0.75", "0.9"), tol: float = 1e-12) -> dict:
    """Enumeration vs closed form and DP for every ``n <= n_max`` and ``|z| <= n``.

    Each ``n`` is enumerated once; the (value, up-steps) tallies are then
    weighted for every ``p`` in both float and rational arithmetic. Returns the
    worst absolute float difference and whether every rational value matched
    exactly.
    """
    worst = 0.0
    exact_ok = True
    checked = 0
    for n in range(n_max + 1):
        final = defaultdict(Counter)
        avoid = Counter()  # up-step tallies of paths avoiding the start at times 1..n
        for pos, ups, _ in gray_code_paths(n):
            final[pos[-1]][ups] += 1
            if all(pos[i] != 0 for i in range(1, n + 1)):
                avoid[ups] += 1
        for ptxt in ps:
            params = WalkParams(ptxt)
            for exact in (False, True):
                weights = _weights(params, n, exact)
                pairs = [
                    (_combine(final.get(z, {}), weights, exact),
                     pmf_position(params, n, z, exact=exact).value)
                    for z in range(-n, n + 1)
                ]
                if n >= 1:
                    pairs.append(
                        (_combine(avoid, weights, exact),
                         no_return_probability(params, n + 1, exact=exact).value)
                    )
                checked += len(pairs)
                for got, want in pairs:
                    if exact:
                        exact_ok &= got == want
                    else:
                        worst = max(worst, abs(got - want))
    return {
        "checked": checked,
        "n_max": n_max,
        "max_float_diff": worst,
        "rational_exact": exact_ok,
        "ok": worst <= tol and exact_ok,
    }


__all__ = [
    "DetectorError",
    "ENUMERATION_CAP",
    "EVENT_NAMES",
    "ExactProbability",
    "atom_never_visit",
    "bound_joint_tail_rate",
    "bound_return_tail",
    "counted_self_avoiding_probability",
    "enumerate_check",
    "enumerate_distribution",
    "enumerate_exact",
    "gamma_rate_check",
    "gray_code_paths",
    "no_return_probability",
    "no_return_sequence",
    "pmf_position",
    "pmf_total_local_time",
]
