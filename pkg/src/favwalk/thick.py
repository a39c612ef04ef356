"""Thick points: the pair counter F_n and the predicates D_n, E_n.

A site is thick at time ``n`` when its local time is at least
``(1 - eps) * lam * ln n``. ``F_n`` counts index pairs ``i < j <= i + 2 lam ln n``
whose sites are distinct, both thick, and not revisited strictly between
``i`` and ``j``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .localtime import LocalTimeLedger
from .walk import WalkParams, derive_constants


def snap(x: float, rel: float = 1e-9) -> float:
    """Round ``x`` to the nearest integer when within ``rel`` of it.

    The real bounds here are compared with integers (local times, index gaps)
    and can be integers exactly, e.g. ``2 lam ln 5 = 2`` at ``p = 0.9``, where
    floating point lands one ulp below.
    """
    r = round(x)
    return float(r) if abs(x - r) <= rel * max(1.0, abs(x)) else x


@dataclass(frozen=True)
class ThickPointConfig:
    epsilon: float
    lam: float
    delta: float

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")

    @classmethod
    def for_params(cls, params: WalkParams, epsilon: float, strict: bool = True):
        """Config for a walk; ``strict`` rejects epsilon outside the admissible range."""
        c = derive_constants(params)
        cfg = cls(epsilon=float(epsilon), lam=c.lam, delta=c.delta)
        if strict and not cfg.admissible:
            raise ValueError(
                f"epsilon={epsilon} violates (1+delta)(1-eps)^2 > 1+delta/2 "
                f"(need eps < {cfg.max_epsilon:.6g} at delta={c.delta:.6g})"
            )
        return cfg

    @property
    def admissible(self) -> bool:
        return (1 + self.delta) * (1 - self.epsilon) ** 2 > 1 + self.delta / 2

    @property
    def max_epsilon(self) -> float:
        return 1 - math.sqrt((1 + self.delta / 2) / (1 + self.delta))

    def threshold(self, n: int) -> float:
        return snap((1 - self.epsilon) * self.lam * math.log(n))

    def window_bound(self, n: int) -> float:
        return snap(2 * self.lam * math.log(n))

    def window(self, n: int) -> int:
        # j ranges over integers, so the real bound i + 2 lam ln n is floored
        return math.floor(self.window_bound(n))

    def band(self, n: int) -> tuple[float, float]:
        """Bounds of ``D_n``: ``(1 - eps/2) lam ln n`` and ``2 (1 + eps/2) lam ln n``."""
        base = self.lam * math.log(n)
        return snap((1 - self.epsilon / 2) * base), snap(2 * (1 + self.epsilon / 2) * base)


@njit(cache=True)
def thick_pairs_core(path, prev, counts, offset, n, threshold, window):
    """F_n from a path prefix, final local times and previous-visit times.

    ``prev[t]`` is the last time before ``t`` the walk sat at ``path[t]`` (-1 if
    none); ``counts[site + offset]`` is the local time at ``n``. A pair
    ``(i, j)`` is admissible iff ``path[i]`` does not recur in ``(i, j]`` and
    ``prev[j] < i``, i.e. neither endpoint appears strictly in between and the
    sites differ.
    """
    total = 0
    for i in range(1, n + 1):
        si = path[i]
        if counts[si + offset] < threshold:
            continue
        last = min(i + window, n)
        for j in range(i + 1, last + 1):
            sj = path[j]
            if sj == si:
                break
            if prev[j] < i and counts[sj + offset] >= threshold:
                total += 1
    return total


@njit(cache=True)
def _prefix_tables(path, n):
    lo = path[0]
    hi = path[0]
    for t in range(n + 1):
        lo = min(lo, path[t])
        hi = max(hi, path[t])
    offset = -lo
    counts = np.zeros(hi - lo + 1, np.int64)
    last_seen = np.full(hi - lo + 1, -1, np.int64)
    prev = np.empty(n + 1, np.int64)
    for t in range(n + 1):
        idx = path[t] + offset
        prev[t] = last_seen[idx]
        last_seen[idx] = t
        if t > 0:
            counts[idx] += 1
    return counts, prev, offset


def count_thick_pairs(path, config: ThickPointConfig) -> int:
    """F_n for the path prefix ``S_0..S_n`` (``n = len(path) - 1 >= 2``)."""
    path = np.asarray(path, dtype=np.int64)
    n = len(path) - 1
    if n < 2:
        raise ValueError("F_n needs n >= 2")
    counts, prev, offset = _prefix_tables(path, n)
    return int(
        thick_pairs_core(path, prev, counts, offset, n, config.threshold(n), config.window(n))
    )


def count_thick_pairs_naive(path, config: ThickPointConfig) -> int:
    """Literal double sum, used as an oracle for :func:`count_thick_pairs`."""
    path = [int(x) for x in path]
    n = len(path) - 1
    xi = {}
    for t in range(1, n + 1):
        xi[path[t]] = xi.get(path[t], 0) + 1
    thr = config.threshold(n)
    upper = config.window_bound(n)
    total = 0
    for i in range(1, n + 1):
        j = i + 1
        while j <= n and j - i <= upper:
            between = path[i + 1 : j]
            if (
                min(xi[path[i]], xi[path[j]]) >= thr
                and path[i] not in between
                and path[j] not in between
                and path[i] != path[j]
            ):
                total += 1
            j += 1
    return total


def predicate_D(ledger: LocalTimeLedger, config: ThickPointConfig) -> bool:
    """``(1 - eps/2) lam ln n <= xi(n) <= 2 (1 + eps/2) lam ln n``."""
    n = ledger.clock
    if n < 2:
        raise ValueError("D_n needs n >= 2")
    return xi_in_band(ledger.max_count, n, config)


def xi_in_band(xi: int, n: int, config: ThickPointConfig) -> bool:
    lo, hi = config.band(n)
    return lo <= xi <= hi


def predicate_E(path, config: ThickPointConfig) -> bool:
    return count_thick_pairs(path, config) == 0
