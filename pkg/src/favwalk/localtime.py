"""Streaming local times, favorite sites and total local time sampling.

Local time counts visits at times ``1..n``; the start site's presence at time 0
is never counted. Every downstream stopping time relies on this convention.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .walk import StepStream, WalkParams, derive_constants


class SequencingError(RuntimeError):
    pass


class StepCapExceeded(RuntimeError):
    pass


class LocalTimeLedger:
    """Occupation counts of one walk, updated one visit at a time.

    Attributes
    ----------
    counts : dict
        site -> local time up to ``clock``.
    max_count : int
        Maximal local time (0 before the first step).
    favorites : set
        Sites attaining ``max_count``.
    g : Counter
        ``g[k]`` is the number of times ``t <= clock`` with exactly ``k`` favorites.
    fav_min, fav_max : int or None
        Extreme favorite sites. The favorite set only grows or resets to a
        singleton, so both are maintained in O(1).
    """

    def __init__(self):
        self.counts: dict[int, int] = {}
        self.max_count = 0
        self.favorites: set[int] = set()
        self.clock = 0
        self.g: Counter = Counter()
        self.fav_min: int | None = None
        self.fav_max: int | None = None

    def record_visit(self, site: int, time: int) -> int:
        """Count a visit to ``site`` at ``time`` (must be ``clock + 1``); return its new local time."""
        if time != self.clock + 1:
            raise SequencingError(f"visit at time {time} after clock {self.clock}")
        c = self.counts.get(site, 0) + 1
        self.counts[site] = c
        if c > self.max_count:
            self.max_count = c
            self.favorites = {site}
            self.fav_min = self.fav_max = site
        elif c == self.max_count:
            self.favorites.add(site)
            self.fav_min = min(self.fav_min, site)
            self.fav_max = max(self.fav_max, site)
        self.clock = time
        self.g[len(self.favorites)] += 1
        return c

    def local_time(self, site: int) -> int:
        return self.counts.get(site, 0)

    def favorite_set(self) -> frozenset:
        if self.clock == 0:
            raise ValueError("the favorite set is undefined at time 0")
        return frozenset(self.favorites)

    def max_local_time_ratio(self) -> float:
        if self.clock < 2:
            raise ValueError("needs at least two steps (log 1 = 0)")
        return self.max_count / math.log(self.clock)

    @classmethod
    def from_path(cls, path: Sequence[int]) -> "LocalTimeLedger":
        ledger = cls()
        for t in range(1, len(path)):
            ledger.record_visit(int(path[t]), t)
        return ledger


def favorite_set(ledger: LocalTimeLedger) -> frozenset:
    return ledger.favorite_set()


def max_local_time_ratio(ledger: LocalTimeLedger) -> float:
    return ledger.max_local_time_ratio()


@dataclass(frozen=True)
class TotalLocalTimeSample:
    site: int
    count: int
    stop_position: int
    bias_bound: float  # P(any visit to ``site`` after stopping)
    steps: int


def escape_distance(params: WalkParams, tolerance: float) -> int:
    """Smallest ``d`` with ``h**d <= tolerance``.

    From ``site + d`` the walk ever returns to ``site`` with probability ``h**d``.
    """
    if not 0.0 < tolerance < 1.0:
        raise ValueError("tolerance must lie in (0, 1)")
    h = derive_constants(params).h
    d = math.ceil(math.log(tolerance) / math.log(h))
    # guard the ceil against rounding in the ratio of logs
    while h ** (d - 1) <= tolerance:
        d -= 1
    while h**d > tolerance:
        d += 1
    return d


def sample_total_local_time(
    params: WalkParams,
    seed: int,
    stream_id: int,
    z: int,
    tolerance: float = 1e-6,
    max_steps: int = 10_000_000,
    chunk: int = 256,
) -> TotalLocalTimeSample:
    """Visits to ``z`` over the whole walk, truncated once the walk is ``d*`` above ``z``.

    The count is exact unless the walk comes back down ``d*`` levels later,
    which happens with probability ``h**d* <= tolerance``.
    """
    d_star = escape_distance(params, tolerance)
    h = derive_constants(params).h
    stop = z + d_star
    stream = StepStream(params, seed, stream_id)
    position = params.start
    count = 0
    taken = 0
    while position < stop:
        if taken >= max_steps:
            raise StepCapExceeded(f"walk did not reach {stop} within {max_steps} steps")
        n = min(chunk, max_steps - taken)
        pos = position + np.cumsum(stream.steps(n))
        hit = np.flatnonzero(pos >= stop)
        end = hit[0] + 1 if hit.size else n
        count += int(np.count_nonzero(pos[:end] == z))
        position = int(pos[end - 1])
        taken += int(end)
    return TotalLocalTimeSample(
        site=z,
        count=count,
        stop_position=position,
        bias_bound=h ** (position - z),
        steps=taken,
    )
