"""Walk parameters, derived constants and the seeded step engine.

The walk is ``S_n = start + X_1 + ... + X_n`` with ``P(X_i = +1) = p > 1/2``.
Each replica draws its steps from a Philox stream keyed by ``(seed, stream_id)``,
one uniform per step, ``X_i = +1`` iff ``u_i < p``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

# positions kept in memory by run_path; longer runs must use the streaming APIs
DEFAULT_PATH_CAP = 50_000_000


class ParameterError(ValueError):
    pass


class CapacityError(RuntimeError):
    pass


class ReplayExhausted(IndexError):
    pass


def _as_fraction(p) -> Fraction:
    if isinstance(p, Fraction):
        return p
    if isinstance(p, str):
        return Fraction(p.strip())
    if isinstance(p, int):
        return Fraction(p)
    # shortest decimal that round-trips, so 0.6 means 3/5
    return Fraction(repr(float(p)))


@dataclass(frozen=True)
class WalkParams:
    """Step probability ``p`` and start site.

    ``p`` may be given as a decimal string, a float or a Fraction. It is stored
    as a binary float for sampling; ``p_exact`` keeps the rational value for the
    exact-arithmetic oracles.
    """

    p: float
    start: int = 0
    p_exact: Fraction = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        exact = _as_fraction(self.p)
        if not (Fraction(1, 2) < exact < 1):
            raise ParameterError(f"p must lie in (1/2, 1), got {self.p!r}")
        if int(self.start) != self.start:
            raise ParameterError(f"start must be an integer, got {self.start!r}")
        object.__setattr__(self, "p", float(exact))
        object.__setattr__(self, "p_exact", exact)
        object.__setattr__(self, "start", int(self.start))

    @property
    def q(self) -> float:
        return 1.0 - self.p

    @property
    def q_exact(self) -> Fraction:
        return 1 - self.p_exact


@dataclass(frozen=True)
class DerivedConstants:
    gamma: float  # escape probability 1 - 2q
    h: float  # q / p
    lam: float  # -1 / log(2q), growth rate of the maximal local time
    theta: float  # -1 / log(gamma)
    delta: float


def derive_constants(params: WalkParams) -> DerivedConstants:
    p, q = params.p, params.q
    two_q = 2.0 * q
    gamma = 1.0 - two_q
    h = q / p
    root_h = math.sqrt(h)
    delta = 2.0 * math.log((two_q + root_h) / (1.0 + root_h)) / math.log(two_q) - 1.0
    return DerivedConstants(
        gamma=gamma,
        h=h,
        lam=-1.0 / math.log(two_q),
        theta=-1.0 / math.log(gamma),
        delta=delta,
    )


def _philox_generator(seed: int, stream_id: int) -> np.random.Generator:
    if not (0 <= seed < 2**64 and 0 <= stream_id < 2**64):
        raise ParameterError("seed and stream_id must be unsigned 64-bit integers")
    return np.random.Generator(np.random.Philox(key=seed | (stream_id << 64)))


class StepStream:
    """Deterministic +-1 step source for one replica.

    Identical ``(params, seed, stream_id)`` give identical steps; distinct
    stream ids give independent streams, so replicas can be run in any order.
    """

    def __init__(self, params: WalkParams, seed: int = 0, stream_id: int = 0):
        self.params = params
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self.position = params.start
        self.clock = 0
        self._gen = _philox_generator(self.seed, self.stream_id)

    def next_step(self) -> int:
        step = 1 if self._gen.random() < self.params.p else -1
        self.position += step
        self.clock += 1
        return step

    def steps(self, count: int) -> np.ndarray:
        """The next ``count`` steps as an int64 array (same draws as repeated ``next_step``)."""
        u = self._gen.random(count)
        out = np.where(u < self.params.p, 1, -1).astype(np.int64)
        self.position += int(out.sum())
        self.clock += count
        return out


class ReplayStream:
    """Step source replaying an explicit list of +-1 steps (test fixture)."""

    def __init__(self, steps: Iterable[int], start: int = 0):
        self._steps = [int(s) for s in steps]
        if any(s not in (-1, 1) for s in self._steps):
            raise ParameterError("replay steps must be +1 or -1")
        self.position = int(start)
        self.clock = 0

    def __len__(self):
        return len(self._steps)

    def next_step(self) -> int:
        if self.clock >= len(self._steps):
            raise ReplayExhausted(f"replay stream exhausted after {self.clock} steps")
        step = self._steps[self.clock]
        self.position += step
        self.clock += 1
        return step

    def steps(self, count: int) -> np.ndarray:
        if self.clock + count > len(self._steps):
            raise ReplayExhausted(
                f"requested {count} steps, {len(self._steps) - self.clock} left in replay"
            )
        out = np.asarray(self._steps[self.clock : self.clock + count], dtype=np.int64)
        self.position += int(out.sum())
        self.clock += count
        return out


def positions_from_steps(steps: Sequence[int], start: int = 0) -> np.ndarray:
    out = np.empty(len(steps) + 1, dtype=np.int64)
    out[0] = start
    np.cumsum(steps, out=out[1:])
    out[1:] += start
    return out


def run_path(
    params: WalkParams,
    seed: int = 0,
    stream_id: int = 0,
    horizon: int = 0,
    *,
    stream: StepStream | ReplayStream | None = None,
    max_steps: int = DEFAULT_PATH_CAP,
) -> np.ndarray:
    """Positions ``S_0 .. S_horizon`` as an int64 array.

    Pass ``stream`` to draw from an existing (e.g. replay) stream instead of a
    fresh one keyed by ``(seed, stream_id)``.
    """
    if horizon < 0:
        raise ParameterError("horizon must be non-negative")
    if horizon > max_steps:
        raise CapacityError(
            f"horizon {horizon} exceeds the path memory cap of {max_steps} steps"
        )
    if stream is None:
        stream = StepStream(params, seed, stream_id)
    start = stream.position
    return positions_from_steps(stream.steps(horizon), start)
