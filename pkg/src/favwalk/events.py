"""Stopping times T_m^k, the gap statistic G_m, hitting times and the event algebra.

``T_m^k`` is the first time ``k`` distinct sites have local time at least ``m``
and ``L_m^k`` the site that completed the set. The favorite-set event
``C_m^k = {T_m^k < T_{m+1}^1}`` is computed two ways: directly from the stopping
times, and as the intersection of the window-avoidance events ``A_m^j`` and
``Ã_m^j``. The two must agree on every path; disagreement raises
:class:`DetectorError`.

Functions taking ``path`` expect the stored positions ``S_0..S_N`` together with
a :class:`StoppingLog` built from the same path. Anything whose window runs past
``N`` is censored and reported as ``None``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .localtime import LocalTimeLedger
from .walk import ReplayStream, StepStream, WalkParams, derive_constants


class DetectorError(RuntimeError):
    """Two independent event computations disagreed (a bug, never a data issue)."""


@dataclass
class StoppingLog:
    records: dict = field(default_factory=dict)  # (m, k) -> (T, L)
    frontier: dict = field(default_factory=dict)  # m -> largest recorded k
    gaps: dict = field(default_factory=dict)  # m -> G_m, once T_{m+1}^1 is seen
    horizon: int = 0
    # (m, k) -> (max local time, number of favorites) at T_m^k, when known
    snapshots: dict = field(default_factory=dict)

    def update(self, site: int, m: int, time: int) -> int:
        """Record that ``site`` reached local time ``m`` at ``time``; return the new ``k``."""
        if time <= self.horizon:
            raise DetectorError(f"event at time {time} arrived after time {self.horizon}")
        k = self.frontier.get(m, 0) + 1
        if (m, k) in self.records:
            raise DetectorError(f"duplicate stopping record ({m}, {k})")
        self.records[(m, k)] = (time, site)
        self.frontier[m] = k
        if k == 1 and m >= 2:
            self.gaps[m - 1] = self.frontier.get(m - 1, 0)
        self.horizon = time
        return k

    def time(self, m: int, k: int) -> int | None:
        if k == 0:
            return 0
        rec = self.records.get((m, k))
        return None if rec is None else rec[0]

    def location(self, m: int, k: int) -> int | None:
        rec = self.records.get((m, k))
        return None if rec is None else rec[1]

    @classmethod
    def from_path(cls, path: Sequence[int]) -> "StoppingLog":
        log, _ = scan_path(path)
        return log


def scan_path(path: Sequence[int]) -> tuple[StoppingLog, LocalTimeLedger]:
    """Stream a stored path through a ledger and stopping log."""
    ledger = LocalTimeLedger()
    log = StoppingLog()
    for t in range(1, len(path)):
        site = int(path[t])
        c = ledger.record_visit(site, t)
        k = log.update(site, c, t)
        log.snapshots[(c, k)] = (ledger.max_count, len(ledger.favorites))
    log.horizon = len(path) - 1
    return log, ledger


def gap_statistic(log: StoppingLog, m: int) -> int | None:
    """``G_m = sup{k : T_m^k < T_{m+1}^1}``, or None while ``T_{m+1}^1`` is unobserved."""
    return log.gaps.get(m)


def _window_end(log: StoppingLog, m: int, k: int) -> int | None:
    # T_m^k ∧ T_{m+1}^1; an unobserved time lies beyond the horizon, so the
    # minimum is known as soon as either is
    times = [t for t in (log.time(m, k), log.time(m + 1, 1)) if t is not None]
    return min(times) if times else None


def _half(m: int) -> int:
    # n >= T + m/2  <=>  n >= T + ceil(m/2)
    return (m + 1) // 2


def _check_k(k: int, least: int):
    if k < least:
        raise ValueError(f"k must be at least {least}, got {k}")


def window_ranges(log: StoppingLog, m: int, k: int) -> tuple[range, range] | None:
    """Integer times scanned for the older locations by ``Ã_m^k`` and ``A_m^k``.

    With ``t = T_m^{k-1}`` and ``e = T_m^k ∧ T_{m+1}^1`` these are
    ``[t, t + ceil(m/2) - 1] ∩ [t, e]`` and ``[t + ceil(m/2), e]``: disjoint,
    with union ``[t, e]``. Returns None while ``e`` is unobserved and two
    empty ranges when the window is empty.
    """
    _check_k(k, 2)
    end = _window_end(log, m, k)
    if end is None:
        return None
    start = log.time(m, k - 1)
    if start is None or start > end:
        return range(0), range(0)
    split = start + _half(m)
    return range(start, min(split - 1, end) + 1), range(split, end + 1)


def _older(log: StoppingLog, m: int, k: int) -> set:
    return {log.location(m, i) for i in range(1, k - 1)}


def detect_A(path: Sequence[int], log: StoppingLog, m: int, k: int) -> bool | None:
    """Avoidance event A_m^k.

    No visit to ``L_m^1..L_m^{k-2}`` for ``T_m^{k-1} + m/2 <= n <= e`` and no
    visit to ``L_m^{k-1}`` for ``T_m^{k-1} < n <= e``, where
    ``e = T_m^k ∧ T_{m+1}^1``. ``A_m^1`` is the sure event.
    """
    _check_k(k, 1)
    if k == 1:
        return True
    ranges = window_ranges(log, m, k)
    if ranges is None:
        return None
    _, late = ranges
    if not late and not ranges[0]:
        return True  # empty window
    start = log.time(m, k - 1)
    end = _window_end(log, m, k)
    last = log.location(m, k - 1)
    if any(path[n] == last for n in range(start + 1, end + 1)):
        return False
    older = _older(log, m, k)
    return not any(path[n] in older for n in late)


def detect_Atilde(path: Sequence[int], log: StoppingLog, m: int, k: int) -> bool | None:
    """Early-window avoidance Ã_m^k (defined for ``k >= 2``).

    No visit to ``L_m^1..L_m^{k-2}`` for ``T_m^{k-1} <= n < T_m^{k-1} + m/2``
    with ``n <= T_m^k ∧ T_{m+1}^1``. Together with the older-site clause of
    :func:`detect_A` this scans ``[T_m^{k-1}, e]`` exactly once; the right end
    is closed so that a revisit landing exactly on ``e`` is never missed.
    """
    ranges = window_ranges(log, m, k)
    if ranges is None:
        return None
    early, _ = ranges
    older = _older(log, m, k)
    return not any(path[n] in older for n in early)


def _conjunction(values) -> bool | None:
    values = list(values)
    if any(v is False for v in values):
        return False
    if any(v is None for v in values):
        return None
    return True


def detect_B(path, log, m, k) -> bool | None:
    return _conjunction(detect_A(path, log, m, j) for j in range(1, k + 1))


def detect_Btilde(path, log, m, k) -> bool | None:
    return _conjunction(detect_Atilde(path, log, m, j) for j in range(2, k + 1))


def _c_from_times(log: StoppingLog, m: int, k: int) -> bool | None:
    t_k = log.time(m, k)
    t_up = log.time(m + 1, 1)
    if t_k is not None and (t_up is None or t_k < t_up):
        return True
    if t_up is not None:
        return False
    return None


def detect_C(
    path: Sequence[int], log: StoppingLog, m: int, k: int, check_ledger: bool = True
) -> bool | None:
    """``C_m^k = {T_m^k < T_{m+1}^1}``, cross-checked against ``B_m^k ∧ B̃_m^k``.

    When true, the ledger at ``T_m^k`` must also show maximal local time ``m``
    and exactly ``k`` favorites.
    """
    _check_k(k, 1)
    direct = _c_from_times(log, m, k)
    windows = _conjunction([detect_B(path, log, m, k), detect_Btilde(path, log, m, k)])
    if direct is not None and windows is not None and direct != windows:
        raise DetectorError(
            f"C_{m}^{k}: stopping times say {direct}, window events say {windows}"
        )
    if direct and check_ledger:
        t = log.time(m, k)
        snap = log.snapshots.get((m, k))
        if snap is None:
            ledger = LocalTimeLedger.from_path(path[: t + 1])
            snap = (ledger.max_count, len(ledger.favorites))
        if snap != (m, k):
            raise DetectorError(
                f"C_{m}^{k} holds but at T={t} the ledger has max {snap[0]} "
                f"and {snap[1]} favorites"
            )
    return direct


def _record_chain(path, log: StoppingLog, m: int, k: int) -> tuple[bool | None, int | None]:
    horizon = len(path) - 1
    for j in range(1, k + 1):
        t_prev = log.time(m, j - 1)
        if t_prev is None:
            return None, None
        base = path[t_prev]
        t_j = log.time(m, j)
        stop = horizon if t_j is None else t_j
        for n in range(t_prev + 1, stop + 1):
            if path[n] <= base:
                return False, n
        if t_j is None:
            return None, None
    return True, log.time(m, k)


def detect_C_record(path: Sequence[int], log: StoppingLog, m: int, k: int) -> bool | None:
    """Ascending-record chain: the walk stays strictly above ``S_{T_m^{j-1}}``
    on ``(T_m^{j-1}, T_m^j]`` for every ``j = 1..k``.

    The chain implies ``C_m^k`` path by path; that inclusion is checked here.
    """
    _check_k(k, 1)
    result, _ = _record_chain(path, log, m, k)
    if result:
        c = _c_from_times(log, m, k)
        if c is not True:
            raise DetectorError(f"record chain holds for ({m}, {k}) but C_{m}^{k} is {c}")
    return result


@dataclass(frozen=True)
class Outcome:
    value: bool | None  # None when censored
    time: int | None  # time at which the event resolved

    @property
    def censored(self) -> bool:
        return self.value is None


@dataclass
class EventVerdict:
    """Per-path outcomes keyed by ``(m, k)``."""

    A: dict = field(default_factory=dict)
    A_tilde: dict = field(default_factory=dict)
    B: dict = field(default_factory=dict)
    B_tilde: dict = field(default_factory=dict)
    C: dict = field(default_factory=dict)
    C_record: dict = field(default_factory=dict)
    checked: int = 0


def evaluate_events(
    path: Sequence[int], m_max: int | None = None, k_max: int | None = None
) -> EventVerdict:
    """All event outcomes for levels ``m <= m_max`` and ``k <= k_max`` on a stored path.

    For each level the scan runs to one index past the last resolved ``C_m^k``,
    where the event turns false for good. Raises :class:`DetectorError` if the
    stopping-time and window computations ever disagree.
    """
    log, ledger = scan_path(path)
    verdict = EventVerdict()
    top = ledger.max_count if m_max is None else min(m_max, ledger.max_count)
    for m in range(1, top + 1):
        g = log.gaps.get(m)
        last = log.frontier.get(m, 0) if g is None else g + 1
        if k_max is not None:
            last = min(last, k_max)
        for k in range(1, last + 1):
            end = _window_end(log, m, k)
            c = detect_C(path, log, m, k)
            verdict.C[(m, k)] = Outcome(c, end)
            a = detect_A(path, log, m, k)
            verdict.A[(m, k)] = Outcome(a, end)
            if k >= 2:
                verdict.A_tilde[(m, k)] = Outcome(detect_Atilde(path, log, m, k), end)
            verdict.B[(m, k)] = Outcome(detect_B(path, log, m, k), end)
            verdict.B_tilde[(m, k)] = Outcome(detect_Btilde(path, log, m, k), end)
            detect_C_record(path, log, m, k)
            verdict.C_record[(m, k)] = Outcome(*_record_chain(path, log, m, k))
            if c is not None:
                verdict.checked += 1
    _verify_gaps(path, log, verdict)
    return verdict


def _verify_gaps(path, log: StoppingLog, verdict: EventVerdict):
    for m, g in log.gaps.items():
        ks = [k for (mm, k), o in verdict.C.items() if mm == m and o.value]
        if ks and max(ks) != g:
            raise DetectorError(f"G_{m} = {g} but the largest k with C_{m}^k is {max(ks)}")


@dataclass(frozen=True)
class Censored:
    """No hit within the step cap.

    ``bias_bound`` bounds the probability of a later hit when every target lies
    below the last position (``h**distance``); it is None when a target lies
    above, which the walk reaches almost surely.
    """

    steps: int
    position: int
    bias_bound: float | None

    def __bool__(self):
        return False


def hitting_time(
    source,
    targets,
    n: int = 0,
    cap: int = 10**6,
    params: WalkParams | None = None,
) -> int | Censored:
    """``H_A(n) = inf{k >= n : S_k in A} - n``.

    ``source`` is a stored path (sequence of positions, read from index ``n``) or
    a live :class:`StepStream`/:class:`ReplayStream` positioned at time ``n``.
    """
    targets = frozenset(int(a) for a in targets)
    if not targets:
        raise ValueError("target set must be non-empty")
    if isinstance(source, (StepStream, ReplayStream)):
        if source.clock != n:
            raise ValueError(f"stream is at time {source.clock}, not {n}")
        position = source.position
        params = params or getattr(source, "params", None)
        for k in range(cap + 1):
            if position in targets:
                return k
            if k == cap:
                break
            source.next_step()
            position = source.position
        steps = cap
    else:
        stop = min(len(source) - 1, n + cap)
        for t in range(n, stop + 1):
            if source[t] in targets:
                return t - n
        steps = stop - n
        position = int(source[stop])
    bias = None
    if params is not None and max(targets) < position:
        bias = derive_constants(params).h ** (position - max(targets))
    return Censored(steps=steps, position=position, bias_bound=bias)
