"""Compiled replica loops for the Monte Carlo experiments.

Each kernel runs replicas ``lo..hi-1`` (stream ids) of one seed and returns
per-replica arrays in stream order, so splitting a replica range across
workers and concatenating the pieces reproduces a single run exactly. Steps
come from :mod:`favwalk._philox` and match :class:`favwalk.walk.StepStream`
draw for draw.

Local times live in a dense array indexed by ``site - start + offset``; only the
range a replica visited is cleared before the next one.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from ._philox import STEP_BUFFER, fill_steps, new_rng
from .thick import _prefix_tables, thick_pairs_core

# status codes shared by the kernels
OK = 0
CENSORED = 1  # horizon or step cap reached before resolution
OVERFLOW = 2  # a fixed-size table was too small; the replica is unusable


@njit(cache=True)
def total_local_time_kernel(seed, lo, hi, threshold, sites, stop_offset, max_steps):
    """Visits to each relative site until the walk first stands ``stop_offset`` above the start.

    Returns ``(counts[R, len(sites)], steps[R], status[R])``. Sites are relative
    to the start; ``stop_offset`` must exceed every site.
    """
    n_rep = hi - lo
    n_sites = sites.shape[0]
    counts = np.zeros((n_rep, n_sites), np.int64)
    steps = np.zeros(n_rep, np.int64)
    status = np.zeros(n_rep, np.int8)
    buf = np.empty(STEP_BUFFER, np.int8)
    for r in range(n_rep):
        rng = new_rng(seed, lo + r)
        cursor = STEP_BUFFER
        pos = 0
        n = 0
        while pos < stop_offset:
            if n == max_steps:
                status[r] = CENSORED
                break
            if cursor == STEP_BUFFER:
                fill_steps(rng, buf, threshold)
                cursor = 0
            pos += buf[cursor]
            cursor += 1
            n += 1
            for i in range(n_sites):
                if pos == sites[i]:
                    counts[r, i] += 1
        steps[r] = n
    return counts, steps, status


@njit(cache=True)
def hit_kernel(seed, lo, hi, threshold, targets, cap, escape):
    """``H_A(0)`` per replica for relative target sites ``targets``.

    Returns ``(hit[R], position[R])`` with ``hit = -1`` when no target was hit
    within ``cap`` steps. With ``escape > 0`` a replica also stops once it
    stands ``escape`` above the highest target (a later hit has probability
    ``h**escape``); it is then reported as a miss.
    """
    n_rep = hi - lo
    hit = np.full(n_rep, -1, np.int64)
    final = np.zeros(n_rep, np.int64)
    top = targets.max()
    buf = np.empty(STEP_BUFFER, np.int8)
    for r in range(n_rep):
        rng = new_rng(seed, lo + r)
        cursor = STEP_BUFFER
        pos = 0
        for k in range(cap + 1):
            found = False
            for a in targets:
                if pos == a:
                    found = True
            if found:
                hit[r] = k
                break
            if k == cap or (escape > 0 and pos >= top + escape):
                break
            if cursor == STEP_BUFFER:
                fill_steps(rng, buf, threshold)
                cursor = 0
            pos += buf[cursor]
            cursor += 1
        final[r] = pos
    return hit, final


@njit(cache=True)
def event_kernel(
    seed, lo, hi, threshold, horizon, m_max, k_max, target_m, target_k, stop_at_target
):
    """Online stopping times and event identities for replicas ``lo..hi-1``.

    The active level is the current maximal local time ``m``. While it is
    active the kernel keeps ``L_m^1..L_m^j`` and, for the pending window
    ``(T_m^j, .]``, a flag recording whether the walk has stepped on any of
    them (the union of the ``A``/``Ã`` clauses), computed by set membership
    alone, without looking at local times. Each window closes either at
    ``T_m^{j+1}`` (so ``C_m^{j+1}`` holds and ``B ∧ B̃`` must too) or at
    ``T_{m+1}^1`` (so ``C_m^{j+1}`` fails and ``B ∧ B̃`` must too). At every
    ``T_m^j`` the favorite count kept by the ledger must equal ``j``.

    Returns
    -------
    gaps : int64[R, m_max + 1]
        ``G_m`` (``-1`` if unresolved at the horizon).
    checks : int64[R, 5]
        resolved ``(m, k)`` count, identity mismatches, ledger mismatches,
        record-chain inclusion violations, number of early-window hits (``Ã`` failures).
    target : int8[R, 3]
        ``C``, ``Ĉ`` and ``B ∧ B̃`` for ``(target_m, target_k)``; ``-1`` if unresolved.
    steps : int64[R]
    status : int8[R]
    """
    n_rep = hi - lo
    gaps = np.full((n_rep, m_max + 1), -1, np.int64)
    checks = np.zeros((n_rep, 5), np.int64)
    target = np.full((n_rep, 3), -1, np.int8)
    steps = np.zeros(n_rep, np.int64)
    status = np.zeros(n_rep, np.int8)
    size = 2 * horizon + 3
    offset = horizon + 1
    counts = np.zeros(size, np.int32)
    frontier = np.zeros(m_max + 2, np.int64)
    locs = np.zeros(k_max + 1, np.int64)
    times = np.zeros(k_max + 1, np.int64)
    half = np.int64(0)
    buf = np.empty(STEP_BUFFER, np.int8)
    for r in range(n_rep):
        rng = new_rng(seed, lo + r)
        cursor = STEP_BUFFER
        pos = 0
        low = 0
        high = 0
        act = 0  # xi(n - 1)
        n_fav = 0  # ledger favorite count, maintained independently of frontier
        j = 0  # records at the active level
        clean = True  # running B ∧ B̃ of the active level
        hat_base = 0
        hat = -1
        t_c = -1
        t_bb = -1
        n = 0
        for level in range(m_max + 2):
            frontier[level] = 0
        while n < horizon:
            if cursor == STEP_BUFFER:
                fill_steps(rng, buf, threshold)
                cursor = 0
            pos += buf[cursor]
            cursor += 1
            n += 1
            if pos < low:
                low = pos
            elif pos > high:
                high = pos
            c = counts[pos + offset] + 1
            counts[pos + offset] = c
            # ledger
            if c > act:
                n_fav = 1
            elif c == act:
                n_fav += 1
            if c > m_max:
                status[r] = OVERFLOW
                break
            frontier[c] += 1
            # window scan: has the walk stepped on a recorded level-act site?
            if act > 0:
                for i in range(1, j + 1):
                    if locs[i] == pos:
                        clean = False
                        if i < j and n <= times[j] + half - 1:
                            checks[r, 4] += 1
            if act > 0 and c == act + 1:
                # C_act^{j+1} is false, so B ∧ B̃ must be false as well
                checks[r, 0] += 1
                if clean:
                    checks[r, 1] += 1
                gaps[r, act] = j
                if act == target_m and t_c < 0:
                    t_c = 0
                    t_bb = 1 if clean else 0
            if c == act + 1:
                act = c
                half = (act + 1) // 2
                j = 1
                if j > k_max:
                    status[r] = OVERFLOW
                    break
                locs[1] = pos
                times[1] = n
                clean = True
                # C_act^1 always holds: T_m^1 < T_{m+1}^1
                if act == target_m and target_k == 1 and t_c < 0:
                    t_c = 1
                    t_bb = 1
            elif c == act:
                j += 1
                if j > k_max:
                    status[r] = OVERFLOW
                    break
                locs[j] = pos
                times[j] = n
                # C_act^j holds; the windows must agree, and so must the ledger
                checks[r, 0] += 1
                if not clean:
                    checks[r, 1] += 1
                if n_fav != j:
                    checks[r, 2] += 1
                if act == target_m and j == target_k and t_c < 0:
                    t_c = 1
                    t_bb = 1 if clean else 0
            # ascending-record chain for the target level
            if hat < 0:
                if pos <= hat_base:
                    hat = 0
                elif c == target_m:
                    if frontier[c] == target_k:
                        hat = 1
                    else:
                        hat_base = pos
            if stop_at_target and t_c >= 0 and hat >= 0:
                break
        if hat == 1 and t_c != 1:
            checks[r, 3] += 1
        target[r, 0] = t_c
        target[r, 1] = hat
        target[r, 2] = t_bb
        steps[r] = n
        if status[r] == OK and (t_c < 0 and target_m > 0):
            status[r] = CENSORED
        for site in range(low, high + 1):
            counts[site + offset] = 0
    return gaps, checks, target, steps, status


@njit(cache=True)
def ledger_kernel(seed, lo, hi, threshold, horizon, grid, burn_in, g_max):
    """Maximal local time and favorite counts along each replica.

    Returns
    -------
    xi : int64[R, len(grid)]
        ``xi(n)`` at the grid times.
    fav : int64[R, len(grid)]
        ``#K(n)`` at the grid times.
    g : int64[R, g_max + 2]
        ``g[k]`` for ``k <= g_max``; the last column pools ``k > g_max``.
    run_max : float64[R]
        ``max_{burn_in <= n <= horizon} #K(n) / ln ln n``.
    fav_max : int64[R]
        ``max #K(n)`` over ``burn_in <= n <= horizon``.
    """
    n_rep = hi - lo
    n_grid = grid.shape[0]
    xi = np.zeros((n_rep, n_grid), np.int64)
    fav = np.zeros((n_rep, n_grid), np.int64)
    g = np.zeros((n_rep, g_max + 2), np.int64)
    run_max = np.zeros(n_rep)
    fav_max = np.zeros(n_rep, np.int64)
    size = 2 * horizon + 3
    offset = horizon + 1
    counts = np.zeros(size, np.int32)
    buf = np.empty(STEP_BUFFER, np.int8)
    for r in range(n_rep):
        rng = new_rng(seed, lo + r)
        cursor = STEP_BUFFER
        pos = 0
        low = 0
        high = 0
        top = 0
        n_fav = 0
        gi = 0
        best = 0.0
        best_k = 0
        for n in range(1, horizon + 1):
            if cursor == STEP_BUFFER:
                fill_steps(rng, buf, threshold)
                cursor = 0
            pos += buf[cursor]
            cursor += 1
            if pos < low:
                low = pos
            elif pos > high:
                high = pos
            c = counts[pos + offset] + 1
            counts[pos + offset] = c
            grew = False
            if c > top:
                top = c
                n_fav = 1
            elif c == top:
                n_fav += 1
                grew = True
            if n_fav <= g_max:
                g[r, n_fav] += 1
            else:
                g[r, g_max + 1] += 1
            if n >= burn_in:
                # the ratio only rises when #K does, so ln ln n is needed rarely
                if grew or n == burn_in:
                    ratio = n_fav / math.log(math.log(n))
                    if ratio > best:
                        best = ratio
                if n_fav > best_k:
                    best_k = n_fav
            while gi < n_grid and grid[gi] == n:
                xi[r, gi] = top
                fav[r, gi] = n_fav
                gi += 1
        run_max[r] = best
        fav_max[r] = best_k
        for site in range(low, high + 1):
            counts[site + offset] = 0
    return xi, fav, g, run_max, fav_max


@njit(cache=True)
def thick_kernel(seed, lo, hi, threshold, grid, thick_thr, windows, band_lo, band_hi):
    """``F_n`` and ``D_n`` at each grid time from a retained path per replica.

    ``thick_thr``, ``windows``, ``band_lo`` and ``band_hi`` hold, per grid time,
    the thickness threshold, the integer pair window and the ``D_n`` band.
    Returns ``(F[R, G], xi[R, G], in_band[R, G])``.
    """
    n_rep = hi - lo
    n_grid = grid.shape[0]
    horizon = grid[n_grid - 1]
    F = np.zeros((n_rep, n_grid), np.int64)
    xi = np.zeros((n_rep, n_grid), np.int64)
    in_band = np.zeros((n_rep, n_grid), np.bool_)
    path = np.zeros(horizon + 1, np.int64)
    buf = np.empty(STEP_BUFFER, np.int8)
    for r in range(n_rep):
        rng = new_rng(seed, lo + r)
        cursor = STEP_BUFFER
        for n in range(1, horizon + 1):
            if cursor == STEP_BUFFER:
                fill_steps(rng, buf, threshold)
                cursor = 0
            path[n] = path[n - 1] + buf[cursor]
            cursor += 1
        for gi in range(n_grid):
            n = grid[gi]
            counts, prev, offset = _prefix_tables(path, n)
            F[r, gi] = thick_pairs_core(
                path, prev, counts, offset, n, thick_thr[gi], windows[gi]
            )
            top = counts.max()
            xi[r, gi] = top
            in_band[r, gi] = band_lo[gi] <= top <= band_hi[gi]
    return F, xi, in_band
