import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest

from favwalk import WalkParams, derive_constants
from favwalk.oracles import (
    ENUMERATION_CAP,
    atom_never_visit,
    bound_joint_tail_rate,
    bound_return_tail,
    counted_self_avoiding_probability,
    enumerate_check,
    enumerate_distribution,
    enumerate_exact,
    gamma_rate_check,
    gray_code_paths,
    no_return_probability,
    no_return_sequence,
    pmf_position,
    pmf_total_local_time,
)

PS = ["0.6", "0.75", "0.9"]


def test_pmf_position_examples(p75):
    assert pmf_position(p75, 1, 1).value == 0.75
    assert pmf_position(p75, 3, 0).value == 0
    assert pmf_position(p75, 4, 2).value == pytest.approx(0.421875, abs=1e-15)
    assert enumerate_exact(p75, 4, ("position-equals", 4, 2), exact=True).value == Fraction(27, 64)
    assert pmf_position(p75, 4, 2, exact=True).value == Fraction(27, 64)


def test_pmf_position_large_n_log_space(p75):
    # log-space branch against an mpmath evaluation
    mpmath.mp.dps = 50
    n, z = 2000, 1000
    ref = mpmath.binomial(n, 1500) * mpmath.mpf("0.75") ** 1500 * mpmath.mpf("0.25") ** 500
    assert pmf_position(p75, n, z).value == pytest.approx(float(ref), rel=1e-10)


@pytest.mark.parametrize("p_text", PS)
def test_pmf_position_sums_to_one_rational(p_text):
    prm = WalkParams(p_text)
    for n in range(0, 25):
        assert sum(pmf_position(prm, n, z, exact=True).value for z in range(-n, n + 1)) == 1


def test_total_local_time_examples(p75):
    assert pmf_total_local_time(p75, 1, 1).value == 0.5
    assert pmf_total_local_time(p75, 0, 1).value == 0.25
    assert pmf_total_local_time(p75, -1, 1).value == pytest.approx(1 / 6, rel=1e-15)
    assert pmf_total_local_time(p75, -1, 1, exact=True).value == Fraction(1, 6)
    with pytest.raises(ValueError):
        pmf_total_local_time(p75, 0, 0)


def test_never_visit_examples(p75):
    assert atom_never_visit(p75, 0).value == 0.5
    assert atom_never_visit(p75, -1).value == pytest.approx(2 / 3, rel=1e-15)
    assert atom_never_visit(p75, -1, exact=True).value == Fraction(2, 3)
    assert atom_never_visit(p75, 5).value == 0


@pytest.mark.parametrize("p_text", PS)
def test_total_local_time_normalization(p_text):
    prm = WalkParams(p_text)
    for z in range(-3, 4):
        K = 200
        total = atom_never_visit(prm, z).value + math.fsum(
            pmf_total_local_time(prm, z, k).value for k in range(1, K + 1)
        )
        assert abs(total - 1) <= 1e-12
        exact = atom_never_visit(prm, z, exact=True).value + sum(
            pmf_total_local_time(prm, z, k, exact=True).value for k in range(1, 40)
        )
        q = prm.q_exact
        bound = (2 * q) ** 39 / (1 - 2 * q) * max(1, (q / prm.p_exact) ** (-z) if z < 0 else 1)
        assert 0 <= 1 - exact <= bound


def test_no_return_examples(p75):
    assert no_return_probability(p75, 1).value == 1
    assert no_return_probability(p75, 3).value == pytest.approx(0.625, abs=1e-15)
    assert no_return_probability(p75, 3, exact=True).value == 1 - 2 * Fraction(3, 4) * Fraction(1, 4)
    assert enumerate_exact(p75, 2, ("no-return-through", 2), exact=True).value == Fraction(5, 8)


@pytest.mark.parametrize("p_text", PS)
def test_no_return_sequence_monotone(p_text):
    prm = WalkParams(p_text)
    seq = no_return_sequence(prm, 60)
    gamma = derive_constants(prm).gamma
    assert seq[0] == 1
    assert all(a >= b for a, b in zip(seq, seq[1:]))
    assert all(x >= gamma for x in seq)
    exact = no_return_sequence(prm, 30, exact=True)
    assert all(abs(float(e) - f) <= 1e-14 for e, f in zip(exact, seq))


def test_bound_return_tail(p75):
    assert bound_return_tail(p75, 4) == pytest.approx(5.598, abs=1e-3)
    mpmath.mp.dps = 40
    ref = mpmath.mpf("0.75") ** 55 / (1 - mpmath.sqrt(mpmath.mpf("0.75")))
    assert bound_return_tail(p75, 220) == pytest.approx(float(ref), rel=1e-12)
    values = [bound_return_tail(p75, m) for m in range(1, 300)]
    assert all(a > b for a, b in zip(values, values[1:]))
    with pytest.raises(ValueError):
        bound_return_tail(p75, 0)


def test_bound_joint_tail_rate(p75):
    assert bound_joint_tail_rate(p75, 1, 100) == pytest.approx(6.31e-3, abs=5e-6)
    delta = derive_constants(p75).delta
    assert bound_joint_tail_rate(p75, 1, 100) == pytest.approx(100 ** -(1 + delta), rel=1e-14)
    assert bound_joint_tail_rate(p75, 1e-12, 100) == pytest.approx(1.0, abs=1e-10)
    with pytest.raises(ValueError):
        bound_joint_tail_rate(p75, 0, 100)


def test_enumerate_examples(p75):
    assert enumerate_exact(p75, 2, ("position-equals", 2, 0)).value == pytest.approx(0.375, abs=1e-15)
    assert enumerate_exact(p75, 2, ("favorite-count-equals", 2, 2)).value == 1


@pytest.mark.parametrize("p_text", PS)
def test_max_local_time_vs_self_avoiding_dp(p_text):
    prm = WalkParams(p_text)
    for exact in (False, True):
        enum = enumerate_exact(prm, 12, ("max-local-time-at-least", 12, 2), exact=exact).value
        dp = 1 - counted_self_avoiding_probability(prm, 12, exact=exact).value
        if exact:
            assert enum == dp
        else:
            assert abs(enum - dp) <= 1e-12
    # the DP is p^{t-1} + q^{t-1}
    assert counted_self_avoiding_probability(prm, 12, exact=True).value == prm.p_exact**11 + prm.q_exact**11


def test_enumerate_C_events(p75):
    assert enumerate_exact(p75, 2, ("C-event-resolved-true", 1, 1)).value == 1
    assert enumerate_exact(p75, 4, ("C-event-resolved-true", 1, 2)).value == 1
    out = enumerate_exact(p75, 10, ("C-event-resolved-true", 2, 2), exact=True)
    assert out.lower <= out.upper
    # the lower bound gamma^k on P(C): the enumerated lower end already exceeds it at n=10
    assert out.lower >= Fraction(1, 4)


def test_enumerate_F_count(p75):
    # the named event agrees with the full law of F_8
    from favwalk import ThickPointConfig, count_thick_pairs

    cfg = ThickPointConfig.for_params(p75, 0.3, strict=False)
    law = enumerate_distribution(p75, 8, lambda pos, hist: count_thick_pairs(list(pos), cfg), exact=True)
    assert sum(law.values()) == 1
    assert enumerate_exact(p75, 8, ("F-count-equals", 8, 0, 0.3), exact=True).value == law.get(0, 0)


def test_enumeration_cap(p75):
    with pytest.raises(ValueError):
        enumerate_exact(p75, ENUMERATION_CAP + 1, ("position-equals", 1, 1))
    with pytest.raises(ValueError):
        enumerate_exact(p75, 3, ("nonsense", 1))


def test_gray_code_visits_every_path_once():
    seen = set()
    for pos, ups, hist in gray_code_paths(6):
        key = tuple(pos)
        seen.add(key)
        assert ups == sum(1 for a, b in zip(key, key[1:]) if b > a)
        assert hist.top == max(np.unique(key[1:], return_counts=True)[1])
    assert len(seen) == 64


def test_enumerate_check_small():
    out = enumerate_check(10)
    assert out["ok"] and out["max_float_diff"] <= 1e-12 and out["rational_exact"]


def test_gamma_rate_table(p75):
    table = gamma_rate_check(p75, range(10, 61))
    ratios = np.array([r for _, r in table])
    assert np.all(np.isfinite(ratios)) and np.all(ratios > 0)
    assert ratios.max() <= 10 * np.median(ratios)
    seq = no_return_sequence(p75, 60)
    assert all(x - 0.5 >= 0 for x in seq)
