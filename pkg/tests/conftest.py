import pytest

from favwalk import WalkParams


@pytest.fixture
def p75():
    return WalkParams("0.75")


@pytest.fixture
def p90():
    return WalkParams("0.9")


def within_sigma(estimate, truth, n, sigmas=4.0):
    """``|estimate - truth| <= sigmas * sqrt(truth (1 - truth) / n)`` for a Bernoulli mean."""
    sd = (truth * (1 - truth) / n) ** 0.5
    return abs(estimate - truth) <= sigmas * sd
