import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from igflow import DomainError, digamma, polygamma, tetragamma, trigamma

mpmath.mp.dps = 40


def test_trigamma_at_one_matches_basel_sum():
    # zeta(2) by direct summation with an integral tail correction
    n = 200000
    partial = sum(1.0 / k ** 2 for k in range(n, 0, -1))
    oracle = partial + 1.0 / n - 0.5 / n ** 2
    assert abs(polygamma(1, 1.0) - oracle) < 1e-13
    # 8 asymptotic terms from x = 6 leave a truncation error near 1e-13
    assert abs(trigamma(1.0) - math.pi ** 2 / 6) < 2e-13


def test_digamma_at_one_is_minus_euler_gamma():
    # gamma = lim H_n - ln n, with the asymptotic correction 1/(2n) - 1/(12 n^2)
    n = 100000
    harmonic = sum(1.0 / k for k in range(n, 0, -1))
    oracle = -(harmonic - math.log(n) - 0.5 / n + 1.0 / (12 * n * n))
    assert abs(polygamma(0, 1.0) - oracle) < 1e-12
    assert abs(digamma(1.0) + 0.5772156649015329) < 2e-13


def test_digamma_recurrence_step():
    assert abs(polygamma(0, 2.0) - polygamma(0, 1.0) - 1.0) < 1e-14


@pytest.mark.parametrize("x", [1e-3, 0.1, 0.5, 1.0, 2.5, 5.999, 6.0, 6.001, 10.0, 123.4, 1e4])
def test_against_mpmath(x):
    assert abs(digamma(x) - float(mpmath.digamma(x))) <= 1e-13 * max(1.0, abs(float(mpmath.digamma(x))))
    assert abs(trigamma(x) / float(mpmath.polygamma(1, x)) - 1.0) < 1e-12
    assert abs(tetragamma(x) / float(mpmath.polygamma(2, x)) - 1.0) < 1e-10


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=1e-2, max_value=1e3))
def test_recurrences(x):
    assert abs(digamma(x + 1) - digamma(x) - 1.0 / x) < 1e-12 * max(1.0, 1.0 / x)
    assert abs(trigamma(x) - trigamma(x + 1) - 1.0 / x ** 2) < 1e-11 * max(1.0, 1.0 / x ** 2)


@pytest.mark.parametrize("bad", [0.0, -1.0, float("nan"), float("inf")])
def test_domain(bad):
    with pytest.raises(DomainError):
        digamma(bad)
    with pytest.raises(DomainError):
        polygamma(1, bad)


def test_order_validation():
    with pytest.raises(ValueError):
        polygamma(3, 1.0)


def test_vectorised_use_through_numpy():
    xs = np.linspace(0.5, 8.0, 7)
    out = np.array([trigamma(x) for x in xs])
    assert np.all(np.diff(out) < 0)
