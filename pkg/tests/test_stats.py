import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qkd_mismatch.stats import (
    CountsSummary,
    UndefinedQBER,
    abort_check,
    bias_contrast,
    binomial_sigma,
    contrast,
    contrast_sigma,
    qber,
    qber_sigma,
)


def summary(c0, c1, errors=0, n=None):
    return CountsSummary(c0, c1, c0 + c1, errors, n or (c0 + c1))


def test_qber_examples():
    assert qber(summary(50, 50, 0)) == 0.0
    assert qber(summary(60, 40, 100)) == 1.0
    assert qber(summary(50, 50, 3)) == 0.03
    with pytest.raises(UndefinedQBER):
        qber(CountsSummary.empty())


def test_summary_invariants():
    with pytest.raises(ValueError):
        CountsSummary(1, 1, 3, 0, 10)
    with pytest.raises(ValueError):
        CountsSummary(1, 1, 2, 3, 10)
    with pytest.raises(ValueError):
        CountsSummary(5, 5, 10, 0, 9)


def test_contrast_examples():
    assert bias_contrast(summary(65, 35)) == pytest.approx(0.30)
    assert bias_contrast(summary(7, 7)) == 0.0
    assert bias_contrast(summary(9, 0)) == 1.0
    with pytest.raises(ValueError):
        contrast(0, 0)


@given(st.integers(0, 10**6), st.integers(0, 10**6))
def test_contrast_antisymmetric(c0, c1):
    if c0 + c1 == 0:
        return
    assert contrast(c0, c1) == -contrast(c1, c0)
    assert -1.0 <= contrast(c0, c1) <= 1.0


def test_abort_threshold():
    assert not abort_check(0.109)
    assert abort_check(0.111)
    assert not abort_check(0.069, threshold=0.07)
    assert abort_check(0.071, threshold=0.07)


def test_binomial_sigma():
    assert binomial_sigma(100) == 10.0
    assert binomial_sigma(0, 50) == 0.0
    assert binomial_sigma(25, 100) == pytest.approx(math.sqrt(25 * 0.75))


def test_contrast_sigma_against_bootstrap():
    rng = np.random.default_rng(0)
    c0, c1 = 6500, 3500
    n = c0 + c1
    draws = rng.binomial(n, c0 / n, size=10_000)
    boot = np.std((2 * draws - n) / n)
    assert contrast_sigma(c0, c1) == pytest.approx(boot, rel=0.10)


@given(st.lists(st.tuples(st.integers(0, 50), st.integers(0, 50), st.integers(0, 20)), min_size=1, max_size=6))
def test_merge_associative_and_commutative(parts):
    items = [CountsSummary(a, b, a + b, min(e, a + b), a + b + e) for a, b, e in parts]
    total = CountsSummary.empty()
    for s in items:
        total = total + s
    rev = CountsSummary.empty()
    for s in reversed(items):
        rev = s + rev
    assert total == rev
    assert total.sifted == sum(s.sifted for s in items)


def test_qber_sigma():
    s = summary(500, 500, 30)
    assert qber_sigma(s) == pytest.approx(math.sqrt(0.03 * 0.97 / 1000))
