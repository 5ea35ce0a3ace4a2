import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from core.distributions import Instance, PointMass, Tabulated, Triangle
from core.errors import IndexOutOfRangeError, InvalidDistributionError
from core.order_stats import (
    brute_force_pmf,
    check_log_concavity,
    grouped_pmf,
    order_stat_cdf,
    order_stat_cdfs,
    pbd_pmf,
    validate_pmf,
)

probs = st.lists(st.floats(0.0, 1.0), min_size=1, max_size=10)


@pytest.mark.parametrize(
    "s, expected",
    [((0.5, 0.5), (0.25, 0.5, 0.25)), ((1.0, 0.3), (0.0, 0.7, 0.3))],
)
def test_pbd_small_cases(s, expected):
    np.testing.assert_allclose(pbd_pmf(s), expected, atol=1e-15)


def test_pbd_matches_binomial():
    np.testing.assert_allclose(pbd_pmf([0.2] * 10), stats.binom.pmf(np.arange(11), 10, 0.2), atol=1e-14)


@given(probs)
@settings(max_examples=100, deadline=None)
def test_pbd_matches_enumeration(s):
    np.testing.assert_allclose(pbd_pmf(s), brute_force_pmf(s), atol=1e-12)
    validate_pmf(pbd_pmf(s))


@given(probs, st.integers(0, 6))
@settings(max_examples=100, deadline=None)
def test_capped_pmf_lumps_the_top(s, cap):
    full = pbd_pmf(s)
    capped = pbd_pmf(s, cap=cap)
    if cap >= len(s):
        np.testing.assert_allclose(capped, full)
    else:
        assert capped.shape == (cap + 1,)
        np.testing.assert_allclose(capped[:cap], full[:cap], atol=1e-14)
        assert capped[cap] == pytest.approx(full[cap:].sum(), abs=1e-14)


def test_pbd_accepts_price_columns():
    s = np.array([[0.5, 1.0], [0.5, 0.3]])
    out = pbd_pmf(s)
    assert out.shape == (3, 2)
    np.testing.assert_allclose(out[:, 0], [0.25, 0.5, 0.25])
    np.testing.assert_allclose(out[:, 1], [0.0, 0.7, 0.3], atol=1e-15)


def test_pbd_rejects_bad_input():
    with pytest.raises(InvalidDistributionError):
        pbd_pmf([])
    with pytest.raises(InvalidDistributionError):
        pbd_pmf([0.5, 1.2])


def test_grouped_pmf_equals_expanded_pmf():
    inst = Instance((Triangle.of(2.0, 0.4), PointMass(1.0)), k=2, counts=(3, 2))
    xs = np.array([0.5, 1.0, 1.5])
    np.testing.assert_allclose(grouped_pmf(inst, xs), pbd_pmf(inst.exceedance(xs)), atol=1e-14)


def test_order_stats_of_two_coin_flips():
    tab = Tabulated((1.0, 2.0), (0.5, 1.0))
    inst = Instance.iid(tab, 2, 1)
    assert order_stat_cdf(inst, 1.0, 1) == pytest.approx(0.25)
    assert order_stat_cdf(inst, 1.0, 2) == pytest.approx(0.75)
    assert order_stat_cdf(inst, 1.0, 3) == 1.0


def test_order_stat_of_certain_bid():
    inst = Instance((PointMass(2.0),), k=1)
    assert order_stat_cdf(inst, 1.0, 1) == 0.0


def test_order_stat_index_range():
    inst = Instance((PointMass(2.0),), k=1)
    with pytest.raises(IndexOutOfRangeError):
        order_stat_cdf(inst, 1.0, 0)
    with pytest.raises(IndexOutOfRangeError):
        order_stat_cdf(inst, 1.0, 3)


def test_order_stat_cdfs_are_nondecreasing_in_index():
    inst = Instance((Triangle.of(2.0, 0.3), Triangle.of(1.0, 0.7), PointMass(0.8)), k=2)
    xs = np.linspace(0.0, 2.5, 50)
    d = order_stat_cdfs(inst, xs, 3)
    assert d.shape == (3, 50)
    assert np.all(np.diff(d, axis=0) >= -1e-15)
    assert np.all((d >= 0.0) & (d <= 1.0))


@pytest.mark.parametrize(
    "pmf, expected",
    [
        (stats.binom.pmf(np.arange(5), 4, 0.5), True),
        (pbd_pmf([0.1, 0.5, 0.9]), True),
        ([0.5, 0.0, 0.5], False),
    ],
)
def test_log_concavity(pmf, expected):
    assert check_log_concavity(pmf) is expected


@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=20))
@settings(max_examples=200, deadline=None)
def test_poisson_binomial_is_log_concave(s):
    assert check_log_concavity(pbd_pmf(s))
