import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from core.distributions import (
    EqualRevenue,
    Instance,
    PointMass,
    Tabulated,
    Triangle,
    TriangleParams,
    cdf_eval,
    cdf_from_dict,
    dominates,
    is_regular,
    load_instance,
    monopoly_point,
    save_instance,
    triangles_of,
)
from core.errors import InvalidDistributionError, UnboundedRevenueError


@pytest.mark.parametrize("x, expected", [(2.0, 0.5), (0.0, 0.0), (3.0, 1.0), (1.0, 1.0 / 3.0)])
def test_triangle_cdf_values(x, expected):
    assert cdf_eval(Triangle.of(2.0, 0.5), x) == pytest.approx(expected)


def test_cdf_eval_rejects_negative_prices():
    with pytest.raises(InvalidDistributionError):
        cdf_eval(PointMass(1.0), -0.5)


def test_triangle_rejects_bad_parameters():
    with pytest.raises(InvalidDistributionError):
        TriangleParams(1.0, 1.5)
    with pytest.raises(ValueError):
        Triangle.of(-1.0, 0.5)


def test_scalar_and_array_inputs():
    tri = Triangle.of(2.0, 0.5)
    assert isinstance(tri.evaluate(1.0), float)
    out = tri.evaluate(np.array([0.0, 2.0, 3.0]))
    assert out.shape == (3,)
    np.testing.assert_allclose(out, [0.0, 0.5, 1.0])


@given(v=st.floats(0.1, 50.0), q=st.floats(0.01, 0.99), y=st.floats(0.0, 0.999))
@settings(max_examples=200, deadline=None)
def test_triangle_inverse_is_left_inverse(v, q, y):
    tri = Triangle.of(v, q)
    x = tri.inverse(y)
    assert 0.0 <= x <= v * (1 + 1e-12)
    # F(x) ≤ y ≤ F(x+)
    assert tri.evaluate(x) <= y + 1e-9
    if x < v:
        assert tri.evaluate(x * (1 + 1e-9) + 1e-12) >= y - 1e-6


def test_point_mass_basics():
    pm = PointMass(1.0)
    assert pm.evaluate(1.0) == 0.0
    assert pm.evaluate(1.0 + 1e-12) == 1.0
    assert pm.exceedance(1.0) == 1.0
    assert monopoly_point(pm) == (1.0, 1.0)
    assert pm.inverse(0.0) == 1.0


def test_monopoly_point_of_triangle():
    assert monopoly_point(Triangle.of(3.0, 0.2)) == (3.0, 0.2)


def test_tabulated_equal_revenue_picks_largest_price():
    xs = np.linspace(1.0, 10.0, 91)
    tab = Tabulated(tuple(xs), tuple(1.0 - 1.0 / xs))
    v, q = monopoly_point(tab)
    assert v == pytest.approx(10.0)
    assert v * q == pytest.approx(1.0)


def test_tabulated_is_left_continuous_step():
    tab = Tabulated((1.0, 2.0, 3.0), (0.2, 0.5, 1.0))
    assert tab.evaluate(0.0) == 0.0
    assert tab.evaluate(0.5) == pytest.approx(0.2)
    assert tab.evaluate(2.0) == pytest.approx(0.5)
    assert tab.evaluate(2.5) == pytest.approx(1.0)
    assert tab.evaluate(10.0) == 1.0
    assert tab.exceedance(2.0) == pytest.approx(0.5)


def test_tabulated_validation():
    with pytest.raises(InvalidDistributionError):
        Tabulated((1.0, 1.0), (0.1, 0.2))
    with pytest.raises(InvalidDistributionError):
        Tabulated((1.0, 2.0), (0.5, 0.4))
    with pytest.raises(InvalidDistributionError):
        Tabulated((1.0,), (0.5, 0.6))


def test_equal_revenue_has_no_monopoly_point():
    er = EqualRevenue(1.0)
    assert er.support_max == math.inf
    assert er.exceedance(4.0) == pytest.approx(0.25)
    with pytest.raises(UnboundedRevenueError) as exc:
        er.monopoly_point()
    assert exc.value.code == "unbounded-revenue"


@pytest.mark.parametrize(
    "cdf",
    [Triangle.of(1.0, 0.5), PointMass(1.0), EqualRevenue(2.0)],
)
def test_closed_form_families_are_regular(cdf):
    assert is_regular(cdf, np.linspace(0.01, 5.0, 200))


def test_worst_case_two_buyer_cdf_is_irregular():
    xs = np.linspace(1.001, 50.0, 2000)
    tab = Tabulated(tuple(xs), tuple(np.sqrt(1.0 - 1.0 / xs)))
    assert not is_regular(tab, tab.knots)


def test_dominates():
    grid = np.linspace(0.0, 3.0, 301)
    assert dominates(PointMass(2.0), PointMass(1.0), grid)
    assert not dominates(PointMass(1.0), PointMass(2.0), grid)
    assert dominates(Triangle.of(2.0, 0.6), Triangle.of(2.0, 0.5), grid)
    tri = Triangle.of(2.0, 0.5)
    assert dominates(tri, tri, grid)


def test_cdf_dict_round_trip_preserves_values():
    grid = np.linspace(0.0, 5.0, 51)
    for cdf in (Triangle.of(2.0, 0.4), PointMass(1.5), EqualRevenue(0.5), Tabulated((1.0, 2.0), (0.3, 1.0))):
        back = cdf_from_dict(json.loads(json.dumps(cdf.to_dict())))
        np.testing.assert_allclose(back.evaluate(grid), cdf.evaluate(grid))


def test_unknown_kind_is_rejected():
    with pytest.raises(InvalidDistributionError):
        cdf_from_dict({"kind": "lognormal"})


def test_instance_counts_and_expansion():
    inst = Instance((Triangle.of(2.0, 0.5), PointMass(1.0)), k=2, counts=(3, 1))
    assert inst.n == 4
    assert len(inst.expanded()) == 4
    s = inst.exceedance(1.0)
    assert s.shape == (4,)
    assert s[-1] == 1.0
    assert len(triangles_of(Instance.iid(Triangle.of(1.0, 0.5), 5, 1))) == 5
    with pytest.raises(InvalidDistributionError):
        triangles_of(inst)


def test_instance_validation():
    with pytest.raises(InvalidDistributionError):
        Instance((), k=1)
    with pytest.raises(InvalidDistributionError):
        Instance((PointMass(1.0),), k=0)
    with pytest.raises(InvalidDistributionError):
        Instance((PointMass(1.0),), k=1, counts=(0,))


def test_instance_file_round_trip(tmp_path):
    inst = Instance((Triangle.of(2.0, 0.5), EqualRevenue(1.0)), k=1, counts=(2, 1))
    path = tmp_path / "inst.json"
    save_instance(inst, str(path))
    back = load_instance(str(path))
    assert back.k == 1
    assert back.counts == (2, 1)
    assert back.cdfs[0] == inst.cdfs[0]


cdf_strategy = st.one_of(
    st.builds(Triangle.of, st.floats(0.1, 10.0), st.floats(0.0, 1.0)),
    st.builds(EqualRevenue, st.floats(0.1, 5.0)),
    st.builds(PointMass, st.floats(0.0, 10.0)),
)


@given(cdf_strategy, st.lists(st.floats(0.0, 20.0), min_size=2, max_size=50))
@settings(max_examples=200, deadline=None)
def test_cdfs_are_monotone_and_bounded(cdf, xs):
    xs = np.sort(np.asarray(xs))
    values = np.asarray(cdf.evaluate(xs))
    assert np.all((values >= 0.0) & (values <= 1.0))
    assert np.all(np.diff(values) >= -1e-15)


@given(v=st.floats(0.1, 50.0), q=st.floats(0.01, 0.99))
@settings(max_examples=100, deadline=None)
def test_triangle_apex_is_revenue_maximiser(v, q):
    tri = Triangle.of(v, q)
    ps = np.linspace(0.0, 2.0 * v, 801)
    revenue = ps * np.asarray(tri.exceedance(ps))
    assert revenue.max() <= v * q * (1.0 + 1e-12)
    assert v * float(tri.exceedance(v)) == pytest.approx(v * q)


@given(v=st.floats(0.5, 20.0), q=st.floats(0.05, 0.95), n=st.integers(20, 400))
@settings(max_examples=100, deadline=None)
def test_tabulated_clone_monopoly_within_one_knot(v, q, n):
    step = 1.5 * v / n
    clone = Tabulated.from_cdf(Triangle.of(v, q), np.arange(1, n + 1) * step)
    v_hat, q_hat = monopoly_point(clone)
    assert v - step - 1e-9 <= v_hat <= v + 1e-9
    assert v_hat * q_hat <= v * q * (1.0 + 1e-12)
    assert v_hat * q_hat == pytest.approx(v * q, rel=step / v + 1e-9)


@given(
    st.tuples(st.floats(0.2, 5.0), st.floats(0.05, 0.95)),
    st.tuples(st.floats(0.2, 5.0), st.floats(0.05, 0.95)),
)
@settings(max_examples=100, deadline=None)
def test_dominates_is_antisymmetric(a, b):
    grid = np.linspace(0.0, 6.0, 601)
    fa, fb = Triangle.of(*a), Triangle.of(*b)
    assert dominates(fa, fa, grid)
    if dominates(fa, fb, grid, tol=0.0) and dominates(fb, fa, grid, tol=0.0):
        np.testing.assert_array_equal(fa.evaluate(grid), fb.evaluate(grid))


def test_dominates_orders_triangles_by_atom():
    grid = np.linspace(0.0, 3.0, 301)
    assert dominates(Triangle.of(2.0, 0.7), Triangle.of(2.0, 0.3), grid)
    assert not dominates(Triangle.of(2.0, 0.3), Triangle.of(2.0, 0.7), grid)


@pytest.mark.parametrize("knots", [200, 1000])
def test_tabulated_triangle_clone_is_regular(knots):
    xs = np.linspace(0.01, 2.0, knots)
    assert is_regular(Tabulated.from_cdf(Triangle.of(2.0, 0.5), xs), xs)
    er = np.linspace(1.0, 10.0, knots)
    assert is_regular(Tabulated.from_cdf(EqualRevenue(1.0), er), er)


def test_regularity_check_still_flags_coarse_irregular_grid():
    xs = np.linspace(1.001, 50.0, 500)
    tab = Tabulated(tuple(xs), tuple(np.sqrt(1.0 - 1.0 / xs)))
    assert not is_regular(tab, tab.knots)
