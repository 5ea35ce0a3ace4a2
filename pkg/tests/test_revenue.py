import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from core.distributions import EqualRevenue, Instance, PointMass, Tabulated, Triangle, TriangleParams, dominates
from core.errors import CapacityViolationError, IrregularInstanceError, KTooSmallError, UnboundedSupportError
from core.revenue import (
    Allocation,
    ap_curve,
    ap_optimal,
    ap_revenue,
    ar_optimal,
    ar_revenue,
    check_ear_programs,
    check_feasibility,
    ear_optimal,
    ear_revenue,
    group_partition,
    relaxed_constraint_check,
    revenue_summary,
    triangle_reduction,
)


def two_point(lo, hi, w):
    """出价 lo（概率 1-w）或 hi（概率 w）。"""
    return Tabulated((lo, hi), (0.0, 1.0 - w))


def test_ap_of_single_triangle_at_apex():
    inst = Instance((Triangle.of(3.0, 0.2),), k=1)
    assert ap_revenue(inst, 3.0) == pytest.approx(0.6)
    assert ap_revenue(inst, 0.0) == 0.0


def test_ap_of_deterministic_bids():
    inst = Instance.iid(PointMass(1.0), 2, 2)
    assert ap_revenue(inst, 1.0) == pytest.approx(2.0)


def test_ap_optimal_single_triangle():
    p, rev = ap_optimal(Instance((Triangle.of(2.0, 0.5),), k=1))
    assert p == pytest.approx(2.0)
    assert rev == pytest.approx(1.0)


def test_ap_optimal_point_masses():
    p, rev = ap_optimal(Instance.iid(PointMass(1.0), 5, 1))
    assert (p, rev) == (pytest.approx(1.0), pytest.approx(1.0))


@given(
    st.lists(
        st.tuples(st.floats(0.1, 2.0), st.floats(0.05, 2.0), st.floats(0.0, 1.0)),
        min_size=1,
        max_size=6,
    ),
    st.integers(1, 4),
)
@settings(max_examples=50, deadline=None)
def test_ap_matches_outcome_enumeration(buyers, k):
    cdfs = tuple(two_point(lo, lo + d, w) for lo, d, w in buyers)
    inst = Instance(cdfs, k=k)
    prices = sorted({p for lo, d, _ in buyers for p in (lo, lo + d, lo + 0.5 * d)})
    expected = []
    for p in prices:
        total = 0.0
        for outcome in itertools.product((0, 1), repeat=len(buyers)):
            prob, willing = 1.0, 0
            for (lo, d, w), high in zip(buyers, outcome):
                prob *= w if high else 1.0 - w
                willing += (lo + d if high else lo) >= p
            total += prob * p * min(k, willing)
        expected.append(total)
    np.testing.assert_allclose(ap_curve(inst, prices), expected, atol=1e-10)


def test_ar_of_deterministic_bids():
    inst = Instance.iid(PointMass(1.0), 2, 1)
    assert ar_revenue(inst, 1.0) == pytest.approx(1.0)
    assert ar_revenue(inst, 0.0) == pytest.approx(1.0)
    assert ar_revenue(inst, 5.0) == 0.0


def test_ar_of_two_fixed_bids():
    # 无保留价时第二价恒为 1
    inst = Instance((PointMass(1.0), PointMass(2.0)), k=1)
    assert ar_revenue(inst, 0.0) == pytest.approx(1.0)
    r, rev = ar_optimal(inst)
    assert rev == pytest.approx(2.0)
    assert r == pytest.approx(2.0)


def test_ar_needs_cutoff_for_unbounded_support():
    inst = Instance.iid(EqualRevenue(1.0), 3, 1)
    with pytest.raises(UnboundedSupportError):
        ar_revenue(inst, 1.0)
    assert ar_revenue(inst, 1.0, cutoff=50.0) > ap_revenue(inst, 1.0)


def test_single_buyer_ar_equals_ap():
    inst = Instance((Triangle.of(2.0, 0.3),), k=1)
    assert ar_optimal(inst)[1] == pytest.approx(ap_optimal(inst)[1])


@given(st.floats(0.2, 3.0), st.floats(0.05, 0.95), st.floats(0.0, 4.0))
@settings(max_examples=60, deadline=None)
def test_ar_dominates_ap(v, q, r):
    inst = Instance.iid(Triangle.of(v, q), 3, 1)
    assert ar_revenue(inst, r) >= ap_revenue(inst, r) - 1e-12


@given(
    st.lists(st.tuples(st.floats(0.2, 3.0), st.floats(0.05, 0.9), st.floats(0.0, 0.09)), min_size=1, max_size=4),
    st.integers(1, 3),
    st.floats(0.1, 3.0),
)
@settings(max_examples=40, deadline=None)
def test_revenue_monotonicity(buyers, k, p):
    weak = Instance(tuple(Triangle.of(v, q) for v, q, _ in buyers), k=k)
    strong = Instance(tuple(Triangle.of(v, q + dq) for v, q, dq in buyers), k=k)
    assert ap_revenue(strong, p) >= ap_revenue(weak, p) - 1e-12
    assert ar_revenue(strong, p) >= ar_revenue(weak, p) - 1e-8
    alloc = [0.5 * q for _, q, _ in buyers]
    if sum(alloc) <= k:
        assert ear_revenue(strong, alloc) >= ear_revenue(weak, alloc) - 1e-12


def test_ear_at_monopoly_quantiles():
    tris = (Triangle.of(2.0, 0.3), Triangle.of(1.0, 0.5))
    inst = Instance(tris, k=1)
    assert ear_revenue(inst, [0.3, 0.5]) == pytest.approx(1.1)
    assert ear_revenue(inst, [0.0, 0.0]) == 0.0


def test_ear_inverts_triangle_at_atom():
    inst = Instance((Triangle.of(2.0, 0.5),), k=1)
    assert ear_revenue(inst, Allocation((0.25,))) == pytest.approx(0.5)


def test_ear_rejects_overfull_allocation():
    inst = Instance.iid(Triangle.of(2.0, 0.5), 2, 1)
    with pytest.raises(CapacityViolationError) as exc:
        ear_revenue(inst, [0.8, 0.8])
    assert exc.value.code == "capacity-violation"


def test_ear_rejects_irregular_instance():
    xs = np.linspace(1.001, 50.0, 500)
    inst = Instance.iid(Tabulated(tuple(xs), tuple(np.sqrt(1.0 - 1.0 / xs))), 2, 1)
    with pytest.raises(IrregularInstanceError):
        ear_optimal(inst)


def test_ear_optimal_fills_both_apexes():
    alloc, rev = ear_optimal(Instance.iid(Triangle.of(2.0, 0.5), 2, 1))
    np.testing.assert_allclose(alloc.qprime, [0.5, 0.5])
    assert rev == pytest.approx(2.0)


def test_ear_optimal_with_slack_capacity():
    tris = (Triangle.of(3.0, 0.2), Triangle.of(1.0, 0.4), Triangle.of(0.5, 0.6))
    alloc, rev = ear_optimal(Instance(tris, k=2))
    np.testing.assert_allclose(alloc.qprime, [0.2, 0.4, 0.6])
    assert rev == pytest.approx(0.6 + 0.4 + 0.3)


def test_ear_water_fill_on_mixed_instance():
    # 三角曲线斜率 2 先装满 0.5，点质量斜率 1 装剩下的 0.5
    alloc, rev = ear_optimal(Instance((Triangle.of(2.0, 0.5), PointMass(1.0)), k=1), quantile_points=2000)
    np.testing.assert_allclose(alloc.qprime, [0.5, 0.5], atol=1e-9)
    assert rev == pytest.approx(1.5, rel=1e-6)


@given(st.lists(st.tuples(st.floats(0.1, 5.0), st.floats(0.05, 0.95)), min_size=1, max_size=5), st.integers(1, 3))
@settings(max_examples=30, deadline=None)
def test_ear_optimal_beats_random_allocations(buyers, k):
    inst = Instance(tuple(Triangle.of(v, q) for v, q in buyers), k=k)
    _, best = ear_optimal(inst)
    rng = np.random.default_rng(len(buyers) * 10 + k)
    for _ in range(200):
        alloc = rng.uniform(0.0, 1.0, len(buyers))
        if alloc.sum() > k:
            alloc *= k / alloc.sum()
        assert ear_revenue(inst, alloc) <= best + 1e-9


def test_feasibility():
    assert not check_feasibility(Instance.iid(PointMass(1.0), 2, 2)).ok
    ok = check_feasibility(Instance((Triangle.of(2.0, 0.5),), k=1))
    assert ok.ok
    assert ok.worst_rev == pytest.approx(1.0)


def test_relaxed_constraint():
    assert not relaxed_constraint_check(Instance.iid(PointMass(1.0), 20, 4))
    assert relaxed_constraint_check(Instance.iid(PointMass(0.0), 3, 4))
    with pytest.raises(KTooSmallError):
        relaxed_constraint_check(Instance.iid(PointMass(1.0), 2, 3))


def test_group_partition():
    summary = group_partition([TriangleParams(1.0, 0.5)], 8)
    assert summary.m == 4
    assert summary.sum_a == pytest.approx(0.5)
    assert summary.a_sizes == {2: 1, 3: 1, 4: 1}
    empty = group_partition([], 8)
    assert (empty.sum_a, empty.sum_b, empty.sum_c) == (0.0, 0.0, 0.0)
    assert set(empty.a_sizes.values()) == {0}
    with pytest.raises(KTooSmallError):
        group_partition([], 3)


def test_group_partition_small_values_go_to_c():
    tris = [TriangleParams(0.2, 0.5)] * 6
    summary = group_partition(tris, 8)
    assert summary.sum_c == pytest.approx(0.6)
    assert summary.bounds_hold()


def test_revenue_summary_reports_ratios():
    summary = revenue_summary(Instance.iid(Triangle.of(2.0, 0.5), 2, 1))
    assert summary["ap"]["value"] > 0
    assert summary["ear"]["value"] == pytest.approx(2.0)
    assert summary["ratios"]["ear/ap"] == pytest.approx(2.0 / summary["ap"]["value"])
    assert summary["programs"]["regular"] is False  # AP(2) = 1.5


def test_triangle_reduction_on_mixed_instance():
    inst = Instance((Triangle.of(2.0, 0.5), EqualRevenue(1.0), PointMass(1.5)), k=2)
    alloc = [0.3, 0.4, 0.2]
    reduced, same = triangle_reduction(inst, alloc)
    assert same.qprime == (0.3, 0.4, 0.2)
    got = [(c.v, c.q) for c in reduced.cdfs]
    np.testing.assert_allclose(got, [(2.0, 0.3), (2.5, 0.4), (1.5, 0.2)])
    assert ear_revenue(reduced, alloc) == pytest.approx(ear_revenue(inst, alloc), rel=1e-12)
    assert ear_revenue(inst, alloc) == pytest.approx(0.6 + 1.0 + 0.3)

    grid = np.linspace(0.0, 4.0, 401)
    for original, tri in zip(inst.cdfs, reduced.cdfs):
        assert dominates(original, tri, grid)
    assert np.all(ap_curve(reduced, grid) <= ap_curve(inst, grid) + 1e-12)


def test_triangle_reduction_zero_quantile_is_point_mass_at_zero():
    inst = Instance((Triangle.of(2.0, 0.5), EqualRevenue(1.0)), k=1)
    reduced, _ = triangle_reduction(inst, [0.5, 0.0])
    assert reduced.cdfs[1].v == 0.0 and reduced.cdfs[1].q == 0.0
    assert ap_revenue(reduced, 1.0) == pytest.approx(ap_revenue(Instance((Triangle.of(2.0, 0.5),), k=1), 1.0))


def test_triangle_reduction_rejects_overfull_allocation():
    with pytest.raises(CapacityViolationError):
        triangle_reduction(Instance.iid(Triangle.of(2.0, 0.5), 2, 1), [0.7, 0.7])


@given(
    st.lists(st.tuples(st.floats(0.2, 3.0), st.floats(0.05, 0.95), st.floats(0.0, 1.0)), min_size=1, max_size=4),
    st.floats(0.5, 2.0),
    st.integers(1, 3),
)
@settings(max_examples=40, deadline=None)
def test_triangle_reduction_keeps_ear_and_lowers_ap(buyers, scale, k):
    cdfs = tuple(Triangle.of(v, q) for v, q, _ in buyers) + (EqualRevenue(scale),)
    inst = Instance(cdfs, k=k)
    alloc = np.array([w for _, _, w in buyers] + [0.5]) * 0.9
    if alloc.sum() > k:
        alloc *= k / alloc.sum()
    reduced, _ = triangle_reduction(inst, alloc)
    assert ear_revenue(reduced, alloc) == pytest.approx(ear_revenue(inst, alloc), rel=1e-9, abs=1e-12)
    grid = np.linspace(0.0, 2.0 * max(c.v for c in reduced.cdfs) + 1.0, 301)
    assert all(dominates(a, b, grid, tol=1e-9) for a, b in zip(inst.cdfs, reduced.cdfs))
    assert np.all(ap_curve(reduced, grid) <= ap_curve(inst, grid) + 1e-9)


def test_ear_programs_on_feasible_triangles():
    check = check_ear_programs(Instance.iid(Triangle.of(1.0, 0.5), 2, 1))
    assert check.ap_max == pytest.approx(0.75)
    assert check.quantile_total == pytest.approx(1.0)
    assert check.buyer_revenue_max == pytest.approx(0.5)
    assert check.programs() == {"regular": True, "triangle": True, "single_item": True}


def test_ear_programs_on_infeasible_and_irregular_instances():
    check = check_ear_programs(Instance((Triangle.of(3.0, 0.5),), k=1))
    assert not any(check.programs().values())
    assert not check.constraints()["vq<=1"]

    # 非三角实例不属于三角规划
    mixed = check_ear_programs(Instance((Triangle.of(1.0, 0.5), PointMass(0.5)), k=2))
    assert mixed.programs()["regular"] and not mixed.programs()["triangle"]

    xs = np.linspace(1.001, 50.0, 500)
    irregular = Instance.iid(Tabulated(tuple(xs), tuple(np.sqrt(1.0 - 1.0 / xs))), 2, 1)
    check = check_ear_programs(irregular, [0.1, 0.1])
    assert not check.regular
    assert not any(check.programs().values())


def test_ear_programs_single_item_relaxes_capacity():
    # k=2 时单件 AP 只看最高出价
    inst = Instance.iid(Triangle.of(1.0, 0.5), 3, 2)
    check = check_ear_programs(inst)
    assert check.single_item_ap_max <= check.ap_max
    assert check.programs()["single_item"]
    assert not check.programs()["regular"]


@given(st.lists(st.tuples(st.floats(0.1, 3.0), st.floats(0.05, 0.95)), min_size=1, max_size=5), st.integers(1, 3))
@settings(max_examples=40, deadline=None)
def test_ear_program_constraints_are_nested(buyers, k):
    inst = Instance(tuple(Triangle.of(v, q) for v, q in buyers), k=k)
    check = check_ear_programs(inst)
    assert check.single_item_ap_max <= check.ap_max + 1e-12
    assert check.buyer_revenue_max <= check.ap_max + 1e-12
    programs = check.programs()
    if programs["regular"]:
        assert programs["triangle"] and programs["single_item"]


def test_ear_optimal_on_tabulated_triangle_clone():
    xs = np.linspace(0.01, 2.0, 200)
    inst = Instance((Tabulated.from_cdf(Triangle.of(2.0, 0.5), xs),), k=1)
    alloc, rev = ear_optimal(inst)
    assert alloc.qprime[0] == pytest.approx(0.5, abs=1e-3)
    assert rev == pytest.approx(1.0, rel=1e-3)
