"""
三种解析收益泛函：匿名定价 AP、匿名保留价 AR、事前松弛 EAR。

    AP(p)  = p · Σ_{i≤k} (1 - D_i(p))            = p · E[min(k, #{b_j ≥ p})]
    AR(r)  = AP(r) + k · ∫_r^∞ (1 - D_{k+1}(x)) dx
    EAR(q') = Σ_j F_j⁻¹(1 - q'_j) · q'_j,  Σ q'_j ≤ k

另含可行性约束 AP ≤ 1、松弛约束检查与三角实例的 A/B/C 分组诊断。
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from .constants import DEFAULT_QUAD_TOL, FEASIBILITY_TOL
from .distributions import (
    ArrayLike,
    Cdf,
    Instance,
    Triangle,
    TriangleParams,
    is_regular,
    triangles_of,
)
from .errors import (
    CapacityViolationError,
    DegenerateDensityError,
    InvalidDistributionError,
    IrregularInstanceError,
    KTooSmallError,
    ToleranceNotAchievedError,
    UnboundedRevenueError,
    UnboundedSupportError,
)
from .order_stats import grouped_pmf, order_stat_cdfs

logger = logging.getLogger(__name__)

# EAR 一般正则实例的分位数离散点数
EAR_QUANTILE_POINTS = 10_000

_GL_LOW = np.polynomial.legendre.leggauss(5)
_GL_HIGH = np.polynomial.legendre.leggauss(10)


class FeasibilityResult(NamedTuple):
    ok: bool
    worst_p: float
    worst_rev: float


@dataclass(frozen=True)
class Allocation:
    """事前分配：每个买家的成交概率 q'_j。"""

    qprime: Tuple[float, ...]

    def __post_init__(self):
        values = tuple(float(v) for v in self.qprime)
        if any(not (0.0 <= v <= 1.0) for v in values):
            raise InvalidDistributionError("分配概率必须在 [0,1] 内")
        object.__setattr__(self, "qprime", values)

    @property
    def total(self) -> float:
        return math.fsum(self.qprime)


@dataclass
class GroupSummary:
    """A/B/C 三组的 EAR 贡献与各 A_t 的规模。"""

    k: int
    m: int
    sum_a: float = 0.0
    sum_b: float = 0.0
    sum_c: float = 0.0
    a_sizes: Dict[int, int] = field(default_factory=dict)

    def bounds(self) -> Dict[str, bool]:
        slack = 1e-9
        harmonic = math.fsum(1.0 / t for t in range(1, self.m))
        return {
            "sum_c<=3": self.sum_c <= 3.0 + slack,
            "sum_b<=8": self.sum_b <= 8.0 + slack,
            "a_t<=8t": all(size <= 8 * t for t, size in self.a_sizes.items()),
            "sum_a<=16+8H": self.sum_a <= 16.0 + 8.0 * harmonic + slack,
        }

    def bounds_hold(self) -> bool:
        return all(self.bounds().values())


@dataclass
class ProgramCheck:
    """
    EAR/AP 规划的约束取值：
      regular      正则实例 + 分配：AP(p) ≤ 1 ∀p，Σq' ≤ k
      triangle     全三角实例：再加 v_j·q_j ≤ 1
      single_item  只要求单件 AP：p·(1 - D_1(p)) ≤ 1 ∀p，Σq' ≤ k
    """

    k: int
    tol: float
    regular: bool
    all_triangles: bool
    ap_max: float
    single_item_ap_max: float
    quantile_total: float
    buyer_revenue_max: float

    def constraints(self) -> Dict[str, bool]:
        return {
            "ap<=1": self.ap_max <= 1.0 + self.tol,
            "single_item_ap<=1": self.single_item_ap_max <= 1.0 + self.tol,
            "sum_q<=k": self.quantile_total <= self.k + 1e-9,
            "vq<=1": self.buyer_revenue_max <= 1.0 + self.tol,
        }

    def programs(self) -> Dict[str, bool]:
        c = self.constraints()
        regular = self.regular and c["ap<=1"] and c["sum_q<=k"]
        return {
            "regular": regular,
            "triangle": regular and self.all_triangles and c["vq<=1"],
            "single_item": self.regular and c["single_item_ap<=1"] and c["sum_q<=k"],
        }

    def to_dict(self) -> Dict[str, Any]:
        return {
            "ap_max": self.ap_max,
            "single_item_ap_max": self.single_item_ap_max,
            "quantile_total": self.quantile_total,
            "buyer_revenue_max": self.buyer_revenue_max,
            "constraints": self.constraints(),
            "programs": self.programs(),
        }


# ---------- AP ----------


def ap_curve(inst: Instance, prices: ArrayLike) -> np.ndarray:
    """一次性计算多个价格上的 AP(p)。"""
    ps = np.atleast_1d(np.asarray(prices, dtype=float))
    pmf = grouped_pmf(inst, ps, cap=inst.k)
    sold = np.minimum(np.arange(pmf.shape[0]), inst.k)
    return ps * (sold @ pmf)


def ap_revenue(inst: Instance, p: float) -> float:
    if p < 0:
        raise InvalidDistributionError("价格必须非负", {"p": p})
    return float(ap_curve(inst, [p])[0])


def candidate_prices(inst: Instance, grid: Optional[ArrayLike] = None) -> np.ndarray:
    """用户网格 ∪ 各买家垄断价格 ∪ 分布跳跃点（含表格节点），只保留正的有限值。"""
    parts: List[np.ndarray] = []
    if grid is not None:
        parts.append(np.atleast_1d(np.asarray(grid, dtype=float)))
    for cdf in inst.cdfs:
        try:
            v, _ = cdf.monopoly_point()
            parts.append(np.array([v]))
        except UnboundedRevenueError:
            parts.append(np.array([cdf.support_min]))
        parts.append(cdf.breakpoints())
    values = np.concatenate(parts) if parts else np.empty(0)
    values = values[np.isfinite(values) & (values > 0.0)]
    return np.unique(values)


def _first_max(values: np.ndarray, slack: float) -> int:
    best = float(values.max())
    return int(np.argmax(values >= best - slack))


def ap_optimal(inst: Instance, price_grid: Optional[ArrayLike] = None) -> Tuple[float, float]:
    """在候选价格集合上最大化 AP，并列时取最小价格。"""
    cands = candidate_prices(inst, price_grid)
    if cands.size == 0:
        return 0.0, 0.0
    revs = ap_curve(inst, cands)
    i = _first_max(revs, 1e-12 * max(1.0, float(revs.max())))
    return float(cands[i]), float(revs[i])


# ---------- AR ----------


def panel_integrals(func, edges: np.ndarray, tol: float, max_rounds: int = 40) -> Tuple[np.ndarray, float]:
    """
    自适应 Gauss-Legendre：对 edges 划分的每个区间分别积分。
    5 点与 10 点结果之差作为误差估计，超出（按宽度分摊的）容差的子区间对半细分。
    返回每个原始区间的积分值与总误差估计。
    """
    span = float(edges[-1] - edges[0])
    owner = np.arange(edges.size - 1)
    lo, hi = edges[:-1].astype(float), edges[1:].astype(float)
    keep = hi > lo
    owner, lo, hi = owner[keep], lo[keep], hi[keep]
    result = np.zeros(edges.size - 1)
    err_total = 0.0
    for _ in range(max_rounds):
        if owner.size == 0:
            return result, err_total
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        estimates = []
        for nodes, weights in (_GL_LOW, _GL_HIGH):
            xs = mid[:, None] + half[:, None] * nodes[None, :]
            fx = np.asarray(func(xs.ravel()), dtype=float).reshape(xs.shape)
            estimates.append(half * (fx @ weights))
        coarse, fine = estimates
        err = np.abs(fine - coarse)
        budget = np.maximum(tol * (hi - lo) / span, 4.0 * np.finfo(float).eps * np.abs(fine))
        done = err <= budget
        np.add.at(result, owner[done], fine[done])
        err_total += float(err[done].sum())
        owner, lo, hi, mid = owner[~done], lo[~done], hi[~done], mid[~done]
        owner = np.concatenate([owner, owner])
        lo, hi = np.concatenate([lo, mid]), np.concatenate([mid, hi])
    raise ToleranceNotAchievedError(
        f"AR 尾积分在 {max_rounds} 轮细分后仍未达到容差 {tol:g}",
        {"tol": tol, "open_panels": int(owner.size)},
    )


def _exceed_k1(inst: Instance):
    """x ↦ 1 - D_{k+1}(x)。"""
    upto = inst.k + 1

    def g(xs: np.ndarray) -> np.ndarray:
        if upto > inst.n:
            # 买家不足 k+1 个时 D_{k+1} ≡ 1
            return np.zeros_like(xs)
        return 1.0 - order_stat_cdfs(inst, xs, upto)[-1]

    return g


def _horizon(inst: Instance, cutoff: Optional[float]) -> float:
    support = inst.support_max
    if cutoff is None:
        if math.isinf(support):
            raise UnboundedSupportError(
                "存在无界支撑的分布，AR 尾积分需要显式 cutoff", {"support_max": support}
            )
        return support
    if cutoff < support:
        tail = float(_exceed_k1(inst)(np.array([cutoff]))[0])
        logger.info("AR 尾积分截断于 x=%.6g，此处 1 - D_{k+1} = %.3e", cutoff, tail)
    return float(cutoff)


def _tail_integrals(inst: Instance, points: np.ndarray, horizon: float, quad_tol: float) -> np.ndarray:
    """对每个点 r 计算 ∫_r^horizon (1 - D_{k+1})。"""
    inside = points[points < horizon]
    out = np.zeros(points.size)
    if inside.size == 0:
        return out
    bps = inst.breakpoints()
    edges = np.unique(np.concatenate([inside, bps[(bps > inside.min()) & (bps < horizon)], [horizon]]))
    pieces, err = panel_integrals(_exceed_k1(inst), edges, quad_tol)
    logger.debug("AR 尾积分：%d 段，误差估计 %.2e", pieces.size, err)
    # 自右向左累加得到每个左端点到 horizon 的积分
    tails = np.concatenate([np.cumsum(pieces[::-1])[::-1], [0.0]])
    idx = np.searchsorted(edges, points)
    mask = points < horizon
    out[mask] = tails[idx[mask]]
    return out


def ar_revenue(
    inst: Instance,
    r: float,
    cutoff: Optional[float] = None,
    quad_tol: float = DEFAULT_QUAD_TOL,
) -> float:
    """第 k+1 价拍卖加匿名保留价 r 的期望收益。"""
    if r < 0:
        raise InvalidDistributionError("保留价必须非负", {"r": r})
    horizon = _horizon(inst, cutoff)
    first = ap_revenue(inst, r)
    tail = _tail_integrals(inst, np.array([float(r)]), horizon, quad_tol)[0]
    return first + inst.k * float(tail)


def ar_optimal(
    inst: Instance,
    reserve_grid: Optional[ArrayLike] = None,
    cutoff: Optional[float] = None,
    quad_tol: float = DEFAULT_QUAD_TOL,
) -> Tuple[float, float]:
    """在 {0} ∪ 候选保留价上最大化 AR，并列时取最小保留价。"""
    horizon = _horizon(inst, cutoff)
    cands = np.unique(np.concatenate([[0.0], candidate_prices(inst, reserve_grid)]))
    revs = ap_curve(inst, cands) + inst.k * _tail_integrals(inst, cands, horizon, quad_tol)
    slack = 10.0 * inst.k * quad_tol + 1e-12 * max(1.0, float(revs.max()))
    i = _first_max(revs, slack)
    return float(cands[i]), float(revs[i])


# ---------- EAR ----------


def _ensure_regular(inst: Instance) -> None:
    for cdf in inst.cdfs:
        if cdf.is_regular_kind:
            continue
        grid = getattr(cdf, "knots", None)
        try:
            regular = grid is not None and is_regular(cdf, grid)
        except DegenerateDensityError as e:
            raise IrregularInstanceError(f"无法确认分布正则性：{e}", {"kind": cdf.kind}) from e
        if not regular:
            raise IrregularInstanceError("EAR 公式只适用于正则实例", {"kind": cdf.kind})


def _revenue_terms(cdf: Cdf, qprime: np.ndarray) -> np.ndarray:
    prices = np.asarray(cdf.inverse(1.0 - qprime), dtype=float)
    with np.errstate(invalid="ignore"):
        terms = prices * qprime
    return np.where(qprime > 0.0, terms, 0.0)


def _as_allocation(inst: Instance, alloc: Union[Allocation, Sequence[float]], capacity: bool = True) -> Allocation:
    allocation = alloc if isinstance(alloc, Allocation) else Allocation(tuple(alloc))
    if len(allocation.qprime) != inst.n:
        raise InvalidDistributionError(
            "分配长度必须等于买家数", {"len": len(allocation.qprime), "n": inst.n}
        )
    if capacity and allocation.total > inst.k + 1e-9:
        raise CapacityViolationError(
            f"分配总量 {allocation.total:.6g} 超过 k={inst.k}",
            {"total": allocation.total, "k": inst.k},
        )
    return allocation


def _buyer_terms(inst: Instance, allocation: Allocation) -> np.ndarray:
    """逐买家的 F_j⁻¹(1 - q'_j)·q'_j。"""
    qprime = np.asarray(allocation.qprime)
    terms, offset = [], 0
    for cdf, count in inst.groups():
        terms.append(np.atleast_1d(_revenue_terms(cdf, qprime[offset : offset + count])))
        offset += count
    return np.concatenate(terms)


def ear_revenue(inst: Instance, alloc: Union[Allocation, Sequence[float]]) -> float:
    """Σ_j F_j⁻¹(1 - q'_j)·q'_j，要求实例正则且 Σ q'_j ≤ k。"""
    _ensure_regular(inst)
    allocation = _as_allocation(inst, alloc)
    return math.fsum(_buyer_terms(inst, allocation).tolist())


def triangle_reduction(
    inst: Instance, alloc: Union[Allocation, Sequence[float]]
) -> Tuple[Instance, Allocation]:
    """
    正则实例 + 事前分配 q' ↦ 三角实例 {Tri(F_j⁻¹(1 - q'_j), q'_j)}，分配不变。

    三角分布的收益-分位数曲线位于原曲线之下，因此每个买家被原分布随机占优，
    任意价格上的 AP 不增；而 EAR 逐项相等。q'_j = 0 的买家变成 0 处的点质量。
    """
    _ensure_regular(inst)
    allocation = _as_allocation(inst, alloc)
    qprime = np.asarray(allocation.qprime)
    cdfs: List[Cdf] = []
    offset = 0
    for cdf, count in inst.groups():
        block = qprime[offset : offset + count]
        offset += count
        prices = np.atleast_1d(np.asarray(cdf.inverse(1.0 - block), dtype=float))
        for v, q in zip(prices.tolist(), block.tolist()):
            cdfs.append(Triangle.of(v if q > 0.0 else 0.0, q))
    logger.debug("三角归约：%d 个买家，Σq' = %.6g", len(cdfs), allocation.total)
    return Instance(tuple(cdfs), inst.k), allocation


def _greedy_triangles(triangles: List[TriangleParams], k: int) -> np.ndarray:
    order = sorted(range(len(triangles)), key=lambda j: -triangles[j].v)
    alloc = np.zeros(len(triangles))
    remaining = float(k)
    for j in order:
        if remaining <= 0.0:
            break
        take = min(triangles[j].q, remaining)
        alloc[j] = take
        remaining -= take
    return alloc


def _water_fill(inst: Instance, points: int) -> np.ndarray:
    """
    把每条收益-分位数曲线 R_j(u) = u·F_j⁻¹(1-u) 离散成 points 段，
    按边际收益从高到低装入容量 k；阈值斜率即共享的拉格朗日乘子。
    同组买家对称地分摊同一段。
    """
    u = np.linspace(0.0, 1.0, points + 1)
    width = 1.0 / points
    segments = []  # (slope, group, seg_index, capacity)
    for g, (cdf, count) in enumerate(inst.groups()):
        curve = _revenue_terms(cdf, u)
        curve[0] = 0.0
        slopes = np.diff(curve) / width
        for idx in np.nonzero(slopes > 0.0)[0]:
            segments.append((-float(slopes[idx]), g, int(idx), count * width))
    segments.sort()
    taken = np.zeros(len(inst.cdfs))
    remaining = float(inst.k)
    for neg_slope, g, _, capacity in segments:
        if remaining <= 0.0:
            break
        amount = min(capacity, remaining)
        taken[g] += amount
        remaining -= amount
    logger.debug("EAR 注水结束：剩余容量 %.3g", remaining)
    alloc = []
    for g, (_, count) in enumerate(inst.groups()):
        alloc.extend([min(1.0, taken[g] / count)] * count)
    return np.asarray(alloc)


def ear_optimal(inst: Instance, quantile_points: int = EAR_QUANTILE_POINTS) -> Tuple[Allocation, float]:
    """
    EAR 最优分配。全三角实例按 v 降序贪心装满各自的垄断分位数（精确）；
    一般正则实例在离散分位数网格上注水（近似）。
    """
    _ensure_regular(inst)
    if all(isinstance(c, Triangle) for c in inst.cdfs):
        qprime = _greedy_triangles(triangles_of(inst), inst.k)
    else:
        qprime = _water_fill(inst, quantile_points)
    # 舍入可能让总量略超 k
    total = qprime.sum()
    if total > inst.k:
        qprime *= inst.k / total
    alloc = Allocation(tuple(np.clip(qprime, 0.0, 1.0)))
    return alloc, ear_revenue(inst, alloc)


# ---------- 约束与诊断 ----------


def check_feasibility(
    inst: Instance, price_grid: Optional[ArrayLike] = None, tol: float = FEASIBILITY_TOL
) -> FeasibilityResult:
    """在 ap_optimal 的候选价格集合上验证 AP(p) ≤ 1 + tol。"""
    cands = candidate_prices(inst, price_grid)
    if cands.size == 0:
        return FeasibilityResult(True, 0.0, 0.0)
    revs = ap_curve(inst, cands)
    i = int(np.argmax(revs))
    return FeasibilityResult(bool(revs[i] <= 1.0 + tol), float(cands[i]), float(revs[i]))


def relaxed_constraint_check(inst: Instance, grid_points: int = 2001) -> bool:
    """Σ_j (1 - F_j(p)) ≤ 4/p 对 p ∈ [1/m, 1/2]（m = ⌊k/2⌋）成立。"""
    if inst.k < 4:
        raise KTooSmallError("松弛约束要求 k ≥ 4", {"k": inst.k})
    m = inst.k // 2
    ps = np.linspace(1.0 / m, 0.5, grid_points)
    lhs = np.zeros_like(ps)
    for cdf, count in inst.groups():
        lhs += count * np.asarray(cdf.exceedance(ps), dtype=float)
    return bool(np.all(lhs <= 4.0 / ps + 1e-9))


def _monopoly_quantile(cdf: Cdf) -> float:
    try:
        return cdf.monopoly_point()[1]
    except UnboundedRevenueError:
        return 0.0


def check_ear_programs(
    inst: Instance,
    alloc: Optional[Union[Allocation, Sequence[float]]] = None,
    price_grid: Optional[ArrayLike] = None,
    tol: float = FEASIBILITY_TOL,
) -> ProgramCheck:
    """
    实例（及分配）在三个 EAR/AP 规划下的约束取值。
    alloc 缺省时取各买家的垄断分位数；此时 v_j·q'_j 即各买家的垄断收益。
    无垄断点的分布（等收益）缺省分配 0。
    """
    if alloc is None:
        alloc = [_monopoly_quantile(cdf) for cdf in inst.expanded()]
    allocation = _as_allocation(inst, alloc, capacity=False)
    try:
        _ensure_regular(inst)
        regular = True
    except IrregularInstanceError:
        regular = False

    cands = candidate_prices(inst, price_grid)
    if cands.size:
        ap_k = float(ap_curve(inst, cands).max())
        d1 = order_stat_cdfs(inst, cands, 1)[0]
        ap_single = float((cands * (1.0 - d1)).max())
    else:
        ap_k = ap_single = 0.0
    return ProgramCheck(
        k=inst.k,
        tol=tol,
        regular=regular,
        all_triangles=all(isinstance(c, Triangle) for c in inst.cdfs),
        ap_max=ap_k,
        single_item_ap_max=ap_single,
        quantile_total=allocation.total,
        buyer_revenue_max=float(_buyer_terms(inst, allocation).max()),
    )


def group_partition(triangles: Sequence[TriangleParams], k: int) -> GroupSummary:
    """
    A: v ≥ 1/m 且 vq/(1-q) ≥ 1/m；B: v ≥ 1/m 且 vq/(1-q) < 1/m；C: v < 1/m。
    A_t 用 1/t 代替 1/m，t ∈ [2..m]。
    """
    if k < 4:
        raise KTooSmallError("分组诊断要求 k ≥ 4", {"k": k})
    m = k // 2
    summary = GroupSummary(k=k, m=m, a_sizes={t: 0 for t in range(2, m + 1)})
    for tri in triangles:
        v, q = tri.v, tri.q
        ratio = math.inf if q >= 1.0 else v * q / (1.0 - q)
        if v < 1.0 / m:
            summary.sum_c += v * q
        elif ratio >= 1.0 / m:
            summary.sum_a += v * q
        else:
            summary.sum_b += v * q
        for t in range(2, m + 1):
            if v >= 1.0 / t and ratio >= 1.0 / t:
                summary.a_sizes[t] += 1
    return summary


def revenue_summary(
    inst: Instance,
    grid: Optional[ArrayLike] = None,
    cutoff: Optional[float] = None,
    quad_tol: float = DEFAULT_QUAD_TOL,
) -> Dict[str, Any]:
    """实例上 AP/AR/EAR 的最优值、最优参数与两两比值。"""
    p_star, ap = ap_optimal(inst, grid)
    r_star, ar = ar_optimal(inst, grid, cutoff, quad_tol)
    summary: Dict[str, Any] = {
        "ap": {"value": ap, "argopt": p_star},
        "ar": {"value": ar, "argopt": r_star},
    }
    try:
        alloc, ear = ear_optimal(inst)
        summary["ear"] = {"value": ear, "argopt": list(alloc.qprime)}
        summary["programs"] = check_ear_programs(inst, alloc, grid).programs()
    except IrregularInstanceError as e:
        summary["ear"] = {"value": None, "error": e.to_dict()}
        ear = None
    summary["ratios"] = {
        "ar/ap": ar / ap if ap > 0 else None,
        "ear/ap": ear / ap if ap > 0 and ear is not None else None,
    }
    return summary
