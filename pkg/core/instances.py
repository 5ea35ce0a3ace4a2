"""
极端实例的构造与校验。

- WorstCaseIID：同分布最坏实例 F*_(n)，由 AP(x) ≡ 1（x > 1/k）隐式确定；
- TriangleLowerBound：非对称正则（三角分布）下的下界实例；
- LaminarPairMatroid：AR 与 AP 之间 Ω(log k) 差距的层状拟阵实例。
"""

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, Iterable, List, Optional, Tuple

import numpy as np
from scipy import integrate, optimize, stats

from .constants import DEFAULT_QUAD_TOL
from .distributions import Instance, Tabulated, Triangle
from .errors import (
    BracketFailureError,
    GridNotAboveThresholdError,
    KOutOfRangeError,
    RankExceedsPairsError,
    ToleranceNotAchievedError,
)
from .order_stats import fold_bernoulli, grouped_pmf
from .revenue import ap_curve, ap_optimal, panel_integrals

logger = logging.getLogger(__name__)

WORST_CASE_GRID_POINTS = 2048
WORST_CASE_TAIL_EPS = 1e-6
WORST_CASE_FIRST_OFFSET = 1e-6
BISECTION_STEPS = 64

# 下界实例的默认括号 a = 1/k + 1/N, b = 1/k + N
LOWER_BOUND_BRACKET_N = 50.0
LOWER_BOUND_N_CAP = 4096


# ---------- 同分布最坏实例 ----------


def _expected_sold(k: int, n: int, q: np.ndarray) -> np.ndarray:
    """E[min(k, Bin(n, 1-q))] = Σ_{i≤k} Pr[Bin(n, 1-q) ≥ i]。"""
    i = np.arange(1, k + 1)[:, None]
    return np.sum(stats.binom.sf(i - 1, n, 1.0 - q[None, :]), axis=0)


def solve_worst_case_q(k: int, n: int, xs) -> np.ndarray:
    """
    对每个 x > 1/k 求 q = F*(x)，使 x·E[min(k, Bin(n, 1-q))] = 1。
    左端关于 q 严格递减，所有价格点一起做向量化二分。
    """
    points = np.atleast_1d(np.asarray(xs, dtype=float))
    if np.any(points <= 1.0 / k):
        raise GridNotAboveThresholdError(
            "网格必须严格大于 1/k", {"k": k, "min_x": float(points.min())}
        )
    lo = np.zeros_like(points)
    hi = np.ones_like(points)
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        too_much = points * _expected_sold(k, n, mid) > 1.0
        lo = np.where(too_much, mid, lo)
        hi = np.where(too_much, hi, mid)
    return 0.5 * (lo + hi)


@dataclass
class WorstCaseIID:
    k: int
    n: int
    grid: np.ndarray
    fvals: np.ndarray

    def order_stat_cdf(self, i: int) -> np.ndarray:
        """网格上的 D_i(x) = Pr[Bin(n, 1-F*) ≤ i-1]。"""
        return stats.binom.cdf(i - 1, self.n, 1.0 - self.fvals)

    def ap_on_grid(self) -> np.ndarray:
        return self.grid * _expected_sold(self.k, self.n, self.fvals)

    def to_instance(self) -> Instance:
        """
        n 个相同 Tabulated 分布组成的实例。节点处的超出概率与 F* 完全一致，
        节点之间向下取整，因此 AP ≤ 1 处处成立，且在节点处取等。
        """
        xs = np.concatenate([[1.0 / self.k], self.grid])
        ps = np.concatenate([[0.0], self.fvals])
        return Instance.iid(Tabulated(tuple(xs), tuple(np.maximum.accumulate(ps))), self.n, self.k)

    def to_dict(self) -> Dict[str, Any]:
        return {"k": self.k, "n": self.n, "grid": self.grid.tolist(), "fvals": self.fvals.tolist()}


def _find_x_max(k: int, n: int, tail_eps: float) -> float:
    x = 1.0 / k + 1.0
    while 1.0 - solve_worst_case_q(k, n, [x])[0] >= tail_eps:
        x = 1.0 / k + 2.0 * (x - 1.0 / k)
    return x


def build_worst_case_iid(
    k: int,
    n: int,
    grid=None,
    grid_points: int = WORST_CASE_GRID_POINTS,
    tail_eps: float = WORST_CASE_TAIL_EPS,
    first_offset: float = WORST_CASE_FIRST_OFFSET,
) -> WorstCaseIID:
    """
    在网格上求解 F*_(n)。默认网格为 1/k + geomspace(first_offset, X_max - 1/k)，
    靠近 1/k 处最密；X_max 使 1 - F*(X_max) < tail_eps。
    """
    if k < 1 or n < k:
        raise KOutOfRangeError("最坏实例要求 n ≥ k ≥ 1", {"k": k, "n": n})
    if grid is None:
        x_max = _find_x_max(k, n, tail_eps)
        offsets = np.geomspace(first_offset, x_max - 1.0 / k, grid_points)
        xs = 1.0 / k + offsets
    else:
        xs = np.unique(np.asarray(grid, dtype=float))
    fvals = np.maximum.accumulate(solve_worst_case_q(k, n, xs))
    logger.debug("F*_(n) 已求解：k=%d n=%d, %d 个网格点, X_max=%.4g", k, n, xs.size, xs[-1])
    return WorstCaseIID(k=k, n=n, grid=xs, fvals=fvals)


def ar_of_worst_case(w: WorstCaseIID, quad_tol: float = DEFAULT_QUAD_TOL, strict: bool = False) -> float:
    """
    AR(F*_(n)) = 1 + k·∫_{1/k}^∞ (1 - D_{k+1}(x)) dx，网格上梯形求积。
    X_max 之后 1 - D_{k+1} ≈ C(n,k+1)/(n·x)^{k+1}，尾部积分解析补上。
    梯形与 Simpson 结果相差超过 max(quad_tol, 1e-4) 时告警；strict 时抛出 ToleranceNotAchievedError。
    """
    k, n = w.k, w.n
    xs = np.concatenate([[1.0 / k], w.grid])
    qs = np.concatenate([[0.0], w.fvals])
    tail_prob = stats.binom.sf(k, n, 1.0 - qs)
    body = integrate.trapezoid(tail_prob, xs)
    x_max = float(xs[-1])
    tail = 0.0
    if n > k:
        tail = math.exp(
            math.lgamma(n + 1) - math.lgamma(k + 2) - math.lgamma(n - k)
            - (k + 1) * math.log(n) - k * math.log(x_max)
        ) / k
    check = integrate.simpson(tail_prob, x=xs)
    gap = abs(check - body) * k
    if gap > max(quad_tol, 1e-4):
        if strict:
            raise ToleranceNotAchievedError(
                f"F*_(n) 网格过粗：梯形与 Simpson 求积相差 {gap:.2e}",
                {"k": k, "n": n, "grid_points": int(w.grid.size), "difference": gap},
            )
        logger.warning("梯形与 Simpson 求积相差 %.2e (k=%d, n=%d)，网格可能过粗", gap, k, n)
    return 1.0 + k * (body + tail)


def worst_case_sequence(
    k: int, ns: Iterable[int], quad_tol: float = DEFAULT_QUAD_TOL, **grid_kw
) -> List[Tuple[int, float]]:
    """对一组递增的 n 计算 AR(F*_(n))。"""
    out = []
    for n in ns:
        ar = ar_of_worst_case(build_worst_case_iid(k, n, **grid_kw), quad_tol)
        logger.info("worst-case k=%d n=%d AR=%.6f", k, n, ar)
        out.append((n, ar))
    return out


# ---------- 三角下界实例 ----------


def _triangle_exceedance(v: float, q: float, prices: np.ndarray) -> np.ndarray:
    """Tri(v, q) 在 p 处的 Pr[b ≥ p]：p ≤ v 时为 vq/((1-q)p + vq)，否则为 0。"""
    vq = v * q
    if vq == 0.0:
        return np.zeros_like(prices)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = vq / ((1.0 - q) * prices + vq)
    return np.where(prices <= v, out, 0.0)


@dataclass
class TriangleLowerBound:
    k: int
    n: int
    a: float
    b: float
    groups: List[Tuple[float, float, int]] = field(default_factory=list)

    @property
    def delta(self) -> float:
        return (self.b - self.a) / self.n

    def to_instance(self) -> Instance:
        cdfs = tuple(Triangle.of(v, q) for v, q, _ in self.groups)
        counts = tuple(m for _, _, m in self.groups)
        return Instance(cdfs, self.k, counts)

    def ap_on_grid(self, grid=None, points: int = 2000) -> np.ndarray:
        prices = np.linspace(self.a, self.b, points) if grid is None else np.asarray(grid, dtype=float)
        return ap_curve(self.to_instance(), prices)

    def max_dip(self, grid=None, points: int = 2000) -> float:
        """1 - min_{p∈[a,b]} AP(p)：AP 在相邻组价格之间的下凹深度。"""
        return float(1.0 - self.ap_on_grid(grid, points).min())

    def ar_with_error(self, r: Optional[float] = None, quad_tol: float = DEFAULT_QUAD_TOL) -> Tuple[float, float]:
        """
        AR(r) = AP(r) + k·∫_r^b (1 - D_{k+1}(x)) dx 及其求积误差估计（已乘 k）。
        被积函数在组价格之间光滑、在组价格处跳跃，以组价格为界做自适应求积。
        """
        reserve = self.a if r is None else float(r)
        inst = self.to_instance()
        prices = np.array([v for v, _, _ in self.groups])
        edges = np.unique(np.concatenate([[reserve], prices[prices > reserve]]))
        ap = float(ap_curve(inst, [reserve])[0])
        if edges.size < 2 or inst.n <= self.k:
            return ap, 0.0

        def exceed(xs: np.ndarray) -> np.ndarray:
            return grouped_pmf(inst, xs, cap=self.k + 1)[-1]

        pieces, err = panel_integrals(exceed, edges, quad_tol)
        return ap + self.k * math.fsum(pieces.tolist()), self.k * err

    def ar_at_reserve(self, r: Optional[float] = None, quad_tol: float = DEFAULT_QUAD_TOL) -> float:
        return self.ar_with_error(r, quad_tol)[0]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "k": self.k,
            "n": self.n,
            "a": self.a,
            "b": self.b,
            "groups": [{"v": v, "q": q, "multiplicity": m} for v, q, m in self.groups],
        }


def default_bracket(k: int, bracket_n: float = LOWER_BOUND_BRACKET_N) -> Tuple[float, float]:
    return 1.0 / k + 1.0 / bracket_n, 1.0 / k + bracket_n


def build_triangle_lower_bound(k: int, n: int, a: float, b: float) -> TriangleLowerBound:
    """
    v_0 = b（n 个买家），v_j = b - jδ（各 k 个买家，j = 1..n），按价格从高到低逐组求 q_j，
    使 AP(v_j) = 1。running 保存“已求解的组”在每个组价格上的截断 PBD，
    每组求出后立即卷入所有更低的价格列。
    """
    if k < 1 or n < 1:
        raise KOutOfRangeError("下界实例要求 k ≥ 1 且 n ≥ 1", {"k": k, "n": n})
    if not (1.0 / k < a <= b):
        raise BracketFailureError("下界实例要求 1/k < a ≤ b", {"k": k, "a": a, "b": b})
    delta = (b - a) / n
    prices = b - delta * np.arange(n + 1)
    prices[-1] = a
    mults = [n] + [k] * n
    sold = np.minimum(np.arange(k + 1), k)

    running = np.zeros((k + 1, n + 1))
    running[0] = 1.0
    groups: List[Tuple[float, float, int]] = []
    for j, (v, mult) in enumerate(zip(prices, mults)):
        base = running[:, j].copy()

        def excess(q: float) -> float:
            pmf = base
            for _ in range(mult):
                pmf = fold_bernoulli(pmf, q, capped=True)
            return float(v * (sold @ pmf)) - 1.0

        if excess(0.0) >= 0.0:
            q = 0.0
        elif excess(1.0) < 0.0:
            raise BracketFailureError(
                f"第 {j} 组在 [0,1] 内无法使 AP(v_j) = 1", {"j": j, "v": float(v), "k": k}
            )
        else:
            q = float(optimize.brentq(excess, 0.0, 1.0, xtol=1e-15, rtol=4 * np.finfo(float).eps))
        groups.append((float(v), q, mult))

        if j < n:
            s = _triangle_exceedance(float(v), q, prices[j + 1:])
            tail = running[:, j + 1:]
            for _ in range(mult):
                tail = fold_bernoulli(tail, s, capped=True)
            running[:, j + 1:] = tail
    logger.debug("三角下界实例：k=%d n=%d a=%.4g b=%.4g", k, n, a, b)
    return TriangleLowerBound(k=k, n=n, a=float(a), b=float(b), groups=groups)


def grow_triangle_lower_bound(
    k: int,
    a: float,
    b: float,
    target: Optional[float] = None,
    n_start: int = 8,
    n_cap: int = LOWER_BOUND_N_CAP,
    min_improvement: Optional[float] = None,
) -> Tuple[TriangleLowerBound, List[Dict[str, float]]]:
    """
    n 逐次翻倍，直到 AR(a) ≥ target、单次提升 < min_improvement 或 n 达到上限。
    返回最后一个实例与每轮的 (n, ar, ar_err, max_ap, max_dip) 记录。
    """
    history: List[Dict[str, float]] = []
    n = max(1, n_start)
    prev = -math.inf
    while True:
        lb = build_triangle_lower_bound(k, n, a, b)
        ar, ar_err = lb.ar_with_error()
        ap = lb.ap_on_grid()
        history.append(
            {"n": n, "ar": ar, "ar_err": ar_err, "max_ap": float(ap.max()), "max_dip": float(1.0 - ap.min())}
        )
        logger.info("lower-bound k=%d n=%d AR(a)=%.6f", k, n, ar)
        if target is not None and ar >= target:
            break
        if min_improvement is not None and ar - prev < min_improvement:
            break
        if n * 2 > n_cap:
            break
        prev = ar
        n *= 2
    return lb, history


def random_feasible_triangles(rng: np.random.Generator, n: int, k: int, grid_points: int = 400) -> Instance:
    """
    随机三角实例：v 对数均匀、q 均匀，Σq 缩放到不超过 k，
    再整体缩放价格使最优 AP = 1（AP(c·v; c·p) = c·AP(v; p)）。
    """
    vs = np.exp(rng.uniform(math.log(0.05), math.log(20.0), size=n))
    qs = rng.uniform(0.0, 1.0, size=n)
    total = qs.sum()
    if total > k:
        qs *= k / total
    draft = Instance(tuple(Triangle.of(v, q) for v, q in zip(vs, qs)), k)
    grid = np.geomspace(vs.min() * 1e-3, vs.max(), grid_points)
    _, best = ap_optimal(draft, grid)
    scale = 1.0 / best
    return Instance(tuple(Triangle.of(v * scale, q) for v, q in zip(vs, qs)), k)


# ---------- 层状拟阵实例 ----------


Buyer = Tuple[int, int]  # (pair 编号 1..m, 0/1)


@dataclass(frozen=True)
class LaminarPairMatroid:
    """m 对买家；独立集：每对至多一人，总数至多 k。"""

    m: int
    k: int

    def __post_init__(self):
        if not 1 <= self.k <= self.m:
            raise RankExceedsPairsError("拟阵的秩必须满足 1 ≤ k ≤ m", {"k": self.k, "m": self.m})

    def buyers(self) -> List[Buyer]:
        return [(i, side) for i in range(1, self.m + 1) for side in (0, 1)]

    def is_independent(self, buyers: Iterable[Buyer]) -> bool:
        chosen = list(buyers)
        pairs = {pair for pair, _ in chosen}
        return len(pairs) == len(chosen) and len(chosen) <= self.k


@dataclass(frozen=True)
class MatroidInstance:
    m: int
    k: int

    @property
    def matroid(self) -> LaminarPairMatroid:
        return LaminarPairMatroid(self.m, self.k)

    def bid(self, pair: int) -> Fraction:
        return max(Fraction(1, pair), Fraction(1, self.k + 1))

    @property
    def bids(self) -> List[float]:
        return [float(self.bid(i)) for i in range(1, self.m + 1)]


@dataclass
class MatroidDemo:
    m: int
    k: int
    ap_best: float
    ap_price: float
    vcg_rev: float
    ratio: float
    harmonic: float

    def to_dict(self) -> Dict[str, Any]:
        return dict(self.__dict__)


def _vcg_payments(inst: MatroidInstance) -> List[Fraction]:
    """贪心求最大权基，每个赢家支付其门槛价：能替换它的最高出价落选者。"""
    matroid = inst.matroid
    ranked = sorted(matroid.buyers(), key=lambda b: (-inst.bid(b[0]), b[0], b[1]))
    winners: List[Buyer] = []
    for buyer in ranked:
        if matroid.is_independent(winners + [buyer]):
            winners.append(buyer)
    losers = [b for b in ranked if b not in set(winners)]
    payments = []
    for w in winners:
        rest = [b for b in winners if b != w]
        threshold = Fraction(0)
        for e in losers:
            if matroid.is_independent(rest + [e]):
                threshold = inst.bid(e[0])
                break
        payments.append(threshold)
    return payments


def matroid_demo(m: int, k: int) -> MatroidDemo:
    """层状拟阵实例上最优 AP 与 VCG 收益（= H_k）的比值。"""
    if k > m:
        raise RankExceedsPairsError("k 不能超过买家对数 m", {"k": k, "m": m})
    inst = MatroidInstance(m, k)
    best, best_price = Fraction(0), Fraction(0)
    for p in sorted({inst.bid(i) for i in range(1, m + 1)}):
        willing = sum(1 for i in range(1, m + 1) if inst.bid(i) >= p)
        rev = p * min(k, willing)
        if rev > best:
            best, best_price = rev, p
    vcg = sum(_vcg_payments(inst), Fraction(0))
    harmonic = sum((Fraction(1, i) for i in range(1, k + 1)), Fraction(0))
    return MatroidDemo(
        m=m,
        k=k,
        ap_best=float(best),
        ap_price=float(best_price),
        vcg_rev=float(vcg),
        ratio=float(vcg / best),
        harmonic=float(harmonic),
    )
