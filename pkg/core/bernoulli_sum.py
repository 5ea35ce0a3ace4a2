"""
伯努利和引理：把独立非同分布的伯努利和投影成同分布伯努利和，
保持 Pr[Σ ≤ s] 不变，并验证两者 CDF 的单次交叉性质。

失败概率 q_j = Pr[Y_j = 0]，成功概率为 1 - q_j。
"""

import logging
import math
from typing import Iterator, NamedTuple, Optional, Sequence, Union

import numpy as np
from scipy import optimize, stats

from .constants import MAX_PHI_APPLICATIONS
from .errors import InvalidDistributionError, MaxIterationsExceededError, NoRootInBracketError
from .order_stats import pbd_pmf

logger = logging.getLogger(__name__)

FailureVector = Union[Sequence[float], np.ndarray]

# 根落在区间外的容许误差
ROOT_SLACK = 1e-12


class CrossingResult(NamedTuple):
    ok: bool
    crossing: int
    violation: Optional[int] = None


def _as_failures(q: FailureVector) -> np.ndarray:
    arr = np.asarray(q, dtype=float).ravel()
    if arr.size == 0:
        raise InvalidDistributionError("失败概率向量不能为空")
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise InvalidDistributionError("失败概率必须在 [0,1] 内")
    return arr


def lower_cdf(q: FailureVector, t: int) -> float:
    """Pr[Y ≤ t]，Y 为成功概率 1 - q_j 的伯努利和。"""
    failures = _as_failures(q)
    if t < 0:
        return 0.0
    if t >= failures.size:
        return 1.0
    return float(np.sum(pbd_pmf(1.0 - failures)[: t + 1]))


def _coef(a: np.ndarray, i: int) -> float:
    return float(a[i]) if 0 <= i < a.size else 0.0


def average_pair(a: Sequence[float], q1: float, q2: float, s: int) -> float:
    """
    把一对失败概率 (q1, q2) 替换为相同的 q̄，使 Pr[Σ ≤ s] 不变。

    a 是其余 n-2 个变量的 Pmf（下标越界视为 0）。q̄ 满足
        A·q̄² + 2·a_{s-1}·q̄ = A·q1·q2 + a_{s-1}·(q1 + q2),  A = a_s - a_{s-1}
    A = 0 时取算术平均；否则取落在 [min, max] 内的那个根。
    """
    if q1 == q2:
        return float(q1)
    coeffs = np.asarray(a, dtype=float)
    lo, hi = min(q1, q2), max(q1, q2)
    prev = _coef(coeffs, s - 1)
    A = _coef(coeffs, s) - prev
    if A == 0.0:
        return 0.5 * (q1 + q2)

    b = 2.0 * prev
    c = -(A * q1 * q2 + prev * (q1 + q2))
    disc = b * b - 4.0 * A * c
    if disc < 0.0:
        # 只允许舍入级的负判别式
        if disc < -1e-12 * max(b * b, abs(4.0 * A * c), 1e-300):
            raise NoRootInBracketError(
                "平均化二次方程无实根",
                {"A": A, "b": b, "c": c, "disc": disc, "q1": q1, "q2": q2, "s": s},
            )
        disc = 0.0
    # 稳定求根：先算与 b 同号的 t，避免相减抵消
    t = -0.5 * (b + math.copysign(math.sqrt(disc), b))
    roots = [t / A]
    if t != 0.0:
        roots.append(c / t)
    for root in roots:
        if lo - ROOT_SLACK <= root <= hi + ROOT_SLACK:
            return min(max(root, lo), hi)
    raise NoRootInBracketError(
        "平均化二次方程在 [min(q1,q2), max(q1,q2)] 内无根",
        {"roots": roots, "q1": q1, "q2": q2, "s": s, "A": A, "a_prev": prev},
    )


def iter_projection_rounds(
    q: FailureVector, s: int, max_applications: int = MAX_PHI_APPLICATIONS
) -> Iterator[np.ndarray]:
    """
    无限产出每一轮 Φ = Φ_{1,n} ∘ … ∘ Φ_{1,2} 之后的失败概率向量（已升序）。
    每一步 Φ_{1,j} 用其余变量的 Pmf 调用 average_pair，结果写入 1 号与 j 号位置。
    """
    current = np.sort(_as_failures(q))
    n = current.size
    applications = 0
    while True:
        current.sort()
        for j in range(1, n):
            others = np.delete(current, [0, j])
            rest = pbd_pmf(1.0 - others) if others.size else np.ones(1)
            qbar = average_pair(rest, current[0], current[j], s)
            current[0] = current[j] = qbar
            applications += 1
            if applications > max_applications:
                raise MaxIterationsExceededError(
                    f"Φ 迭代超过上限 {max_applications} 次仍未收敛",
                    {"spread": float(current.max() - current.min()), "n": n, "s": s},
                )
        yield np.sort(current)


def iid_projection_iterative(
    q: FailureVector, s: int, tol: float = 1e-10, max_applications: int = MAX_PHI_APPLICATIONS
) -> float:
    """反复排序并应用 Φ，直到极差 max - min < tol，返回公共值。"""
    failures = _as_failures(q)
    if tol <= 0:
        raise InvalidDistributionError("tol 必须为正")
    if failures.max() - failures.min() < tol:
        return float(failures.mean())
    rounds = 0
    for current in iter_projection_rounds(failures, s, max_applications):
        rounds += 1
        if current[-1] - current[0] < tol:
            logger.debug("迭代投影在 %d 轮后收敛 (n=%d, s=%d)", rounds, failures.size, s)
            return float(current.mean())
    raise AssertionError("unreachable")  # pragma: no cover


def iid_projection_direct(q: FailureVector, s: int, xtol: float = 1e-12) -> float:
    """二分求 q*：Pr[Bin(n, 1-q*) ≤ s] = Pr[Y ≤ s]，左侧关于 q* 单调递增。"""
    failures = _as_failures(q)
    n = failures.size
    if s >= n:
        # 任意 q* 都满足等式，取与迭代法极限一致的算术平均
        return float(failures.mean())
    target = lower_cdf(failures, s)
    if target <= 0.0:
        return 0.0
    if target >= 1.0:
        return 1.0

    def gap(x: float) -> float:
        return float(stats.binom.cdf(s, n, 1.0 - x)) - target

    return float(optimize.bisect(gap, 0.0, 1.0, xtol=xtol))


def verify_single_crossing(
    qY: FailureVector, qStar: float, s: int, tol: float = 1e-9
) -> CrossingResult:
    """
    检查 Pr[X ≤ t] ≥ Pr[Y ≤ t]（t < s）与 Pr[X ≤ t] ≤ Pr[Y ≤ t]（t ≥ s），
    X 为 n 个失败概率 qStar 的同分布伯努利和。返回经验交叉点。
    """
    failures = _as_failures(qY)
    n = failures.size
    ts = np.arange(n + 1)
    x_cdf = stats.binom.cdf(ts, n, 1.0 - qStar)
    y_cdf = np.minimum(np.cumsum(pbd_pmf(1.0 - failures)), 1.0)

    below = x_cdf <= y_cdf + tol
    # 最小的 t，使其后所有点都满足 X ≤ Y
    tail_ok = np.flip(np.logical_and.accumulate(np.flip(below)))
    crossing = int(np.argmax(tail_ok)) if tail_ok.any() else n + 1

    part1 = x_cdf[:s] >= y_cdf[:s] - tol
    if not part1.all():
        return CrossingResult(False, crossing, int(np.argmin(part1)))
    part2 = below[s:]
    if not part2.all():
        return CrossingResult(False, crossing, int(s + np.argmin(part2)))
    return CrossingResult(True, crossing)
