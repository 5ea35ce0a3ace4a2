"""
Poisson 二项分布（PBD）与次序统计量 CDF。

D_i(x) = Pr[出价 ≥ x 的买家少于 i 个]，等于 PBD 在 i-1 处的累积概率。
"""

import itertools
import logging
from typing import Optional, Sequence, Union

import numpy as np

from .constants import PMF_SUM_TOL
from .distributions import ArrayLike, Instance
from .errors import IndexOutOfRangeError, InvalidDistributionError

logger = logging.getLogger(__name__)

SuccessVector = Union[Sequence[float], np.ndarray]
Pmf = np.ndarray


def fold_bernoulli(pmf: np.ndarray, s: Union[float, np.ndarray], capped: bool) -> np.ndarray:
    """把一个成功概率为 s 的伯努利变量卷入 pmf（沿第 0 轴计数）。"""
    moved = pmf * s
    out = pmf - moved
    out[1:] += moved[:-1]
    if capped:
        # 顶层状态表示“≥ cap”，吸收向上移动的概率
        out[-1] += moved[-1]
    return out


def pbd_pmf(s: SuccessVector, cap: Optional[int] = None) -> Pmf:
    """
    成功次数的分布：从 0 处点质量出发，逐个卷入伯努利变量（O(n²)）。

    s 可以是形状 (n,) 的向量，也可以是 (n, m) 的矩阵（每列一个价格点），
    结果形状分别为 (size,) 或 (size, m)。给定 cap 时计数截断为 0..cap，
    最后一个状态表示“cap 个或更多”，复杂度降为 O(n·cap)。
    """
    probs = np.asarray(s, dtype=float)
    if probs.ndim == 0 or probs.shape[0] == 0:
        raise InvalidDistributionError("SuccessVector 至少需要一个分量")
    if np.any(probs < 0.0) or np.any(probs > 1.0):
        raise InvalidDistributionError("成功概率必须在 [0,1] 内")
    n = probs.shape[0]
    capped = cap is not None and cap < n
    size = (cap if capped else n) + 1
    pmf = np.zeros((size,) + probs.shape[1:])
    pmf[0] = 1.0
    for sj in probs:
        pmf = fold_bernoulli(pmf, sj, capped)
    return pmf


def grouped_pmf(inst: Instance, xs: ArrayLike, cap: Optional[int] = None) -> np.ndarray:
    """
    在多个价格点上同时计算实例的（截断）PBD，形状 (size, len(xs))。
    相同分布的买家只求一次超出概率，按 counts 重复卷入。
    """
    points = np.atleast_1d(np.asarray(xs, dtype=float))
    n = inst.n
    capped = cap is not None and cap < n
    size = (cap if capped else n) + 1
    pmf = np.zeros((size, points.size))
    pmf[0] = 1.0
    for cdf, count in inst.groups():
        s = np.asarray(cdf.exceedance(points), dtype=float)
        for _ in range(count):
            pmf = fold_bernoulli(pmf, s, capped)
    return pmf


def brute_force_pmf(s: SuccessVector) -> Pmf:
    """枚举全部 2ⁿ 种结果得到的 PBD，仅用于校验（n 较小时）。"""
    probs = [float(p) for p in s]
    out = np.zeros(len(probs) + 1)
    for outcome in itertools.product((0, 1), repeat=len(probs)):
        weight = 1.0
        for hit, p in zip(outcome, probs):
            weight *= p if hit else 1.0 - p
        out[sum(outcome)] += weight
    return out


def validate_pmf(p: ArrayLike) -> Pmf:
    pmf = np.asarray(p, dtype=float)
    if pmf.ndim != 1 or pmf.size == 0:
        raise InvalidDistributionError("Pmf 必须是非空一维数组")
    if np.any(pmf < -PMF_SUM_TOL) or abs(pmf.sum() - 1.0) > max(PMF_SUM_TOL, 1e-12 * pmf.size):
        raise InvalidDistributionError("Pmf 必须非负且和为 1", {"sum": float(pmf.sum())})
    return pmf


def order_stat_cdfs(inst: Instance, xs: ArrayLike, upto: int) -> np.ndarray:
    """D_1..D_upto 在每个 x 上的取值，形状 (upto, len(xs))。"""
    if not 1 <= upto <= inst.n + 1:
        raise IndexOutOfRangeError(
            f"次序统计量下标必须在 [1, n+1]：i={upto}, n={inst.n}", {"i": upto, "n": inst.n}
        )
    pmf = grouped_pmf(inst, xs, cap=upto)
    cdf = np.cumsum(pmf, axis=0)[:upto]
    if upto == inst.n + 1:
        cdf[-1] = 1.0
    return np.minimum(cdf, 1.0)


def order_stat_cdf(inst: Instance, x: float, i: int) -> float:
    """D_i(x) = Pr[出价 ≥ x 的买家少于 i 个]，1 ≤ i ≤ n+1。"""
    if not 1 <= i <= inst.n + 1:
        raise IndexOutOfRangeError(
            f"次序统计量下标必须在 [1, n+1]：i={i}, n={inst.n}", {"i": i, "n": inst.n}
        )
    if x < 0:
        raise InvalidDistributionError("order_stat_cdf 要求 x ≥ 0")
    if i == inst.n + 1:
        return 1.0
    return float(order_stat_cdfs(inst, [x], i)[i - 1, 0])


def check_log_concavity(p: ArrayLike, tol: float = 1e-12) -> bool:
    """Pr[Z=t]² ≥ Pr[Z=t-1]·Pr[Z=t+1] - tol 对所有 t 成立。"""
    pmf = np.asarray(p, dtype=float)
    if pmf.size < 3:
        return True
    return bool(np.all(pmf[1:-1] ** 2 >= pmf[:-2] * pmf[2:] - tol))
