"""
价值分布与实例。

所有 CDF 都是左连续的：``evaluate(x) = Pr[b < x]``，价格 p 下买家愿意购买的概率为
``1 - evaluate(p) = Pr[b >= p]``。evaluate / inverse 接受标量或 numpy 数组，
标量输入返回 float。
"""

import json
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from .constants import REGULARITY_TOL
from .errors import (
    DegenerateDensityError,
    InvalidDistributionError,
    UnboundedRevenueError,
)

logger = logging.getLogger(__name__)

ArrayLike = Union[float, Sequence[float], np.ndarray]

# 等价于“密度为零”的下限
DENSITY_FLOOR = 1e-14
# 正则性检查中差分漂移项的系数
SPACING_SLACK = 4.0


def _finish(x: ArrayLike, out: np.ndarray):
    return float(out) if np.ndim(x) == 0 else out


class Cdf(ABC):
    """单个买家的价值分布。实例不可变，可在线程间共享。"""

    kind: str = ""

    @property
    @abstractmethod
    def support_max(self) -> float: ...

    @property
    @abstractmethod
    def support_min(self) -> float:
        """支撑集下端（本质下确界），inverse(0) 返回它。"""

    @abstractmethod
    def evaluate(self, x: ArrayLike): ...

    @abstractmethod
    def inverse(self, y: ArrayLike): ...

    @abstractmethod
    def monopoly_point(self) -> Tuple[float, float]: ...

    @abstractmethod
    def to_dict(self) -> Dict[str, Any]: ...

    def exceedance(self, x: ArrayLike):
        """Pr[b >= x]。"""
        out = 1.0 - np.asarray(self.evaluate(x), dtype=float)
        return _finish(x, out)

    def breakpoints(self) -> np.ndarray:
        """CDF 的跳跃点（积分时按这些点分段）。"""
        return np.empty(0)

    @property
    def is_regular_kind(self) -> bool:
        """闭式已知为正则的分布族。"""
        return False


@dataclass(frozen=True)
class TriangleParams:
    """三角分布的垄断价格 v 与垄断分位数 q。"""

    v: float
    q: float

    def __post_init__(self):
        if not (self.v >= 0.0) or math.isinf(self.v):
            raise InvalidDistributionError(f"垄断价格必须为非负有限数：v={self.v}", {"v": self.v})
        if not (0.0 <= self.q <= 1.0):
            raise InvalidDistributionError(f"垄断分位数必须在 [0,1]：q={self.q}", {"q": self.q})

    @property
    def revenue(self) -> float:
        return self.v * self.q


@dataclass(frozen=True)
class Triangle(Cdf):
    """Tri(v, q)：F(x) = (1-q)x / ((1-q)x + vq) 于 [0, v]，v 处有质量 q 的原子。"""

    params: TriangleParams
    kind = "triangle"

    @classmethod
    def of(cls, v: float, q: float) -> "Triangle":
        return cls(TriangleParams(float(v), float(q)))

    @property
    def v(self) -> float:
        return self.params.v

    @property
    def q(self) -> float:
        return self.params.q

    @property
    def support_max(self) -> float:
        return self.v

    @property
    def support_min(self) -> float:
        return 0.0

    @property
    def is_regular_kind(self) -> bool:
        return True

    def evaluate(self, x: ArrayLike):
        xa = np.asarray(x, dtype=float)
        v, q = self.v, self.q
        vq = v * q
        if vq == 0.0:
            # 退化为 0 处的点质量
            return _finish(x, np.where(xa > 0.0, 1.0, 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            inner = (1.0 - q) * xa / ((1.0 - q) * xa + vq)
        out = np.where(xa <= 0.0, 0.0, np.where(xa > v, 1.0, inner))
        return _finish(x, out)

    def inverse(self, y: ArrayLike):
        ya = np.asarray(y, dtype=float)
        v, q = self.v, self.q
        vq = v * q
        if vq == 0.0:
            return _finish(y, np.zeros_like(ya))
        with np.errstate(divide="ignore", invalid="ignore"):
            inner = ya * vq / ((1.0 - q) * (1.0 - ya))
        out = np.where(ya <= 0.0, 0.0, np.where(ya > 1.0 - q, v, inner))
        return _finish(y, out)

    def monopoly_point(self) -> Tuple[float, float]:
        return self.v, self.q

    def breakpoints(self) -> np.ndarray:
        return np.array([self.v]) if self.v > 0 else np.empty(0)

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "v": self.v, "q": self.q}


@dataclass(frozen=True)
class PointMass(Cdf):
    """确定性出价 b。"""

    b: float
    kind = "point_mass"

    def __post_init__(self):
        if not (self.b >= 0.0) or math.isinf(self.b):
            raise InvalidDistributionError(f"点质量位置必须为非负有限数：b={self.b}", {"b": self.b})

    @property
    def support_max(self) -> float:
        return self.b

    @property
    def support_min(self) -> float:
        return self.b

    @property
    def is_regular_kind(self) -> bool:
        return True

    def evaluate(self, x: ArrayLike):
        xa = np.asarray(x, dtype=float)
        return _finish(x, np.where(xa <= self.b, 0.0, 1.0))

    def inverse(self, y: ArrayLike):
        ya = np.asarray(y, dtype=float)
        return _finish(y, np.full_like(ya, self.b))

    def monopoly_point(self) -> Tuple[float, float]:
        return self.b, 1.0

    def breakpoints(self) -> np.ndarray:
        return np.array([self.b]) if self.b > 0 else np.empty(0)

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "b": self.b}


@dataclass(frozen=True)
class EqualRevenue(Cdf):
    """等收益分布 F(x) = 1 - c/x（x > c），任意价格 p ≥ c 的收益都是 c。"""

    scale: float
    kind = "equal_revenue"

    def __post_init__(self):
        if not (self.scale > 0.0) or math.isinf(self.scale):
            raise InvalidDistributionError(f"等收益分布的尺度必须为正：{self.scale}", {"scale": self.scale})

    @property
    def support_max(self) -> float:
        return math.inf

    @property
    def support_min(self) -> float:
        return self.scale

    @property
    def is_regular_kind(self) -> bool:
        # 虚拟价值恒为 0
        return True

    def evaluate(self, x: ArrayLike):
        xa = np.asarray(x, dtype=float)
        c = self.scale
        with np.errstate(divide="ignore"):
            out = np.where(xa <= c, 0.0, 1.0 - c / xa)
        return _finish(x, out)

    def inverse(self, y: ArrayLike):
        ya = np.asarray(y, dtype=float)
        c = self.scale
        with np.errstate(divide="ignore"):
            out = np.where(ya >= 1.0, math.inf, c / (1.0 - np.minimum(ya, 1.0)))
        out = np.where(ya <= 0.0, c, out)
        return _finish(y, out)

    def monopoly_point(self) -> Tuple[float, float]:
        raise UnboundedRevenueError(
            "等收益分布在所有价格上收益相同，最小分位数的最优点位于 q=0, v=∞",
            {"scale": self.scale},
        )

    def breakpoints(self) -> np.ndarray:
        # 密度在尺度点处跳变
        return np.array([self.scale])

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "scale": self.scale}


@dataclass(frozen=True)
class Tabulated(Cdf):
    """
    表格分布：左连续分段常数插值。
    F(x) = 0 (x ≤ 0)，ps[0] (0 < x ≤ xs[0])，ps[i] (xs[i-1] < x ≤ xs[i])，1 (x > xs[-1])。
    节点处的取值精确，因此 Pr[b ≥ xs[i]] = 1 - ps[i]。
    """

    xs: Tuple[float, ...]
    ps: Tuple[float, ...]
    kind = "tabulated"
    _xs: np.ndarray = field(init=False, repr=False, compare=False)
    _ps: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=float).ravel()
        ps = np.asarray(self.ps, dtype=float).ravel()
        if xs.size == 0 or xs.size != ps.size:
            raise InvalidDistributionError("xs 与 ps 必须等长且非空", {"len_xs": int(xs.size), "len_ps": int(ps.size)})
        if not np.all(np.isfinite(xs)) or xs[0] <= 0.0 or np.any(np.diff(xs) <= 0.0):
            raise InvalidDistributionError("xs 必须为正、有限且严格递增")
        if np.any(ps < 0.0) or np.any(ps > 1.0) or np.any(np.diff(ps) < 0.0):
            raise InvalidDistributionError("ps 必须在 [0,1] 内且单调不减")
        object.__setattr__(self, "xs", tuple(xs.tolist()))
        object.__setattr__(self, "ps", tuple(ps.tolist()))
        object.__setattr__(self, "_xs", xs)
        object.__setattr__(self, "_ps", ps)

    @classmethod
    def from_cdf(cls, cdf: Cdf, xs: ArrayLike) -> "Tabulated":
        """在给定节点上对任意 CDF 取值，得到其表格克隆。"""
        grid = np.asarray(xs, dtype=float)
        return cls(tuple(grid), tuple(np.asarray(cdf.evaluate(grid), dtype=float)))

    @property
    def knots(self) -> np.ndarray:
        return self._xs

    @property
    def probabilities(self) -> np.ndarray:
        return self._ps

    @property
    def support_max(self) -> float:
        return float(self._xs[-1])

    @property
    def support_min(self) -> float:
        positive = np.nonzero(self._ps > 0.0)[0]
        if positive.size == 0:
            return float(self._xs[-1])
        i = int(positive[0])
        return 0.0 if i == 0 else float(self._xs[i - 1])

    def evaluate(self, x: ArrayLike):
        xa = np.asarray(x, dtype=float)
        xs, ps = self._xs, self._ps
        idx = np.searchsorted(xs, xa, side="left")
        vals = np.where(idx < xs.size, ps[np.minimum(idx, xs.size - 1)], 1.0)
        return _finish(x, np.where(xa <= 0.0, 0.0, vals))

    def inverse(self, y: ArrayLike):
        ya = np.asarray(y, dtype=float)
        xs, ps = self._xs, self._ps
        idx = np.searchsorted(ps, ya, side="left")
        prev = xs[np.clip(idx - 1, 0, xs.size - 1)]
        out = np.where(idx == 0, 0.0, np.where(idx >= xs.size, xs[-1], prev))
        out = np.where(ya <= 0.0, self.support_min, out)
        return _finish(y, out)

    def monopoly_point(self) -> Tuple[float, float]:
        # 每个区间内 F 为常数、收益随价格增加，最优价格只可能落在节点上
        revenue = self._xs * (1.0 - self._ps)
        best = float(revenue.max())
        if best <= 0.0:
            return 0.0, 0.0
        ties = np.nonzero(revenue >= best - 1e-12 * best)[0]
        i = int(ties[-1])  # 价格最大 ⇔ 分位数最小
        return float(self._xs[i]), float(1.0 - self._ps[i])

    def breakpoints(self) -> np.ndarray:
        return self._xs

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "xs": list(self.xs), "ps": list(self.ps)}


# ---------- 模块级操作 ----------


def cdf_eval(cdf: Cdf, x: ArrayLike):
    """F(x) = Pr[b < x]。"""
    if np.any(np.asarray(x, dtype=float) < 0.0):
        raise InvalidDistributionError("cdf_eval 要求 x ≥ 0")
    return cdf.evaluate(x)


def monopoly_point(cdf: Cdf) -> Tuple[float, float]:
    """最大化 F⁻¹(1-q)·q 的 (v, q)，并列时取最小的 q。"""
    return cdf.monopoly_point()


def is_regular(
    cdf: Cdf,
    grid: ArrayLike,
    tol: float = REGULARITY_TOL,
    density_floor: float = DENSITY_FLOOR,
) -> bool:
    """
    虚拟价值 φ(x) = x - (1-F(x))/f(x) 在网格上是否单调不减。
    已知正则的分布族直接返回 True；其余用中心差分估计密度。
    """
    if cdf.is_regular_kind:
        return True
    xs = np.unique(np.asarray(grid, dtype=float))
    if xs.size < 3:
        return True
    F = np.asarray(cdf.evaluate(xs), dtype=float)
    f = (F[2:] - F[:-2]) / (xs[2:] - xs[:-2])
    xm, Fm = xs[1:-1], F[1:-1]
    inside = (Fm > 0.0) & (Fm < 1.0)
    flat = inside & (f <= density_floor)
    if np.any(flat):
        where = xm[flat]
        raise DegenerateDensityError(
            f"支撑集内部存在密度近似为零的区间（首个位置 x={where[0]:.6g}）",
            {"x": where[:5].tolist(), "count": int(flat.sum())},
        )
    phi = xm[inside] - (1.0 - Fm[inside]) / f[inside]
    if phi.size < 2:
        return True
    # 中心差分使 φ̂ 每个节点漂移 O((h/x)³·(x + |φ|))，与网格间距一起放宽容差
    h = 0.5 * (xs[2:] - xs[:-2])[inside]
    x = xm[inside]
    step = np.maximum(h[1:], h[:-1]) / x[:-1]
    allowance = tol * (1.0 + np.abs(phi[:-1])) + SPACING_SLACK * step**3 * (x[:-1] + np.abs(phi[:-1]))
    drops = phi[1:] < phi[:-1] - allowance
    if np.any(drops):
        logger.debug("虚拟价值在 x=%.6g 处下降", float(xm[inside][1:][drops][0]))
    return not bool(np.any(drops))


def dominates(f: Cdf, g: Cdf, grid: ArrayLike, tol: float = 1e-12) -> bool:
    """f 一阶随机占优 g：网格上 F(x) ≤ G(x)。"""
    xs = np.asarray(grid, dtype=float)
    return bool(np.all(np.asarray(f.evaluate(xs)) <= np.asarray(g.evaluate(xs)) + tol))


def cdf_to_dict(cdf: Cdf) -> Dict[str, Any]:
    return cdf.to_dict()


def cdf_from_dict(data: Dict[str, Any]) -> Cdf:
    kind = data.get("kind")
    try:
        if kind == Triangle.kind:
            return Triangle.of(data["v"], data["q"])
        if kind == PointMass.kind:
            return PointMass(float(data["b"]))
        if kind == EqualRevenue.kind:
            return EqualRevenue(float(data["scale"]))
        if kind == Tabulated.kind:
            return Tabulated(tuple(data["xs"]), tuple(data["ps"]))
    except KeyError as e:
        raise InvalidDistributionError(f"分布 {kind} 缺少字段 {e}", {"kind": kind}) from e
    raise InvalidDistributionError(f"未知的分布类型：{kind}", {"kind": kind})


# ---------- 实例 ----------


@dataclass(frozen=True)
class Instance:
    """
    n 个独立买家的价值分布 + 物品数 k。
    counts 允许把相同分布的买家合并存储（counts[j] 个买家共享 cdfs[j]）。
    """

    cdfs: Tuple[Cdf, ...]
    k: int
    counts: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        cdfs = tuple(self.cdfs)
        counts = tuple(int(c) for c in self.counts) if self.counts is not None else (1,) * len(cdfs)
        if not cdfs:
            raise InvalidDistributionError("实例至少需要一个买家")
        if len(counts) != len(cdfs) or any(c < 1 for c in counts):
            raise InvalidDistributionError("counts 必须与 cdfs 等长且均为正整数")
        if int(self.k) < 1:
            raise InvalidDistributionError(f"k 必须 ≥ 1：{self.k}", {"k": self.k})
        object.__setattr__(self, "cdfs", cdfs)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "k", int(self.k))

    @classmethod
    def iid(cls, cdf: Cdf, n: int, k: int) -> "Instance":
        return cls((cdf,), k, (n,))

    @property
    def n(self) -> int:
        return int(sum(self.counts))

    def groups(self) -> Iterator[Tuple[Cdf, int]]:
        return zip(self.cdfs, self.counts)

    def expanded(self) -> List[Cdf]:
        """逐个买家展开的分布列表。"""
        out: List[Cdf] = []
        for cdf, count in self.groups():
            out.extend([cdf] * count)
        return out

    def exceedance(self, x: ArrayLike) -> np.ndarray:
        """SuccessVector：s_j = Pr[b_j ≥ x]，形状 (n,) 或 (n, len(x))。"""
        return np.stack([np.asarray(c.exceedance(x), dtype=float) for c in self.expanded()])

    @property
    def support_max(self) -> float:
        return max(c.support_max for c in self.cdfs)

    def breakpoints(self) -> np.ndarray:
        parts = [c.breakpoints() for c in self.cdfs]
        return np.unique(np.concatenate(parts)) if parts else np.empty(0)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "k": self.k,
            "cdfs": [c.to_dict() for c in self.cdfs],
            "counts": list(self.counts),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Instance":
        try:
            cdfs = tuple(cdf_from_dict(d) for d in data["cdfs"])
            return cls(cdfs, int(data["k"]), tuple(data["counts"]) if data.get("counts") else None)
        except KeyError as e:
            raise InvalidDistributionError(f"实例文件缺少字段 {e}") from e


def load_instance(path: str) -> Instance:
    with open(path, "r", encoding="utf-8") as f:
        return Instance.from_dict(json.load(f))


def save_instance(inst: Instance, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(inst.to_dict(), f, ensure_ascii=False, indent=2)


def triangles_of(inst: Instance) -> List[TriangleParams]:
    """把全三角实例展开为逐买家的 TriangleParams 列表。"""
    out: List[TriangleParams] = []
    for cdf, count in inst.groups():
        if not isinstance(cdf, Triangle):
            raise InvalidDistributionError("实例中含有非三角分布", {"kind": cdf.kind})
        out.extend([cdf.params] * count)
    return out
