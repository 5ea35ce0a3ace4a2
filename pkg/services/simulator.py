"""
蒙特卡洛机制模拟：按逆 CDF 抽样出价，逐次计算 AP / AR / SPM 的收益。
出价等于价格时视为愿意购买（CDF 左连续）。
"""

import logging
import math
from dataclasses import asdict, dataclass
from typing import Any, Dict, Sequence

import numpy as np

from core.distributions import Instance
from core.errors import InvalidDistributionError, InvalidPermutationError
from .sim_worker import run_blocks

logger = logging.getLogger(__name__)

DEFAULT_BLOCK_SIZE = 10_000


@dataclass
class SimResult:
    mean: float
    stderr: float
    trials: int
    seed: int

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def sample_bids(inst: Instance, rng: np.random.Generator, trials: int) -> np.ndarray:
    """形状 (trials, n) 的出价矩阵，第 j 列来自第 j 个买家的分布。"""
    u = rng.random((trials, inst.n))
    bids = np.empty_like(u)
    col = 0
    for cdf, count in inst.groups():
        bids[:, col:col + count] = cdf.inverse(u[:, col:col + count])
        col += count
    return bids


def _summarize(values: np.ndarray, seed: int) -> SimResult:
    trials = int(values.size)
    stderr = float(values.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return SimResult(mean=float(values.mean()), stderr=stderr, trials=trials, seed=int(seed))


def _check_trials(trials: int) -> None:
    if trials < 1:
        raise InvalidDistributionError("trials 必须 ≥ 1", {"trials": trials})


def simulate_ap(
    inst: Instance, p: float, trials: int, seed: int, threads: int = 1, block_size: int = DEFAULT_BLOCK_SIZE
) -> SimResult:
    """每次收益 p·min(k, #{b_j ≥ p})。"""
    _check_trials(trials)

    def block(rng: np.random.Generator, size: int) -> np.ndarray:
        bids = sample_bids(inst, rng, size)
        return p * np.minimum(inst.k, np.sum(bids >= p, axis=1))

    return _summarize(run_blocks(block, trials, seed, threads, block_size), seed)


def simulate_ar(
    inst: Instance, r: float, trials: int, seed: int, threads: int = 1, block_size: int = DEFAULT_BLOCK_SIZE
) -> SimResult:
    """第 k+1 价拍卖加匿名保留价：每次收益 r·min(k, #{b ≥ r}) + k·|b_(k+1) - r|₊。"""
    _check_trials(trials)
    k = inst.k

    def block(rng: np.random.Generator, size: int) -> np.ndarray:
        bids = sample_bids(inst, rng, size)
        willing = np.sum(bids >= r, axis=1)
        if inst.n > k:
            # 第 k+1 高出价
            kth = -np.partition(-bids, k, axis=1)[:, k]
        else:
            kth = np.zeros(size)
        return r * np.minimum(k, willing) + k * np.maximum(kth - r, 0.0)

    return _summarize(run_blocks(block, trials, seed, threads, block_size), seed)


def simulate_spm(
    inst: Instance,
    prices: Sequence[float],
    order: Sequence[int],
    trials: int,
    seed: int,
    threads: int = 1,
    block_size: int = DEFAULT_BLOCK_SIZE,
) -> SimResult:
    """买家按 order 依次到达，第 j 个到达者面对价格 prices[j]，有库存且出价 ≥ 价格即购买。"""
    _check_trials(trials)
    n = inst.n
    seq = [int(i) for i in order]
    if len(seq) != n or sorted(seq) != list(range(n)):
        raise InvalidPermutationError("order 必须是 0..n-1 的一个排列", {"order": seq, "n": n})
    price_arr = np.asarray(prices, dtype=float)
    if price_arr.shape != (n,):
        raise InvalidPermutationError("prices 的长度必须等于买家数", {"len": int(price_arr.size), "n": n})

    def block(rng: np.random.Generator, size: int) -> np.ndarray:
        bids = sample_bids(inst, rng, size)
        stock = np.full(size, inst.k)
        revenue = np.zeros(size)
        for j, buyer in enumerate(seq):
            buys = (bids[:, buyer] >= price_arr[j]) & (stock > 0)
            revenue += price_arr[j] * buys
            stock -= buys
        return revenue

    return _summarize(run_blocks(block, trials, seed, threads, block_size), seed)
