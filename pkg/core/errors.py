"""
统一的异常类型。

每个异常带一个稳定的 ``code``（写入 JSON 报告、CLI 错误输出）和 ``details`` 字典。
输入校验类错误同时继承 ValueError，数值失败类错误同时继承 RuntimeError。
"""

from typing import Any, Dict, Optional


class AuctionGapError(Exception):
    code = "error"

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.details: Dict[str, Any] = dict(details or {})

    def to_dict(self) -> Dict[str, Any]:
        return {"code": self.code, "message": str(self), "details": self.details}


class InvalidDistributionError(AuctionGapError, ValueError):
    code = "invalid-distribution"


class ConfigError(AuctionGapError, ValueError):
    code = "config-error"


class UnboundedRevenueError(AuctionGapError, ValueError):
    code = "unbounded-revenue"


class DegenerateDensityError(AuctionGapError, RuntimeError):
    code = "degenerate-density"


class IndexOutOfRangeError(AuctionGapError, IndexError):
    code = "index-out-of-range"


class NoRootInBracketError(AuctionGapError, RuntimeError):
    code = "no-root-in-bracket"


class MaxIterationsExceededError(AuctionGapError, RuntimeError):
    code = "max-iterations-exceeded"


class CapacityViolationError(AuctionGapError, ValueError):
    code = "capacity-violation"


class IrregularInstanceError(AuctionGapError, ValueError):
    code = "irregular-instance"


class KTooSmallError(AuctionGapError, ValueError):
    code = "k-too-small"


class UnboundedSupportError(AuctionGapError, ValueError):
    code = "unbounded-support-without-cutoff"


class ToleranceNotAchievedError(AuctionGapError, RuntimeError):
    code = "tolerance-not-achieved"


class KOutOfRangeError(AuctionGapError, ValueError):
    code = "k-out-of-range"


class BelowThresholdError(AuctionGapError, ValueError):
    code = "x-below-threshold"


class GridNotAboveThresholdError(AuctionGapError, ValueError):
    code = "grid-not-above-threshold"


class BracketFailureError(AuctionGapError, ValueError):
    code = "bracket-failure"


class RankExceedsPairsError(AuctionGapError, ValueError):
    code = "rank-exceeds-pairs"


class InvalidPermutationError(AuctionGapError, ValueError):
    code = "invalid-permutation"
