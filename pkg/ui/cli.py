import argparse
import logging
import sys
from typing import List, Optional

from core.config_loader import apply_overrides, load_config
from core.constants import APP_NAME
from core.errors import AuctionGapError
from core.log import setup_logging
from services.report import render, write_report
from services.verification import CHECKS
from .commands import COMMANDS

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_ERROR = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=APP_NAME,
        description="k 件物品拍卖中 AR / AP / EAR 收益差距的数值计算与验证",
    )
    parser.add_argument("--config", default=None, help="覆盖配置文件（YAML 或 JSON）")
    parser.add_argument("--seed", type=int, default=None, help="随机种子")
    parser.add_argument("--tol", type=float, default=None, help="积分容差 quad_tol")
    parser.add_argument("--threads", type=int, default=None, help="工作线程数")
    parser.add_argument("--format", choices=["json", "csv"], default=None, help="输出格式")
    parser.add_argument("--log-level", default=None, help="日志级别，例如 DEBUG / INFO")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gap-table", help="k = 1..k_max 的 AR/AP 差距表")
    p.add_argument("--k-max", type=int, default=24)

    p = sub.add_parser("ear-bound", help="k ∈ {1,2,3} 的 EAR/AP 上界")
    p.add_argument("--k", type=int, default=None)

    p = sub.add_parser("worst-case", help="构造同分布最坏实例 F*_(n)")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--ns", default=None, help="逗号分隔的 n 序列，输出 AR 随 n 的变化")
    p.add_argument("--out", default=None, help="保存实例 JSON 的路径")

    p = sub.add_parser("lower-bound", help="构造三角分布下界实例")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--n", type=int, default=None, help="省略时逐次翻倍直到接近差距")
    p.add_argument("--a", type=float, default=None)
    p.add_argument("--b", type=float, default=None)
    p.add_argument("--out", default=None)

    p = sub.add_parser("matroid-demo", help="层状拟阵上的 AR/AP 差距")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--m", type=int, default=None, help="买家对数，默认等于 k")

    p = sub.add_parser("revenue", help="实例文件上的 AP / AR / EAR")
    p.add_argument("--instance", required=True)
    p.add_argument("--mech", choices=["ap", "ar", "ear", "all"], default="all")
    p.add_argument("--price", type=float, default=None, help="AP 价格或 AR 保留价；省略时求最优")
    p.add_argument("--cutoff", type=float, default=None, help="无界支撑时的积分截断")

    p = sub.add_parser("simulate", help="蒙特卡洛模拟机制收益")
    p.add_argument("--instance", required=True)
    p.add_argument("--mech", choices=["ap", "ar", "spm"], required=True)
    p.add_argument("--price", type=float, default=None)
    p.add_argument("--prices", default=None, help="SPM 的逗号分隔价格")
    p.add_argument("--order", default=None, help="SPM 的逗号分隔到达顺序（0 起）")
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--cutoff", type=float, default=None)

    p = sub.add_parser("verify", help="运行验收套件")
    p.add_argument("--only", nargs="*", choices=[name for name, _ in CHECKS], default=None)

    p = sub.add_parser("verify-bernoulli", help="伯努利和投影与单次交叉检查")
    p.add_argument("--q", default=None, help="逗号分隔的失败概率；省略时运行随机检查")
    p.add_argument("--s", type=int, default=0)

    return parser


def _validate(parser: argparse.ArgumentParser, args) -> None:
    if args.command == "worst-case" and args.n is None and not args.ns:
        parser.error("worst-case 需要 --n 或 --ns")


def run(argv: Optional[List[str]] = None) -> int:
    """解析参数、加载配置、执行子命令；返回退出码。"""
    parser = build_parser()
    args = parser.parse_args(argv)
    _validate(parser, args)
    try:
        config = load_config(args.config)
        config = apply_overrides(
            config, seed=args.seed, tol=args.tol, threads=args.threads, format=args.format
        )
        setup_logging(config, args.log_level)
        result = COMMANDS[args.command](args, config)
    except AuctionGapError as e:
        print(f"错误 [{e.code}]: {e}", file=sys.stderr)
        return EXIT_ERROR
    except (FileNotFoundError, ModuleNotFoundError) as e:
        print(f"配置加载失败: {e}", file=sys.stderr)
        return EXIT_ERROR

    fmt = str(config.get("format", "json"))
    print(render(result.payload, fmt))
    path = write_report(config, result.name, result.payload, fmt)
    if path:
        logger.info("报告已写入 %s", path)
    return EXIT_OK if result.passed else EXIT_FAILED


def main() -> None:
    sys.exit(run())
