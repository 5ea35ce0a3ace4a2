import logging
from typing import Any, Dict, Optional

DEFAULT_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def setup_logging(config: Dict[str, Any], level: Optional[str] = None) -> None:
    """按配置中的 logging 段初始化根日志；命令行给出的 level 优先。"""
    log_cfg = config.get("logging", {}) if isinstance(config.get("logging"), dict) else {}
    level_name = str(level or log_cfg.get("level", "WARNING")).upper()
    numeric = logging.getLevelName(level_name)
    if not isinstance(numeric, int):
        numeric = logging.WARNING
    logging.basicConfig(
        level=numeric,
        format=str(log_cfg.get("format", DEFAULT_FORMAT)),
        force=True,
    )
