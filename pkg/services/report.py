import csv
import io
import json
import logging
import os
from datetime import datetime
from typing import Any, Dict, List, Optional

import numpy as np

from core.paths import get_output_dir

logger = logging.getLogger(__name__)


def output_enabled(config: dict) -> bool:
    out_cfg = config.get("output")
    if not isinstance(out_cfg, dict):
        return False
    return bool(out_cfg.get("enabled", True))


def _rows_of(payload: Any) -> List[Dict[str, Any]]:
    """CSV 行：列表直接使用；带 checks 的套件报告取 checks；其余字典写成一行。"""
    if isinstance(payload, list):
        return [dict(r) for r in payload]
    if isinstance(payload, dict) and isinstance(payload.get("checks"), list):
        return [dict(r) for r in payload["checks"]]
    return [dict(payload)]


def _cell(value: Any) -> Any:
    if isinstance(value, (dict, list, tuple)):
        return json.dumps(value, ensure_ascii=False, default=_json_default)
    return value


def _json_default(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"无法序列化的类型：{type(value).__name__}")


def render(payload: Any, fmt: str = "json") -> str:
    """把结果渲染成 JSON 或 CSV 文本。"""
    if fmt == "csv":
        rows = _rows_of(payload)
        fields: List[str] = []
        for row in rows:
            fields.extend(k for k in row if k not in fields)

        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _cell(v) for k, v in row.items()})
        return buf.getvalue()
    return json.dumps(payload, ensure_ascii=False, indent=2, default=_json_default)


def _open_new(stem: str, ext: str):
    """以独占模式创建文件，已存在时改用 <stem>_1、<stem>_2 ……"""
    suffix = 0
    while True:
        path = f"{stem}.{ext}" if suffix == 0 else f"{stem}_{suffix}.{ext}"
        try:
            return path, open(path, "x", encoding="utf-8", newline="")
        except FileExistsError:
            suffix += 1


def write_report(config: dict, name: str, payload: Any, fmt: str = "json") -> Optional[str]:
    """
    将结果保存到配置的输出目录中。
    命名格式：<name>_YYYYMMDD_HHMMSS_ffffff.json / .csv，同名时追加序号；输出被禁用时返回 None。
    """
    if not output_enabled(config):
        return None

    directory = get_output_dir(config)
    try:
        os.makedirs(directory, exist_ok=True)
    except OSError as e:
        logger.warning("创建输出目录失败: %s", e)
        return None

    timestamp = datetime.now().strftime("%Y%m%d_%H%M%S_%f")
    ext = "csv" if fmt == "csv" else "json"
    stem = os.path.join(directory, f"{name}_{timestamp}")

    try:
        filepath, f = _open_new(stem, ext)
        with f:
            f.write(render(payload, fmt))
        logger.info("已保存报告: %s", filepath)
    except OSError as e:
        logger.warning("保存报告失败: %s", e)
        return None
    return filepath
