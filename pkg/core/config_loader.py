import json
import logging
import os
from typing import Any, Dict, Optional

try:
    import yaml  # type: ignore
except ImportError:  # pragma: no cover
    yaml = None

from .errors import ConfigError
from .paths import get_bundled_config_paths, get_external_config_paths

logger = logging.getLogger(__name__)


def _merge_dict(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    """
    递归合并配置，override 中的键优先。
    列表和标量整体替换，字典逐键合并。
    """
    result = dict(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(result.get(k), dict):
            result[k] = _merge_dict(result[k], v)
        else:
            result[k] = v
    return result


def _load_config_file(path: str) -> Dict[str, Any]:
    if yaml is None:
        raise ModuleNotFoundError(
            "未安装 PyYAML，无法读取 YAML 配置。请执行 `pip install PyYAML` 或 `pip install -r requirements.txt`。"
        )
    if path.endswith((".yml", ".yaml")):
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
    elif path.endswith(".json"):
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    else:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError:
            data = json.loads(text)
    if not isinstance(data, dict):
        raise ConfigError(f"配置文件格式错误（根节点不是对象）：{path}", {"path": path})
    return data


def load_config(path: Optional[str] = None) -> Dict[str, Any]:
    """
    先加载内置默认配置（YAML），
    再使用外部覆盖配置（若存在）递归覆盖，仅需写改动字段即可。
    显式传入的 path 必须存在且可解析；自动发现的覆盖文件损坏时仅记录警告。
    """
    # 1) 内置配置
    base_cfg: Dict[str, Any] = {}
    for candidate in get_bundled_config_paths():
        if os.path.exists(candidate):
            base_cfg = _load_config_file(candidate)
            break
    if not base_cfg:
        raise FileNotFoundError("未找到内置配置文件（config.yml 或 config.yaml）。")

    # 2) 外部覆盖配置
    merged = dict(base_cfg)
    if path:
        if not os.path.exists(path):
            raise ConfigError(f"配置文件不存在：{path}", {"path": path})
        try:
            merged = _merge_dict(merged, _load_config_file(path))
        except (OSError, ValueError, yaml.YAMLError) as e:
            raise ConfigError(f"加载配置文件失败 {path}: {e}", {"path": path}) from e
        return merged

    for candidate in get_external_config_paths():
        if not os.path.exists(candidate):
            continue
        try:
            merged = _merge_dict(merged, _load_config_file(candidate))
            logger.debug("已合并外部配置 %s", candidate)
        except (OSError, ValueError, yaml.YAMLError) as e:
            # 忽略损坏的外部配置，继续使用内置/已有合并结果
            logger.warning("跳过无法解析的外部配置 %s: %s", candidate, e)
    return merged


def apply_overrides(config: Dict[str, Any], **overrides: Any) -> Dict[str, Any]:
    """把命令行全局参数（值为 None 的忽略）叠加到配置顶层。"""
    patch = {k: v for k, v in overrides.items() if v is not None}
    return _merge_dict(config, patch)
