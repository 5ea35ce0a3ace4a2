import os
from typing import Any, Dict, List


def get_project_root() -> str:
    """Return the project root directory (parent of core/)."""
    return os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def get_base_dir() -> str:
    """Return the directory searched for override configs (the working directory)."""
    return os.getcwd()


def _candidate_config_names() -> List[str]:
    return ["config.yml", "config.yaml"]


def _candidate_user_config_names() -> List[str]:
    return ["user_config.yml", "user_config.yaml", "user_config.json"]


def get_bundled_config_paths() -> List[str]:
    """Paths for the built-in default config shipped next to main.py."""
    base = get_project_root()
    return [os.path.join(base, name) for name in _candidate_config_names()]


def get_external_config_paths() -> List[str]:
    """
    Paths for user-override configs, lowest priority first.
    A config.yml in the working directory only counts when it is not the bundled file.
    """
    base_dir = get_base_dir()
    paths = []
    if os.path.abspath(base_dir) != get_project_root():
        paths.extend(os.path.join(base_dir, name) for name in _candidate_config_names())
    paths.extend(os.path.join(base_dir, name) for name in _candidate_user_config_names())
    return paths


def get_output_dir(config: Dict[str, Any]) -> str:
    """从配置中读取报告输出目录，相对路径按工作目录解析。"""
    out_cfg = config.get("output")
    directory = "reports"
    if isinstance(out_cfg, dict) and out_cfg.get("directory"):
        directory = str(out_cfg["directory"])
    return os.path.abspath(directory)
