"""
包内配置入口
统一从项目根目录的 config.py 导入，这里只负责把根目录放进 sys.path
"""

import sys
from pathlib import Path

# 添加项目根目录到路径
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

# 从全局配置导入
from config import (  # noqa: E402
    LOGGING_CONFIG,
    PATHS,
    get_path,
    get_thread_count,
    get_solver_config,
    get_envelope_config,
    get_derivative_config,
    get_value_config,
    get_relaxation_config,
    get_bound_config,
    get_api_config,
)

__all__ = [
    "LOGGING_CONFIG",
    "PATHS",
    "get_path",
    "get_thread_count",
    "get_solver_config",
    "get_envelope_config",
    "get_derivative_config",
    "get_value_config",
    "get_relaxation_config",
    "get_bound_config",
    "get_api_config",
]


def build_config(model_cls, **overrides):
    """
    构造单次调用的配置对象，None 值表示沿用默认

    Raises:
        ConfigError: 取值不合法
    """
    from pydantic import ValidationError
    from .errors import ConfigError

    values = {key: value for key, value in overrides.items() if value is not None}
    try:
        return model_cls(**values)
    except ValidationError as e:
        first = e.errors()[0]
        field = ".".join(str(part) for part in first["loc"]) or model_cls.__name__
        raise ConfigError(f"配置 {field} 不合法: {first['msg']}")


__all__.append("build_config")
