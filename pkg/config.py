"""
项目全局配置管理
使用相对路径和环境变量，避免硬编码绝对路径
所有数值默认值（网格、步长序列、容差、并行度）集中在此处，可通过 .env 或环境变量覆盖
"""

import os
from pathlib import Path
from dotenv import load_dotenv

# 加载 .env 文件（如果存在）
load_dotenv()


def _env_int(key: str, default: int) -> int:
    return int(os.getenv(key, str(default)))


def _env_float(key: str, default: float) -> float:
    return float(os.getenv(key, repr(default)))


# ============================================================================
# 项目路径配置
# ============================================================================

# 项目根目录（自动获取）
PROJECT_ROOT = Path(__file__).parent.resolve()

# 核心目录
PATHS = {
    # 示例问题（JSON）目录
    "problems_dir": PROJECT_ROOT / "Problems",

    # 命令行运行结果输出目录
    "runs_dir": PROJECT_ROOT / "runs",
}

# 支持环境变量覆盖路径
for key in PATHS.keys():
    env_key = f"VARCALC_{key.upper()}"
    if env_key in os.environ:
        PATHS[key] = Path(os.environ[env_key])

# ============================================================================
# 日志配置
# ============================================================================

LOGGING_CONFIG = {
    # CLI 的标准输出只放报告，日志默认安静，且只写 stderr
    "level": os.getenv("VARCALC_LOG_LEVEL", "WARNING").upper(),
    "format": "%(asctime)s - %(name)s - %(levelname)s - %(message)s",
}

# ============================================================================
# 并行配置
# ============================================================================

PARALLEL_CONFIG = {
    # 线程数上限，必须为正整数
    "threads": os.getenv("VARCALC_THREADS", "1"),
    # 每个任务块的最少条目数，避免切得过碎
    "min_chunk": _env_int("VARCALC_MIN_CHUNK", 64),
}

# ============================================================================
# 直接法求解器配置（固定端点 Lagrange 问题）
# ============================================================================

SOLVER_CONFIG = {
    "steps": _env_int("VARCALC_SOLVER_STEPS", 50),
    "resolution": _env_int("VARCALC_SOLVER_RESOLUTION", 401),
    # 状态网格半宽为 None 时按端点自动确定
    "half_width": None,
    "slope_policy": os.getenv("VARCALC_SLOPE_POLICY", "all"),
    "s_max": None,
    "tie_break": "lowest_index",
}

# ============================================================================
# 凸包络 / 必要条件配置
# ============================================================================

ENVELOPE_CONFIG = {
    # f(t, v) 的采样区间 (0, v_max]，v <= 1/2 处取 +inf
    "f_vmax": _env_float("VARCALC_F_VMAX", 4.0),
    "f_cells": _env_int("VARCALC_F_CELLS", 800),
    # g(t, v) 的采样区间 (0, 2)，内点个数
    "g_points": _env_int("VARCALC_G_POINTS", 399),
    # 凸化变体在 u 方向上的采样窗口
    "u_window": _env_float("VARCALC_U_WINDOW", 4.0),
    "u_points": _env_int("VARCALC_U_POINTS", 2001),
    # 几乎处处的离散代理：至少这个比例的节点满足条件
    "ae_fraction": _env_float("VARCALC_AE_FRACTION", 0.95),
    "tol_env": _env_float("VARCALC_TOL_ENV", 1e-6),
    "tol_dbr": _env_float("VARCALC_TOL_DBR", 1e-2),
    "tol_repar": _env_float("VARCALC_TOL_REPAR", 1e-9),
}

# ============================================================================
# 导数代理配置（Dini / 相依导数、次微分）
# ============================================================================

DERIVATIVE_CONFIG = {
    "h0": _env_float("VARCALC_H0", 1e-2),
    "levels": _env_int("VARCALC_LEVELS", 20),
    "tail": _env_int("VARCALC_TAIL", 5),
    "fan_width": _env_float("VARCALC_FAN_WIDTH", 1e-3),
    "tol_hull": _env_float("VARCALC_TOL_HULL", 1e-9),
    "tol_fan": _env_float("VARCALC_TOL_FAN", 1e-6),
    "tol_sub": _env_float("VARCALC_TOL_SUB", 1e-6),
    "lattice_points": _env_int("VARCALC_LATTICE_POINTS", 201),
    "lattice_pad": _env_float("VARCALC_LATTICE_PAD", 1.5),
}

# ============================================================================
# 值函数配置（Bolza 问题、HJ 检验）
# ============================================================================

VALUE_CONFIG = {
    "tau": _env_float("VARCALC_TAU", 1e-2),
    "resolution": _env_int("VARCALC_VALUE_RESOLUTION", 401),
    "half_width": _env_float("VARCALC_VALUE_HALF_WIDTH", 2.0),
    # 半拉格朗日子格点细分倍数，1 表示纯格点转移
    "sub": _env_int("VARCALC_SUB", 1),
    "s_max": _env_float("VARCALC_VALUE_SMAX", 4.0),
    # 网格相依导数：步长尾部宽度与方向扇形收缩率
    "grid_tail": _env_int("VARCALC_GRID_TAIL", 4),
    "fan_rate": _env_float("VARCALC_FAN_RATE", 0.5),
    "tol_hj": _env_float("VARCALC_TOL_HJ", 3e-2),
    "tol_grid_sub": _env_float("VARCALC_TOL_GRID_SUB", 1e-3),
    "tol_lsc": _env_float("VARCALC_TOL_LSC", 2e-2),
    # HJ 残差、包含关系检验的节点通过比例
    "hj_fraction": _env_float("VARCALC_HJ_FRACTION", 0.99),
    "inclusion_fraction": _env_float("VARCALC_INCLUSION_FRACTION", 0.95),
    "equality_fraction": _env_float("VARCALC_EQUALITY_FRACTION", 0.90),
    "tol_inclusion": _env_float("VARCALC_TOL_INCLUSION", 5e-2),
    "p_max": _env_float("VARCALC_P_MAX", 8.0),
    "p_points": _env_int("VARCALC_P_POINTS", 801),
    "u_max": _env_float("VARCALC_U_MAX", 10.0),
    "u_points": _env_int("VARCALC_VALUE_U_POINTS", 2001),
}

RELAXATION_CONFIG = {
    "h0": _env_float("VARCALC_RELAX_H0", 5e-2),
    "levels": _env_int("VARCALC_RELAX_LEVELS", 4),
    "tail": _env_int("VARCALC_RELAX_TAIL", 3),
    "inner_steps": _env_int("VARCALC_RELAX_INNER_STEPS", 4),
    "refine": _env_int("VARCALC_RELAX_REFINE", 8),
    "margin": _env_float("VARCALC_RELAX_MARGIN", 1.0),
    "u_points": _env_int("VARCALC_RELAX_U_POINTS", 41),
    "u_max": _env_float("VARCALC_RELAX_U_MAX", 4.0),
}

# ============================================================================
# Lipschitz 先验界配置
# ============================================================================

BOUND_CONFIG = {
    # 超线性证书所用的几何 s 网格
    "s_min": _env_float("VARCALC_S_MIN", 1e-3),
    "s_max": _env_float("VARCALC_S_MAX", 1e4),
    "s_points": _env_int("VARCALC_S_POINTS", 400),
    # co Theta 的均匀网格
    "co_points": _env_int("VARCALC_CO_POINTS", 40001),
    # 非径向规范的方向扇形
    "directions": _env_int("VARCALC_DIRECTIONS", 16),
}

# ============================================================================
# 后端API配置
# ============================================================================

API_CONFIG = {
    "host": os.getenv("VARCALC_API_HOST", "0.0.0.0"),
    "port": _env_int("VARCALC_API_PORT", 8000),
}

# ============================================================================
# 工具函数
# ============================================================================

def get_path(key: str) -> Path:
    """
    获取配置的路径

    Args:
        key: 路径键名，如 'problems_dir', 'runs_dir'

    Returns:
        Path对象

    Raises:
        KeyError: 如果key不存在
    """
    if key not in PATHS:
        raise KeyError(f"未知的路径配置: {key}。可用的配置: {list(PATHS.keys())}")

    path = PATHS[key]

    # 输出目录按需创建
    if key == "runs_dir":
        path.mkdir(parents=True, exist_ok=True)

    return path


def get_thread_count() -> int:
    """
    读取并校验 VARCALC_THREADS

    Returns:
        正整数线程数

    Raises:
        ValueError: 取值不是正整数
    """
    raw = os.getenv("VARCALC_THREADS", PARALLEL_CONFIG["threads"])
    try:
        threads = int(raw)
    except (TypeError, ValueError):
        raise ValueError(f"VARCALC_THREADS 必须是正整数，当前为: {raw!r}")
    if threads < 1:
        raise ValueError(f"VARCALC_THREADS 必须是正整数，当前为: {raw!r}")
    return threads


def get_solver_config() -> dict:
    return SOLVER_CONFIG.copy()


def get_envelope_config() -> dict:
    return ENVELOPE_CONFIG.copy()


def get_derivative_config() -> dict:
    return DERIVATIVE_CONFIG.copy()


def get_value_config() -> dict:
    return VALUE_CONFIG.copy()


def get_relaxation_config() -> dict:
    return RELAXATION_CONFIG.copy()


def get_bound_config() -> dict:
    return BOUND_CONFIG.copy()


def get_api_config() -> dict:
    return API_CONFIG.copy()


# ============================================================================
# 使用示例和测试
# ============================================================================

if __name__ == "__main__":
    print("=" * 70)
    print("项目全局配置信息")
    print("=" * 70)

    print(f"\n【项目根目录】")
    print(f"  {PROJECT_ROOT}")

    print(f"\n【路径配置】")
    for key, path in PATHS.items():
        exists = "✓" if path.exists() else "✗"
        print(f"  [{exists}] {key:20} -> {path}")

    for title, section in [
        ("并行配置", PARALLEL_CONFIG),
        ("求解器配置", SOLVER_CONFIG),
        ("包络配置", ENVELOPE_CONFIG),
        ("导数代理配置", DERIVATIVE_CONFIG),
        ("值函数配置", VALUE_CONFIG),
        ("松弛积分量配置", RELAXATION_CONFIG),
        ("先验界配置", BOUND_CONFIG),
    ]:
        print(f"\n【{title}】")
        for key, value in section.items():
            print(f"  {key:20} -> {value}")

    print("\n" + "=" * 70)
    print("配置加载成功！")
    print("=" * 70)
