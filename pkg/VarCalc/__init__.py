"""
VarCalc - 变分问题的直接法求解与最优性条件检验

包含以下模块：
- lagrangian_model: Lagrangian / 终端代价目录、轨迹、作用量与问题文档
- convex_analysis: 下凸包络、离散共轭、Dini / 相依导数与次微分
- direct_solver: 格点动态规划求解固定端点问题、局部细化、重参数化检验
- necessary_conditions: 包络流水线与 DuBois-Reymond 条件的各个变体
- regularity: 显式先验 Lipschitz 界
- value_function: 值函数网格、松弛积分量与 HJ 检验
- cli: 命令行入口
"""

__version__ = "1.0.0"

from .errors import VarCalcError
from .lagrangian_model import (
    LagrangianSpec,
    ProblemInstance,
    TerminalCost,
    Trajectory,
    builtin_catalog,
    evaluate_action,
    load_problem,
    make_lagrangian,
    make_terminal,
)
from .direct_solver import SolverConfig, solve_lagrange_dp
from .necessary_conditions import EnvelopeConfig, run_dbr
from .regularity import bound_for, lipschitz_bound, verify_bound
from .value_function import ValueGridConfig, compute_value_grid, hj_residuals, inclusion_check

__all__ = [
    "__version__",
    "VarCalcError",
    "LagrangianSpec",
    "ProblemInstance",
    "TerminalCost",
    "Trajectory",
    "builtin_catalog",
    "evaluate_action",
    "load_problem",
    "make_lagrangian",
    "make_terminal",
    "SolverConfig",
    "solve_lagrange_dp",
    "EnvelopeConfig",
    "run_dbr",
    "bound_for",
    "lipschitz_bound",
    "verify_bound",
    "ValueGridConfig",
    "compute_value_grid",
    "hj_residuals",
    "inclusion_check",
]
