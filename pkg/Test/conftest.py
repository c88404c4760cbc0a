"""测试公共夹具：项目根目录加入 sys.path，较重的求解结果按会话缓存"""

import sys
import os
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

import pytest

from config import get_path
from VarCalc.direct_solver import SolverConfig, solve_lagrange_dp
from VarCalc.lagrangian_model import load_problem, make_lagrangian, make_terminal
from VarCalc.value_function import ValueGridConfig, compute_value_grid


@pytest.fixture(scope="session")
def problems_dir():
    return get_path("problems_dir")


@pytest.fixture(scope="session")
def load(problems_dir):
    """按文件名加载 Problems/ 下的问题"""
    return lambda name: load_problem(problems_dir / name)


@pytest.fixture(scope="session")
def quadratic_problem(load):
    return load("quadratic.json")


@pytest.fixture(scope="session")
def quadratic_solution(quadratic_problem):
    """L = u^2, [0, 1], 0 -> 1, N = 100, 801 个状态"""
    return solve_lagrange_dp(quadratic_problem, SolverConfig(steps=100, resolution=801))


@pytest.fixture(scope="session")
def double_well_solution(load):
    """斜率 +-1 恰好可表示：步长 1/64，格距 1/128"""
    problem = load("double_well.json")
    return solve_lagrange_dp(problem, SolverConfig(steps=64, resolution=129, half_width=0.5))


@pytest.fixture(scope="session")
def hopf_lax_config():
    return ValueGridConfig(tau=0.01, resolution=801, half_width=2.0, sub=10, s_max=4.0)


@pytest.fixture(scope="session")
def hopf_lax_grid(hopf_lax_config):
    """L = u^2, phi = x^2, T = 1，闭式解 V(t, x) = x^2 / (1 + t)"""
    return compute_value_grid(make_lagrangian("quadratic"), make_terminal("quadratic_phi"), 1.0,
                              hopf_lax_config)
