"""格点动态规划求解器测试"""

import itertools
from dataclasses import replace

import numpy as np
import pytest

from VarCalc.direct_solver import (
    SolverConfig,
    empirical_lipschitz,
    reparametrization_gain,
    refine_local,
    solve_lagrange_dp,
)
from VarCalc.errors import (
    ConfigError,
    CostOverflow,
    EndpointOutsideGrid,
    MassMismatch,
    SlopeOutOfDomain,
)
from VarCalc.lagrangian_model import (
    ProblemInstance,
    Trajectory,
    as_vector,
    evaluate_action,
    load_problem,
    make_lagrangian,
)


def _problem(lagrangian="quadratic", xa=0.0, xb=1.0, a=0.0, b=1.0):
    return load_problem({"kind": "lagrange", "lagrangian": lagrangian,
                         "a": a, "b": b, "xa": [xa], "xb": [xb]})


# ============================================================================
# 与穷举的一致性
# ============================================================================

@pytest.mark.parametrize("seed", range(20))
def test_dp_matches_exhaustive_search(seed):
    """小规模随机实例（N <= 6，状态数 <= 9）：格点最优作用量与穷举所有内部路径的最小值按位相等"""
    rng = np.random.default_rng(seed)
    name = ["quadratic", "double_well", "double_well_x2", "abs", "piecewise_x"][seed % 5]
    steps = int(rng.integers(2, 7))
    resolution = int(rng.choice([5, 7, 9]))
    if resolution ** (steps - 1) > 10000:
        resolution = 5
    xa, xb = rng.uniform(-0.5, 0.5, size=2)
    problem = _problem(name, float(xa), float(xb))
    result = solve_lagrange_dp(problem, SolverConfig(steps=steps, resolution=resolution, half_width=1.0))

    nodes = result.lattice.nodes
    start, _ = result.lattice.snap(problem.xa)
    end, _ = result.lattice.snap(problem.xb)
    step = (problem.b - problem.a) / steps
    best = np.inf
    for inner in itertools.product(range(nodes.shape[0]), repeat=steps - 1):
        path = [start, *inner, end]
        traj = Trajectory(t0=problem.a, step=step, states=nodes[path])
        best = min(best, evaluate_action(traj, problem.lagrangian))

    assert result.action == best
    assert evaluate_action(result.trajectory, problem.lagrangian) == result.action


def test_unit_lagrangian_every_path_costs_interval_length():
    """L = 1：每条路径的作用量都是 b - a，全部并列时取下标最小的前驱"""
    problem = ProblemInstance(kind="lagrange", lagrangian=make_lagrangian("unit"), a=0.0, b=1.0,
                              xa=as_vector([0.0], 1), xb=as_vector([0.5], 1))
    steps, resolution = 10, 21
    result = solve_lagrange_dp(problem, SolverConfig(steps=steps, resolution=resolution))
    assert result.action == pytest.approx(1.0, rel=1e-12)

    nodes = result.lattice.nodes
    rng = np.random.default_rng(3)
    start, _ = result.lattice.snap(problem.xa)
    end, _ = result.lattice.snap(problem.xb)
    for _ in range(50):
        path = [start, *rng.integers(0, resolution, size=steps - 1), end]
        traj = Trajectory(t0=0.0, step=0.1, states=nodes[path])
        assert evaluate_action(traj, problem.lagrangian) == result.action

    np.testing.assert_array_equal(result.trajectory.states[1:-1, 0], nodes[0, 0])
    assert result.ties == (steps - 1) * (resolution - 1)


def test_endpoints_are_snapped_lattice_nodes():
    result = solve_lagrange_dp(_problem(xa=0.013, xb=0.987), SolverConfig(steps=4, resolution=11))
    assert result.snap_distance > 0
    nodes = result.lattice.nodes[:, 0]
    assert result.trajectory.states[0, 0] in nodes
    assert result.trajectory.states[-1, 0] in nodes


# ============================================================================
# 已知极小元
# ============================================================================

def test_quadratic_minimizer(quadratic_solution):
    """L = u^2: 作用量约为 1，轨迹斜率约为 1"""
    assert quadratic_solution.action <= 1.0 + 5e-3
    assert quadratic_solution.grid_global
    assert empirical_lipschitz(quadratic_solution.trajectory) == pytest.approx(1.0, abs=5e-2)
    np.testing.assert_allclose(quadratic_solution.trajectory.states[:, 0],
                               quadratic_solution.trajectory.times, atol=5e-3)


def test_double_well_zigzag(double_well_solution):
    """斜率 +-1 可在格点上表示，作用量接近 0"""
    assert double_well_solution.action <= 1e-2
    slopes = np.abs(double_well_solution.trajectory.slopes[:, 0])
    assert np.mean(np.isclose(slopes, 1.0)) >= 0.95


def test_abs_problem_action():
    result = solve_lagrange_dp(_problem("abs"), SolverConfig(steps=40, resolution=321))
    assert result.action == pytest.approx(2.0, abs=1e-2)


def test_report_fields(quadratic_solution):
    report = quadratic_solution.to_report()
    assert set(report) == {"action", "lipschitz", "ties", "snap_distance"}
    assert report["action"] == quadratic_solution.action


# ============================================================================
# 配置与错误
# ============================================================================

def test_capped_slopes():
    problem = _problem()
    capped = solve_lagrange_dp(problem, SolverConfig(steps=10, resolution=81,
                                                     slope_policy="capped", s_max=2.0))
    assert capped.action <= 1.0 + 1e-2
    with pytest.raises(CostOverflow):
        solve_lagrange_dp(problem, SolverConfig(steps=10, resolution=81, slope_policy="capped", s_max=0.5))


def test_capped_policy_needs_cap():
    with pytest.raises(ValueError):
        SolverConfig(slope_policy="capped", s_max=None)


def test_endpoint_outside_grid():
    with pytest.raises(EndpointOutsideGrid):
        solve_lagrange_dp(_problem(), SolverConfig(steps=4, resolution=11, center=[5.0], half_width=0.5))


def test_bolza_problem_is_rejected(load):
    with pytest.raises(ConfigError):
        solve_lagrange_dp(load("quadratic_bolza.json"), SolverConfig(steps=4, resolution=11))


def test_result_is_independent_of_thread_count():
    problem = _problem("double_well_x2", 0.0, 0.0)
    one = solve_lagrange_dp(problem, SolverConfig(steps=16, resolution=65, threads=1))
    four = solve_lagrange_dp(problem, SolverConfig(steps=16, resolution=65, threads=4))
    assert one.action == four.action
    np.testing.assert_array_equal(one.trajectory.states, four.trajectory.states)
    np.testing.assert_array_equal(one.tie_counts, four.tie_counts)


# ============================================================================
# 局部细化
# ============================================================================

def test_refine_local_never_increases_action():
    problem = _problem("abs")
    coarse = solve_lagrange_dp(problem, SolverConfig(steps=8, resolution=9))
    refined = refine_local(coarse, sweeps=4)
    assert refined.action <= coarse.action
    assert not refined.grid_global
    np.testing.assert_array_equal(refined.trajectory.states[0], coarse.trajectory.states[0])
    np.testing.assert_array_equal(refined.trajectory.states[-1], coarse.trajectory.states[-1])


# ============================================================================
# 重参数化
# ============================================================================

def test_reparametrization_gain_is_nonnegative(quadratic_solution):
    """1000 次随机 psi'，增益均不小于 -1e-9"""
    traj = quadratic_solution.trajectory
    rng = np.random.default_rng(7)
    for _ in range(1000):
        r = rng.uniform(-1.0, 1.0, size=traj.N)
        psi = 1.0 + 0.2 * (r - r.mean())
        assert reparametrization_gain(traj, quadratic_solution.lagrangian, psi) >= -1e-9


def test_reparametrization_rejects_bad_slopes(quadratic_solution):
    traj = quadratic_solution.trajectory
    L = quadratic_solution.lagrangian
    psi = np.ones(traj.N)
    assert reparametrization_gain(traj, L, psi) == 0.0
    bad = psi.copy()
    bad[0], bad[1] = 0.4, 1.6
    with pytest.raises(SlopeOutOfDomain):
        reparametrization_gain(traj, L, bad)
    with pytest.raises(MassMismatch):
        reparametrization_gain(traj, L, 1.1 * psi)


def test_reparametrization_gain_with_infinite_actions():
    """两侧作用量都为 +inf 时增益为 0 而不是 nan"""
    blocked = replace(make_lagrangian("quadratic"),
                      evaluator=lambda x, u: np.full(np.broadcast_shapes(np.shape(x)[:-1], np.shape(u)[:-1]),
                                                     np.inf))
    traj = Trajectory(t0=0.0, step=0.25, states=np.linspace(0.0, 1.0, 5))
    psi = np.array([0.8, 1.2, 1.2, 0.8])
    assert reparametrization_gain(traj, blocked, psi) == 0.0
