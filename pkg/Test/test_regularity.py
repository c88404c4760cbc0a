"""先验 Lipschitz 界测试"""

import numpy as np
import pytest

from VarCalc.direct_solver import solve_lagrange_dp
from VarCalc.errors import GaugeTooWeak, HypothesisFailed
from VarCalc.lagrangian_model import DataBounds, GrowthGauge, Trajectory, load_problem, make_lagrangian
from VarCalc.regularity import bound_for, distance_to_origin, lipschitz_bound, verify_bound

LAGRANGE_PROBLEMS = ["quadratic.json", "double_well.json", "double_well_x2.json", "abs.json",
                     "piecewise_x.json"]


def _bounds(A=1.0, B=1.05, alpha=1.0, beta=1.0):
    return DataBounds(A=A, B=B, alpha=alpha, beta=beta)


# ============================================================================
# 常数链
# ============================================================================

def test_quadratic_constant_chain():
    """Theta = Psi = u^2, A = 1, B = 1.05: 连续情形 K 约为 94.25，网格上 M2 向上取整后略大"""
    trace = bound_for(make_lagrangian("quadratic"), _bounds())
    assert trace.M1 == pytest.approx(2.0 * np.sqrt(1.05), rel=1e-2)
    assert trace.R == pytest.approx(1.0 + trace.M1)
    assert np.sqrt(1.05) < trace.M2 <= 1.05 * np.sqrt(1.05)
    assert trace.c_lb < 0
    assert trace.K == trace.C
    assert 94.0 <= trace.K <= 96.0


@pytest.mark.parametrize("name", LAGRANGE_PROBLEMS)
def test_bound_holds_on_sample_problems(load, name):
    """每个样例问题：K 有限且不小于 2，格点最优解的经验斜率不超过 K"""
    problem = load(name)
    trace = bound_for(problem.lagrangian, problem.bounds)
    assert np.isfinite(trace.K) and trace.K >= 2.0
    report = verify_bound(problem, solve_lagrange_dp(problem).trajectory, trace)
    assert report.passed
    assert report.margin == pytest.approx(trace.K - report.empirical)


def test_bound_is_monotone_in_data():
    L = make_lagrangian("quadratic")
    by_B = [bound_for(L, _bounds(B=B)).K for B in (0.5, 1.0, 2.0, 4.0)]
    assert by_B == sorted(by_B)
    by_beta = [bound_for(L, _bounds(alpha=0.5, beta=beta)).K for beta in (0.5, 1.0, 2.0)]
    assert by_beta == sorted(by_beta)


def test_bound_is_monotone_in_radius_and_local_bound():
    """A 增大或 Psi 加倍都不会让 K 变小"""
    L = make_lagrangian("quadratic")
    by_A = [bound_for(L, _bounds(A=A)).K for A in (0.0, 0.5, 1.0, 2.0)]
    assert by_A == sorted(by_A)

    base = lipschitz_bound(L.gauge, L.local_bound, _bounds()).K
    doubled = lipschitz_bound(L.gauge, lambda R: 2.0 * L.local_bound(R), _bounds()).K
    assert doubled >= base


def test_zero_action_budget():
    """B = 0：积分界退化为 s_min * beta，M2 取网格首点，K 仍有限"""
    L = make_lagrangian("quadratic")
    trace = bound_for(L, _bounds(B=0.0))
    assert trace.M1 == pytest.approx(1e-3)
    assert trace.M2 == pytest.approx(1e-3)
    # 阈值 = Psi(R + 1) + 3 Psi(R + 2 M2) 约 7.02，co Theta(s)/s = s
    assert trace.K == pytest.approx(7.0, abs=0.25)
    assert trace.K <= bound_for(L, _bounds(B=0.5)).K


def test_stronger_gauge_gives_smaller_bound():
    L = make_lagrangian("quadratic")
    K = []
    for scale in (0.25, 0.5, 1.0):
        gauge = GrowthGauge(name=f"{scale}u^2", n=1, evaluator=lambda u, s=scale: s * L.gauge(u))
        K.append(lipschitz_bound(gauge, L.local_bound, _bounds()).K)
    assert K == sorted(K, reverse=True)


def test_weak_gauge_is_rejected():
    zero = GrowthGauge(name="zero", n=1, evaluator=lambda u: np.zeros(np.shape(u)[:-1]))
    with pytest.raises(GaugeTooWeak):
        lipschitz_bound(zero, lambda R: R * R, _bounds())
    with pytest.raises(GaugeTooWeak):
        bound_for(make_lagrangian("quadratic"), _bounds(alpha=0.0))


# ============================================================================
# 前提检查
# ============================================================================

def test_distance_to_origin():
    assert distance_to_origin(Trajectory(t0=0.0, step=1.0, states=[-1.0, 1.0])) == 0.0
    square = Trajectory(t0=0.0, step=1.0, states=[[1.0, -1.0], [1.0, 1.0]])
    assert distance_to_origin(square) == pytest.approx(1.0)


def test_verify_reports_failed_hypotheses(quadratic_solution):
    doc = {"kind": "lagrange", "lagrangian": "quadratic", "a": 0.0, "b": 1.0, "xa": [0.0], "xb": [1.0],
           "bounds": {"A": 1.0, "B": 0.5, "alpha": 1.0, "beta": 1.0}}
    problem = load_problem(doc)
    trace = bound_for(problem.lagrangian, problem.bounds)
    with pytest.raises(HypothesisFailed) as info:
        verify_bound(problem, quadratic_solution.trajectory, trace)
    assert info.value.condition == "action_budget"

    far = Trajectory(t0=0.0, step=0.1, states=np.linspace(2.0, 3.0, 11))
    with pytest.raises(HypothesisFailed) as info:
        verify_bound(problem, far, trace)
    assert info.value.condition == "distance_to_origin"

    del doc["bounds"]
    with pytest.raises(HypothesisFailed):
        verify_bound(load_problem(doc), quadratic_solution.trajectory, trace)


def test_failed_hypothesis_messages_name_the_condition():
    doc = {"kind": "lagrange", "lagrangian": "quadratic", "a": 0.0, "b": 1.0, "xa": [0.0], "xb": [0.0],
           "bounds": {"A": 1.0, "B": 1.0, "alpha": 1.0, "beta": 1.0}}
    problem = load_problem(doc)
    trace = bound_for(problem.lagrangian, problem.bounds)
    resting = Trajectory(t0=0.0, step=0.2, states=np.zeros(11))
    with pytest.raises(HypothesisFailed) as info:
        verify_bound(problem, resting, trace)
    assert info.value.condition == "interval_length"
    assert "alpha <= b - a <= beta" in str(info.value)
    assert str(info.value).startswith("[interval_length] 前提")

    del doc["bounds"]
    with pytest.raises(HypothesisFailed) as info:
        verify_bound(load_problem(doc), resting, trace)
    assert info.value.condition == "bounds_declared"
