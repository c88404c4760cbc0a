"""包络流水线与 DuBois-Reymond / Erdmann 条件测试"""

from dataclasses import replace

import numpy as np
import pytest

from VarCalc.errors import FlagMissing, HypothesisFailed, NotReducible
from VarCalc.lagrangian_model import Trajectory, make_lagrangian
from VarCalc.necessary_conditions import (
    EnvelopeConfig,
    build_pipeline,
    dbr_clarke,
    dbr_convexified,
    dbr_subdifferential,
    dbr_superdifferential,
    envelope_identity,
    erdmann_interval_test,
    f_grid,
    g_grid,
    intervals_from_f,
    intervals_from_g,
    run_dbr,
)


def _kinked_path():
    """0 -> 1：前半段斜率 2，后半段静止"""
    return Trajectory(t0=0.0, step=0.1, states=[0.0, 0.2, 0.4, 0.6, 0.8, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0])


# ============================================================================
# 网格与流水线
# ============================================================================

def test_grids_contain_one_exactly():
    cfg = EnvelopeConfig()
    assert 1.0 in f_grid(cfg)
    assert 1.0 in g_grid(cfg)
    assert f_grid(cfg).min() > 0.0
    assert g_grid(cfg).max() < 2.0


def test_double_well_envelope_identity(double_well_solution):
    """f_i(1) = f0_i(1) 在至少 95% 的节点上成立"""
    pipe = build_pipeline(double_well_solution.trajectory, double_well_solution.lagrangian)
    result = envelope_identity(pipe)
    assert result["passed"]
    assert result["pass_fraction"] >= 0.95


def test_intervals_agree_between_f_and_g(quadratic_solution):
    pipe = build_pipeline(quadratic_solution.trajectory, quadratic_solution.lagrangian)
    np.testing.assert_allclose(intervals_from_f(pipe), intervals_from_g(pipe), atol=2e-2)


# ============================================================================
# Erdmann 区间
# ============================================================================

def test_erdmann_on_quadratic_minimizer(quadratic_solution):
    """L = u^2, y = t: c = L - L_u u = -1"""
    report = run_dbr("erdmann", quadratic_solution.trajectory, quadratic_solution.lagrangian)
    assert report.passed
    assert report.c == pytest.approx(-1.0, abs=1e-2)
    assert report.enlargement_eps == 0.0


def test_erdmann_on_double_well(double_well_solution):
    report = run_dbr("erdmann", double_well_solution.trajectory, double_well_solution.lagrangian)
    assert report.passed
    assert report.interval_lo <= 0.0 <= report.interval_hi
    assert report.c == pytest.approx(0.0, abs=1e-2)


def test_erdmann_reports_enlargement_on_kinked_path():
    pipe = build_pipeline(_kinked_path(), make_lagrangian("quadratic"))
    report = erdmann_interval_test(pipe)
    assert not report.passed
    assert report.interval_lo > report.interval_hi
    assert report.enlargement_eps > 1.0
    assert report.pass_fraction < 1.0


def test_erdmann_on_unit_lagrangian():
    """L = 1：g 为常数，区间退化为 {1}，c = 1"""
    traj = Trajectory(t0=0.0, step=0.1, states=np.linspace(0.0, 1.0, 11))
    report = run_dbr("erdmann", traj, make_lagrangian("unit"))
    assert report.passed
    assert report.c == 1.0
    assert report.interval_lo == report.interval_hi == 1.0
    assert report.enlargement_eps == 0.0


def test_perturbed_minimizer_is_rejected(quadratic_solution):
    """把极小元的一个内部节点移动 10 个格距：Erdmann 交集为空，凸化残差放大十倍以上"""
    traj = quadratic_solution.trajectory
    L = quadratic_solution.lagrangian
    states = traj.states.copy()
    states[traj.N // 2] += 10 * quadratic_solution.lattice.spacing[0]
    moved = traj.with_states(states)

    erdmann = run_dbr("erdmann", moved, L)
    assert not erdmann.passed
    assert erdmann.interval_lo > erdmann.interval_hi
    assert erdmann.enlargement_eps > 1.0

    good = dbr_convexified(traj, L)
    bad = dbr_convexified(moved, L)
    assert bad.residual > 10.0 * max(good.residual, 1e-12)
    assert bad.worst_node in (traj.N // 2 - 1, traj.N // 2)


def test_summary_hides_node_arrays(quadratic_solution):
    report = run_dbr("erdmann", quadratic_solution.trajectory, quadratic_solution.lagrangian)
    summary = report.summary()
    assert "costates" not in summary and "node_lo" not in summary
    assert summary["variant"] == "erdmann"


# ============================================================================
# DuBois-Reymond 变体
# ============================================================================

def test_convexified_on_quadratic(quadratic_solution):
    report = dbr_convexified(quadratic_solution.trajectory, quadratic_solution.lagrangian)
    assert report.passed
    assert report.c == pytest.approx(-1.0, abs=1e-2)
    assert report.residual <= 1e-2
    assert report.hamiltonian_residual <= 1e-2


def test_convexified_on_double_well(double_well_solution):
    report = dbr_convexified(double_well_solution.trajectory, double_well_solution.lagrangian)
    assert report.passed
    assert report.c == pytest.approx(0.0, abs=1e-2)


def test_convexified_needs_contact():
    """静止轨迹上 L(0) = 1 而凸化为 0"""
    still = Trajectory(t0=0.0, step=0.1, states=np.zeros(11))
    with pytest.raises(HypothesisFailed) as info:
        dbr_convexified(still, make_lagrangian("double_well"))
    assert info.value.condition == "convexification_contact"


@pytest.mark.parametrize("variant", ["subdiff", "superdiff", "clarke"])
def test_gradient_variants_on_quadratic(quadratic_solution, variant):
    report = run_dbr(variant, quadratic_solution.trajectory, quadratic_solution.lagrangian)
    assert report.passed
    assert report.vacuous_fraction == 0.0
    assert report.c == pytest.approx(-1.0, abs=1e-2)


def _kinked_well(x, u):
    """L = ||u| - 1|：u = 0 处为凹折点，u = +-1 处为凸折点"""
    shape = np.broadcast_shapes(np.shape(x)[:-1], np.shape(u)[:-1])
    return np.broadcast_to(np.abs(np.abs(np.asarray(u)[..., 0]) - 1.0), shape)


def test_concave_patch_reports_vacuous_nodes():
    """前三段静止（凹折点，次微分为空），后四段斜率 1（凸折点，超微分为空）"""
    L = replace(make_lagrangian("abs"), evaluator=_kinked_well, name="kinked_well")
    traj = Trajectory(t0=0.0, step=0.25, states=[0.0, 0.0, 0.0, 0.0, 0.25, 0.5, 0.75, 1.0])

    sub = dbr_subdifferential(traj, L)
    assert sub.vacuous == [True, True, True, False, False, False, False]
    assert sub.vacuous_fraction == pytest.approx(3 / 7)
    assert sub.passed
    assert sub.c == pytest.approx(0.0, abs=1e-6)

    sup = dbr_superdifferential(traj, L)
    assert sup.vacuous == [False, False, False, True, True, True, True]
    assert sup.passed
    assert sup.c == pytest.approx(1.0, abs=1e-6)


def test_convexified_error_halves_under_refinement():
    """L = u^2, y = t：u 网格与时间网格同时加密一倍，c 的误差（约为 u 网格步长）至少减半"""
    errors = []
    for N, u_points in ((16, 161), (32, 321), (64, 641)):
        traj = Trajectory(t0=0.0, step=1.0 / N, states=np.arange(N + 1) / N)
        report = dbr_convexified(traj, make_lagrangian("quadratic"), EnvelopeConfig(u_points=u_points))
        assert report.passed
        assert report.residual <= 1e-12
        errors.append(abs(report.c + 1.0))
    assert errors[0] == pytest.approx(0.05, rel=1e-6)
    for coarse, fine in zip(errors, errors[1:]):
        assert fine <= 0.5 * coarse * (1.0 + 1e-6)


def test_clarke_on_abs_lagrangian():
    """L = |u| + u^2, y = t: 广义梯度为 3，c = 2 - 3"""
    traj = Trajectory(t0=0.0, step=0.05, states=np.linspace(0.0, 1.0, 21))
    report = dbr_clarke(traj, make_lagrangian("abs"))
    assert report.passed
    assert report.c == pytest.approx(-1.0, abs=1e-3)


def test_variants_check_flags():
    traj = Trajectory(t0=0.0, step=0.1, states=np.linspace(0.0, 1.0, 11))
    plain = replace(make_lagrangian("quadratic"), lipschitz_in_u=False,
                    semiconvex_in_u=False, differentiable_in_u=False)
    with pytest.raises(FlagMissing):
        dbr_clarke(traj, plain)
    with pytest.raises(FlagMissing):
        dbr_subdifferential(traj, plain)


def test_non_radial_lagrangian_is_not_reducible():
    L = replace(make_lagrangian("quadratic", 2), radial_in_u=False)
    traj = Trajectory(t0=0.0, step=0.5, states=[[0.0, 0.0], [0.5, 0.5], [1.0, 1.0]])
    with pytest.raises(NotReducible):
        dbr_convexified(traj, L, EnvelopeConfig(threads=1))


def test_unknown_variant(quadratic_solution):
    with pytest.raises(ValueError):
        run_dbr("weierstrass", quadratic_solution.trajectory, quadratic_solution.lagrangian)
