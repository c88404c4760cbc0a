"""值函数网格、松弛积分量、HJ 检验、比较原理与微分包含测试"""

import math
from dataclasses import replace

import numpy as np
import pytest

from VarCalc.errors import AllInfiniteLayer, DimensionMismatch, NotReducible, TrajectoryOffGrid
from VarCalc.lagrangian_model import Trajectory, evaluate_action, make_lagrangian, make_terminal
from VarCalc.value_function import (
    RelaxationConfig,
    RelaxedIntegrands,
    Region,
    ValueGridConfig,
    check_initial_attainment,
    comparison_check,
    compute_value_grid,
    dini_along_trajectory,
    dini_monotonicity,
    estimate_L_minus,
    estimate_L_plus,
    grid_contingent,
    hamiltonians,
    hj_residuals,
    hopf_lax_quadratic,
    inclusion_check,
    interpolate,
    lagrange_consistency,
    lipschitz_estimate_V,
    optimal_rollout,
)


@pytest.fixture(scope="module")
def rollout(hopf_lax_grid):
    """x = 0.5 出发的最优轨迹"""
    return optimal_rollout(hopf_lax_grid, [0.5])


# ============================================================================
# 网格计算
# ============================================================================

def test_hopf_lax_closed_form(hopf_lax_grid):
    """|x| <= 1、t in [0.25, 1] 上与 x^2 / (1 + t) 之差不超过 2e-2"""
    grid = hopf_lax_grid
    x = grid.nodes[:, 0]
    inside = np.abs(x) <= 1.0
    for k in range(grid.K + 1):
        t = grid.times[k]
        if t < 0.25:
            continue
        np.testing.assert_allclose(grid.V[k, inside], hopf_lax_quadratic(t, x[inside]), atol=2e-2)


def test_first_layer_is_terminal_cost(hopf_lax_grid):
    np.testing.assert_array_equal(hopf_lax_grid.V[0], hopf_lax_grid.phi)
    assert hopf_lax_grid.K == 100
    assert hopf_lax_grid.tau == pytest.approx(0.01)


def test_indicator_terminal_cost(hopf_lax_config):
    """phi 为原点的示性函数时 V(t, x) = x^2 / t"""
    grid = compute_value_grid(make_lagrangian("quadratic"), make_terminal("indicator_point", point=[0.0]),
                              1.0, hopf_lax_config)
    assert grid.value(grid.K, [0.5])[0] == pytest.approx(0.25, abs=2e-2)
    report = check_initial_attainment(grid)
    assert report.exact_initial
    assert report.skipped_infinite == grid.nodes.shape[0] - 1
    assert report.passed


def test_unreachable_terminal_cost_is_rejected(hopf_lax_config):
    phi = make_terminal("indicator_point", point=[0.0013])
    with pytest.raises(AllInfiniteLayer):
        compute_value_grid(make_lagrangian("quadratic"), phi, 1.0, hopf_lax_config)
    with pytest.raises(DimensionMismatch):
        compute_value_grid(make_lagrangian("quadratic"), make_terminal("quadratic_phi", 2), 1.0,
                           hopf_lax_config)


def test_interpolation(hopf_lax_grid):
    grid = hopf_lax_grid
    lattice = grid.lattice
    layer = grid.nodes[:, 0] * 3.0
    nodes = grid.nodes[::97]
    np.testing.assert_array_equal(interpolate(layer, lattice, nodes), layer[::97])
    np.testing.assert_allclose(interpolate(layer, lattice, np.array([[0.1234]])), [0.3702], atol=1e-12)
    assert np.isinf(interpolate(layer, lattice, np.array([[5.0]]))[0])
    holes = layer.copy()
    holes[401] = np.inf
    values = interpolate(holes, lattice, np.array([[lattice.axes[0][400]], [lattice.axes[0][400] + 0.001]]))
    assert np.isfinite(values[0]) and np.isinf(values[1])


def test_lagrange_consistency():
    """sub = 1 时值函数与直接法在同一转移核上给出相同的最优值"""
    cfg = ValueGridConfig(tau=0.05, resolution=81, half_width=2.0, sub=1, s_max=4.0)
    grid = compute_value_grid(make_lagrangian("double_well_x2"), make_terminal("quadratic_phi"), 1.0, cfg)
    value, direct = lagrange_consistency(grid, [0.5])
    assert value == pytest.approx(direct, rel=1e-12, abs=1e-12)


def test_initial_attainment(hopf_lax_grid):
    report = check_initial_attainment(hopf_lax_grid)
    assert report.exact_initial and report.lsc_proxy
    assert report.cone_min_margin >= 0.0
    assert report.passed


def test_lipschitz_table(hopf_lax_grid):
    cells = lipschitz_estimate_V(hopf_lax_grid, Region(t_min=0.25, x_min=-1.0, x_max=1.0))
    assert len(cells) == 4
    for cell in cells:
        assert 0.0 < cell.lipschitz <= 2.5
        assert cell.lipschitz == max(cell.lipschitz_t, cell.lipschitz_x)


# ============================================================================
# Hamilton 量与松弛积分量
# ============================================================================

def test_hamiltonian_of_quadratic():
    p = np.linspace(-2.0, 2.0, 41)
    table = hamiltonians(make_lagrangian("quadratic"), [0.3], p)
    np.testing.assert_allclose(table.H.values, p * p / 4.0, atol=5e-3)
    assert table.relaxation_mode == "continuous"
    assert table.H_plus is table.H and table.H_minus is table.H
    assert not table.truncated


@pytest.mark.parametrize("u", [-1.0, -0.5, 0.5, 1.0])
def test_relaxed_integrands_of_quadratic(u):
    L = make_lagrangian("quadratic")
    assert estimate_L_plus(L, [0.2], [u]).value == pytest.approx(u * u, abs=2e-2)
    assert estimate_L_minus(L, [0.2], [u]).value == pytest.approx(u * u, abs=2e-2)


def test_relaxed_integrand_of_double_well_at_rest():
    """零速度处 L- 可由 +-1 的锯齿达到 0"""
    estimate = estimate_L_minus(make_lagrangian("double_well"), [0.0], [0.0])
    assert estimate.value <= 1e-2
    assert estimate.values.shape == estimate.steps.shape


def test_relaxed_integrands_across_discontinuity():
    """L = u^2 (1 + 1[x < 0]) 在 x = 0：来自左侧的 L+ 为 2，去往右侧的 L- 为 1"""
    L = make_lagrangian("piecewise_x")
    assert estimate_L_plus(L, [0.0], [1.0]).value == pytest.approx(2.0, abs=2e-2)
    assert estimate_L_minus(L, [0.0], [1.0]).value == pytest.approx(1.0, abs=2e-2)


def test_relaxed_integrand_modes():
    quadratic = RelaxedIntegrands(make_lagrangian("quadratic"))
    assert quadratic.mode == "continuous"
    np.testing.assert_array_equal(quadratic.plus([0.3], [1.0, 2.0]), [1.0, 4.0])
    np.testing.assert_array_equal(quadratic.minus([0.3], [-3.0]), [9.0])
    assert RelaxedIntegrands(make_lagrangian("piecewise_x")).mode == "estimated"
    with pytest.raises(NotReducible):
        estimate_L_plus(make_lagrangian("quadratic", 2), [0.0, 0.0], [1.0, 0.0])


def test_relaxation_config_tail():
    with pytest.raises(ValueError):
        RelaxationConfig(levels=2, tail=4)


# ============================================================================
# 网格相依导数与 HJ 残差
# ============================================================================

def test_grid_contingent(hopf_lax_grid):
    grid = hopf_lax_grid
    x = np.array([grid.lattice.axes[0][500]])
    lower, upper = grid_contingent(grid.V, grid.lattice, grid.tau, grid.K, x, 1, np.array([0.0]), grid.cfg)
    assert math.isnan(lower) and math.isnan(upper)
    lower, upper = grid_contingent(grid.V, grid.lattice, grid.tau, 50, x, -1, np.array([0.0]), grid.cfg)
    # 沿 (-1, 0)：-V_t = x^2 / (1 + t)^2
    expected = x[0] ** 2 / (1.0 + grid.times[50]) ** 2
    assert lower <= upper
    assert lower == pytest.approx(expected, abs=5e-2)


def test_hj_residuals_on_hopf_lax(hopf_lax_grid):
    report = hj_residuals(hopf_lax_grid, region=Region(t_min=0.25, x_min=-1.0, x_max=1.0), stride=40)
    assert report.points_tested > 0
    assert report.relaxation_mode == "continuous"
    assert report.supersolution_pass_fraction >= 0.95
    assert report.subsolution_pass_fraction >= 0.95
    assert len(report.worst) <= 40


# ============================================================================
# Dini 单调性与比较原理
# ============================================================================

def test_dini_monotonicity():
    t = np.linspace(0.0, 1.0, 11)
    report = dini_monotonicity(t, 1.0 - t)
    assert report.premise and report.holds
    rising = dini_monotonicity(t, t * t, g=2.0 * t + 0.2)
    assert rising.premise and rising.holds
    assert rising.integral_bound >= rising.increment


def test_dini_along_rollout(hopf_lax_grid, rollout):
    report = dini_along_trajectory(hopf_lax_grid, rollout)
    assert report.holds


def test_comparison_dominated(hopf_lax_grid):
    """W = max(phi - 5t, 0) 是下解且不超过 V"""
    grid = hopf_lax_grid
    W = np.maximum(grid.phi[None, :] - 5.0 * grid.times[:, None], 0.0)
    verdict = comparison_check(W, grid, region=Region(x_min=-1.0, x_max=1.0), stride=8)
    assert verdict.verdict == "Dominated"
    assert verdict.label == "sampled-verified"


def test_comparison_rejects_bad_candidates(hopf_lax_grid):
    grid = hopf_lax_grid
    shifted = comparison_check(grid.V + 0.05, grid)
    assert shifted.verdict == "NotAdmissible"
    growing = grid.phi[None, :] + 3.0 * grid.times[:, None]
    violated = comparison_check(growing, grid, region=Region(x_min=-1.0, x_max=1.0), stride=8)
    assert violated.verdict == "SubsolutionViolated"
    assert violated.first_violation is not None


def test_comparison_labels_planar_fallback():
    """n = 2：L 连续时 L+ = L，标签不变；L 不连续时标签注明以 L 代替 L+"""
    cfg = ValueGridConfig(tau=0.125, resolution=9, half_width=1.0, sub=1, s_max=4.0)
    phi = make_terminal("quadratic_phi", 2)
    smooth = compute_value_grid(make_lagrangian("quadratic", 2), phi, 1.0, cfg)
    assert comparison_check(smooth.V + 0.05, smooth).label == "sampled-verified"

    rough = compute_value_grid(replace(make_lagrangian("quadratic", 2), continuous=False), phi, 1.0, cfg)
    verdict = comparison_check(rough.V + 0.05, rough)
    assert verdict.verdict == "NotAdmissible"
    assert verdict.label == "sampled-verified (L-fallback for L+)"


# ============================================================================
# 最优轨迹与微分包含
# ============================================================================

def test_rollout_attains_value(hopf_lax_grid, rollout):
    grid = hopf_lax_grid
    assert rollout.N == grid.K
    total = evaluate_action(rollout, grid.lagrangian) + float(grid.terminal(rollout.states[-1:])[0])
    assert total == pytest.approx(float(grid.value(grid.K, [0.5])[0]), abs=2e-2)


def test_inclusion_accepts_rollout(hopf_lax_grid, rollout):
    verdict = inclusion_check(rollout, hopf_lax_grid)
    assert verdict.verdict == "MINIMIZER"
    assert verdict.equality_fraction >= 0.9


def test_inclusion_rejects_perturbed_rollout(hopf_lax_grid, rollout):
    good = inclusion_check(rollout, hopf_lax_grid)
    states = rollout.states.copy()
    states[rollout.N // 2] += 0.1
    bad = inclusion_check(rollout.with_states(states), hopf_lax_grid)
    assert bad.verdict == "NOT_MINIMIZER"
    assert bad.max_r_F > 10.0 * max(good.max_r_F, hopf_lax_grid.cfg.tol_inclusion)


def test_inclusion_needs_trajectory_on_grid(hopf_lax_grid):
    coarse = Trajectory(t0=0.0, step=0.02, states=np.linspace(0.5, 0.3, 11))
    with pytest.raises(TrajectoryOffGrid):
        inclusion_check(coarse, hopf_lax_grid)
    off = Trajectory(t0=0.0, step=hopf_lax_grid.tau, states=np.linspace(0.5013, 0.3, 11))
    with pytest.raises(TrajectoryOffGrid):
        inclusion_check(off, hopf_lax_grid)
