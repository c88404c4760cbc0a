"""问题模型测试：目录、作用量、问题文档校验"""

import json

import numpy as np
import pytest

from VarCalc.errors import DimensionMismatch, NonFiniteState, SchemaError, UnknownLagrangian
from VarCalc.lagrangian_model import (
    Trajectory,
    builtin_catalog,
    evaluate_action,
    load_problem,
    make_lagrangian,
    make_terminal,
    saturating_sum,
)

CATALOG = ["quadratic", "double_well", "double_well_x2", "abs", "piecewise_x"]


# ============================================================================
# 目录
# ============================================================================

def test_catalog_has_lagrangians_and_terminals():
    """目录至少七项，包含五个 Lagrangian 与三个终端代价"""
    entries = builtin_catalog()
    assert len(entries) >= 7
    names = {e.name for e in entries if e.kind == "lagrangian"}
    assert names == set(CATALOG)
    assert {"zero", "quadratic_phi", "indicator_point"} <= {e.name for e in entries if e.kind == "terminal"}


@pytest.mark.parametrize("name", CATALOG)
def test_gauge_and_local_bound_sandwich(name):
    """101 x 101 网格上 Theta(u) <= L(x, u) <= Psi(max(|x|, |u|))"""
    L = make_lagrangian(name)
    axis = np.linspace(-5.0, 5.0, 101)
    X, U = np.meshgrid(axis, axis, indexing="ij")
    x, u = X.reshape(-1, 1), U.reshape(-1, 1)
    values = L(x, u)
    assert np.all(L.gauge(u) <= values)
    R = np.maximum(np.abs(x[:, 0]), np.abs(u[:, 0]))
    assert np.all(values <= L.local_bound(R))


def test_flags_follow_formula():
    assert make_lagrangian("quadratic").convex_in_u
    assert not make_lagrangian("double_well").convex_in_u
    assert not make_lagrangian("abs").differentiable_in_u
    assert not make_lagrangian("piecewise_x").continuous


def test_unknown_names_raise():
    with pytest.raises(UnknownLagrangian):
        make_lagrangian("cubic")
    with pytest.raises(UnknownLagrangian):
        make_terminal("gaussian")


def test_indicator_terminal_is_infinite_off_target():
    phi = make_terminal("indicator_point", 1, point=[0.5])
    values = phi(np.array([[0.5], [0.0]]))
    assert values[0] == 0.0
    assert np.isinf(values[1])


# ============================================================================
# 轨迹与作用量
# ============================================================================

def test_action_of_linear_path():
    """L = u^2 沿 y(t) = t 的作用量为 1"""
    traj = Trajectory(t0=0.0, step=0.25, states=np.linspace(0.0, 1.0, 5))
    assert evaluate_action(traj, make_lagrangian("quadratic")) == pytest.approx(1.0, abs=1e-15)


def test_action_saturates_on_infinite_term():
    assert saturating_sum([1.0, np.inf, 2.0]) == np.inf
    assert saturating_sum([0.5, 0.25]) == 0.75


def test_trajectory_validation():
    with pytest.raises(NonFiniteState):
        Trajectory(t0=0.0, step=0.1, states=np.array([0.0, np.nan, 1.0]))
    with pytest.raises(NonFiniteState):
        Trajectory(t0=0.0, step=0.0, states=np.array([0.0, 1.0]))
    with pytest.raises(DimensionMismatch):
        Trajectory(t0=0.0, step=0.1, states=np.array([0.0]))
    traj = Trajectory(t0=0.0, step=0.1, states=np.zeros((3, 2)))
    with pytest.raises(DimensionMismatch):
        evaluate_action(traj, make_lagrangian("quadratic", 1))


def test_trajectory_from_uniform_times():
    traj = Trajectory.from_times([0.0, 0.5, 1.0], [0.0, 1.0, 1.0])
    assert traj.N == 2
    np.testing.assert_allclose(traj.slopes[:, 0], [2.0, 0.0])


# ============================================================================
# 问题文档
# ============================================================================

def _lagrange(**overrides):
    doc = {"kind": "lagrange", "lagrangian": "quadratic", "a": 0.0, "b": 1.0, "xa": [0.0], "xb": [1.0]}
    doc.update(overrides)
    return doc


def test_load_every_sample_problem(problems_dir):
    for path in sorted(problems_dir.glob("*.json")):
        problem = load_problem(path)
        assert problem.kind in ("lagrange", "bolza")


def test_inline_lagrangian_keeps_flags():
    doc = _lagrange(lagrangian={"name": "dw2", "n": 1, "expr-id": "double_well_x2"})
    problem = load_problem(doc)
    assert problem.lagrangian.name == "dw2"
    assert problem.lagrangian.flags()["convex_in_u"] is False
    assert problem.lagrangian.flags()["differentiable_in_u"] is True


@pytest.mark.parametrize("doc, pointer", [
    (_lagrange(b=0.0), "/b"),
    (_lagrange(kind="mayer"), "/kind"),
    (_lagrange(xb=[1.0, 2.0]), "/xb"),
    (_lagrange(bounds={"A": 1, "B": 1, "alpha": 2, "beta": 3}), "/bounds/alpha"),
    (_lagrange(lagrangian={"name": "q", "n": 2, "expr-id": "quadratic"}), "/lagrangian/n"),
])
def test_schema_errors_carry_pointer(doc, pointer):
    with pytest.raises(SchemaError) as info:
        load_problem(doc)
    assert info.value.pointer == pointer


def test_missing_field_and_extra_field():
    doc = _lagrange()
    del doc["a"]
    with pytest.raises(SchemaError) as info:
        load_problem(doc)
    assert info.value.pointer == "/a"
    with pytest.raises(SchemaError):
        load_problem(_lagrange(colour="red"))


def test_auxiliary_expressions_are_not_catalog_names():
    with pytest.raises(UnknownLagrangian):
        load_problem(_lagrange(lagrangian="unit"))


def test_load_from_json_text_and_bolza():
    text = json.dumps({"kind": "bolza", "lagrangian": "quadratic", "t": 1.0, "x": [0.5],
                       "phi": {"name": "indicator_point", "point": [0.0]}})
    problem = load_problem(text)
    assert problem.horizon == 1.0
    assert problem.terminal.name == "indicator_point"
    with pytest.raises(SchemaError):
        load_problem("{not json")
