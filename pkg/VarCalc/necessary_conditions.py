"""
必要条件检验
沿候选最小化轨迹构造 f(t, v) = L(y, y'/v) v 与 g(t, v) = L(y, v y') 及其下凸包络，
执行 Erdmann 区间检验与四种 DuBois-Reymond 常数性检验（凸化、次微分、Clarke、超微分）

定理不成立属于“发现”：写在报告的 passed / residual 字段里，不抛异常
"""

import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .config import LOGGING_CONFIG, get_envelope_config
from .convex_analysis import (
    DerivativeConfig,
    SampledFunction1D,
    clarke_gradient_1d,
    legendre_fenchel,
    lower_convex_envelope_1d,
    one_sided_derivatives,
    subdifferential,
    superdifferential,
)
from .errors import FlagMissing, HypothesisFailed, NotReducible
from .lagrangian_model import INF, LagrangianSpec, Trajectory
from .parallel import map_items

# 配置日志
logging.basicConfig(level=LOGGING_CONFIG["level"], format=LOGGING_CONFIG["format"])
logger = logging.getLogger(__name__)


class EnvelopeConfig(BaseModel):
    """包络采样网格、几乎处处比例与容差"""
    model_config = ConfigDict(frozen=True)

    f_vmax: float = Field(default_factory=lambda: get_envelope_config()["f_vmax"], gt=1.0)
    f_cells: int = Field(default_factory=lambda: get_envelope_config()["f_cells"], ge=8)
    g_points: int = Field(default_factory=lambda: get_envelope_config()["g_points"], ge=7)
    u_window: float = Field(default_factory=lambda: get_envelope_config()["u_window"], gt=0)
    u_points: int = Field(default_factory=lambda: get_envelope_config()["u_points"], ge=11)
    ae_fraction: float = Field(default_factory=lambda: get_envelope_config()["ae_fraction"], gt=0, le=1)
    tol_env: float = Field(default_factory=lambda: get_envelope_config()["tol_env"], ge=0)
    tol_dbr: float = Field(default_factory=lambda: get_envelope_config()["tol_dbr"], ge=0)
    threads: Optional[int] = Field(default=None, ge=1)


def _snap_one(grid: np.ndarray) -> np.ndarray:
    """把最接近 1 的网格点精确置为 1"""
    grid = grid.copy()
    grid[int(np.argmin(np.abs(grid - 1.0)))] = 1.0
    return grid


def f_grid(cfg: EnvelopeConfig) -> np.ndarray:
    return _snap_one(np.linspace(0.0, cfg.f_vmax, cfg.f_cells + 1)[1:])


def g_grid(cfg: EnvelopeConfig) -> np.ndarray:
    return _snap_one(np.linspace(0.0, 2.0, cfg.g_points + 2)[1:-1])


# ============================================================================
# 包络流水线
# ============================================================================

@dataclass(frozen=True, eq=False)
class EnvelopePipeline:
    """
    每个节点 i 上的 f_i, g_i 及其包络 f0_i, g0_i，以及它们在 v = 1 处的单侧导数

    数组第 0 轴为节点；df / dg 的最后一维为 (左导数, 右导数)
    """
    traj: Trajectory
    lagrangian: LagrangianSpec
    v_f: np.ndarray
    v_g: np.ndarray
    f: np.ndarray
    g: np.ndarray
    f0: np.ndarray
    g0: np.ndarray
    df: np.ndarray
    dg: np.ndarray
    L_values: np.ndarray
    cfg: EnvelopeConfig

    @property
    def one_f(self) -> int:
        return int(np.flatnonzero(self.v_f == 1.0)[0])

    @property
    def one_g(self) -> int:
        return int(np.flatnonzero(self.v_g == 1.0)[0])

    @property
    def grid_step(self) -> float:
        return float(max(np.max(np.diff(self.v_f)), np.max(np.diff(self.v_g))))


def _node_envelopes(args):
    y, u, L, v_f, v_g = args
    # f(v) = L(y, u / v) v，v <= 1/2 处为 +inf
    f = np.full(v_f.shape, INF)
    ok = v_f > 0.5
    f[ok] = np.asarray(L.evaluator(y[None, :], u[None, :] / v_f[ok][:, None]), dtype=float) * v_f[ok]
    g = np.asarray(L.evaluator(y[None, :], v_g[:, None] * u[None, :]), dtype=float)
    g = np.broadcast_to(g, v_g.shape).copy()

    f0 = lower_convex_envelope_1d(SampledFunction1D(v_f, f))
    g0 = lower_convex_envelope_1d(SampledFunction1D(v_g, g))
    df = one_sided_derivatives(f0, 1.0)
    dg = one_sided_derivatives(g0, 1.0)
    return f, g, f0.ordinates, g0.ordinates, (df.left, df.right), (dg.left, dg.right)


def build_pipeline(traj: Trajectory, L: LagrangianSpec,
                   cfg: Optional[EnvelopeConfig] = None) -> EnvelopePipeline:
    """
    沿轨迹构造包络流水线

    Args:
        traj: 候选最小化轨迹
        L: Lagrangian
        cfg: 网格配置

    Returns:
        EnvelopePipeline
    """
    cfg = cfg or EnvelopeConfig()
    v_f, v_g = f_grid(cfg), g_grid(cfg)
    states, slopes = traj.states[:-1], traj.slopes
    jobs = [(states[i], slopes[i], L, v_f, v_g) for i in range(traj.N)]
    parts = map_items(_node_envelopes, jobs, threads=cfg.threads)

    f, g, f0, g0, df, dg = (np.array([part[k] for part in parts]) for k in range(6))
    L_values = np.asarray(L.evaluator(states, slopes), dtype=float)
    logger.info(f"✓ 包络流水线完成: 节点数={traj.N}")
    return EnvelopePipeline(traj=traj, lagrangian=L, v_f=v_f, v_g=v_g, f=f, g=g, f0=f0, g0=g0,
                            df=df, dg=dg, L_values=L_values, cfg=cfg)


def envelope_identity(pipe: EnvelopePipeline) -> dict:
    """f_i(1) = f0_i(1) 在至少 ae_fraction 的节点上成立（容差 tol_env）"""
    k = pipe.one_f
    gap = pipe.f[:, k] - pipe.f0[:, k]
    fraction = float(np.mean(gap <= pipe.cfg.tol_env))
    return {"max_gap": float(np.max(gap)), "pass_fraction": fraction,
            "passed": fraction >= pipe.cfg.ae_fraction}


def intervals_from_g(pipe: EnvelopePipeline) -> np.ndarray:
    """I_i = [L_i - d^r g0_i(1), L_i - d^l g0_i(1)]"""
    return np.stack([pipe.L_values - pipe.dg[:, 1], pipe.L_values - pipe.dg[:, 0]], axis=1)


def intervals_from_f(pipe: EnvelopePipeline) -> np.ndarray:
    """同一区间由 f0 的单侧导数给出：d^l f0(1) = g0(1) - d^r g0(1)，d^r f0(1) = g0(1) - d^l g0(1)"""
    g0_one = pipe.g0[:, pipe.one_g]
    return np.stack([pipe.L_values - g0_one + pipe.df[:, 0],
                     pipe.L_values - g0_one + pipe.df[:, 1]], axis=1)


# ============================================================================
# 报告
# ============================================================================

class DbrReport(BaseModel):
    """DuBois-Reymond / Erdmann 检验报告"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    variant: str
    c: float
    interval_lo: float = Field(description="各节点区间交集的下端，交集为空时大于 interval_hi")
    interval_hi: float
    residual: float = Field(description="max_i |L_i - <p_i, u_i> - c|，只统计非空节点")
    vacuous_fraction: float = 0.0
    enlargement_eps: float = 0.0
    pass_fraction: float = 1.0
    passed: bool
    hamiltonian_residual: Optional[float] = None
    worst_node: Optional[int] = None

    node_L: List[float] = Field(default_factory=list, exclude=True)
    node_lo: List[float] = Field(default_factory=list, exclude=True)
    node_hi: List[float] = Field(default_factory=list, exclude=True)
    costates: List[List[float]] = Field(default_factory=list, exclude=True)
    vacuous: List[bool] = Field(default_factory=list, exclude=True)

    def summary(self) -> dict:
        return self.model_dump()


def _costate_from_interval(value: np.ndarray, lo: np.ndarray, hi: np.ndarray, u: np.ndarray) -> np.ndarray:
    """把 L_i - c 投影到 [d^l, d^r] 上，再沿 u_i / |u_i|^2 放回 R^n"""
    scalar = np.clip(value, lo, hi)
    norm_sq = np.sum(u * u, axis=1)
    scale = np.where(norm_sq > 0, scalar / np.where(norm_sq > 0, norm_sq, 1.0), 0.0)
    return scale[:, None] * u


def erdmann_interval_test(pipe: EnvelopePipeline) -> DbrReport:
    """
    Erdmann 区间检验：各节点区间求交

    交集非空时 c 取交集中点；为空时报告使交集非空的最小扩张 eps*，c 取扩张后交集的中点
    """
    intervals = intervals_from_g(pipe)
    lo, hi = float(np.max(intervals[:, 0])), float(np.min(intervals[:, 1]))
    c = 0.5 * (lo + hi)
    eps = max(0.0, 0.5 * (lo - hi))

    inside = (intervals[:, 0] <= c + eps) & (c - eps <= intervals[:, 1])
    slack = np.maximum(intervals[:, 0] - c, c - intervals[:, 1])
    u = pipe.traj.slopes
    costates = _costate_from_interval(pipe.L_values - c, pipe.dg[:, 0], pipe.dg[:, 1], u)
    residual = float(np.max(np.abs(pipe.L_values - np.sum(costates * u, axis=1) - c)))

    report = DbrReport(
        variant="erdmann", c=c, interval_lo=lo, interval_hi=hi, residual=residual,
        enlargement_eps=eps, pass_fraction=float(np.mean(slack <= 0.0)),
        passed=bool(lo <= hi and inside.all()), worst_node=int(np.argmax(slack)),
        node_L=pipe.L_values.tolist(), node_lo=intervals[:, 0].tolist(),
        node_hi=intervals[:, 1].tolist(), costates=costates.tolist(),
        vacuous=[False] * pipe.traj.N,
    )
    if not report.passed:
        logger.warning(f"⚠ Erdmann 区间交集为空, eps*={eps:.3g}, 最差节点={report.worst_node}")
    return report


# ============================================================================
# DuBois-Reymond 变体
# ============================================================================

def radial_frame(u: np.ndarray, L: LagrangianSpec):
    """
    把 u -> L(y, u) 归约为一维截面 s -> L(y, s e)

    n = 1 时 e = +1、r = u；径向 Lagrangian 时 e = u / |u|、r = |u|

    Raises:
        NotReducible: n >= 2 且 L 不是径向的
    """
    n = u.shape[0]
    if n == 1:
        return np.array([1.0]), float(u[0])
    if not L.radial_in_u:
        raise NotReducible(f"{L.name} 在 n={n} 时不是径向的，无法归约到一维")
    r = float(np.linalg.norm(u))
    if r == 0.0:
        e = np.zeros(n)
        e[0] = 1.0
        return e, 0.0
    return u / r, r


def _section_grid(r: float, cfg: EnvelopeConfig) -> np.ndarray:
    window = max(cfg.u_window, 2.0 * abs(r))
    grid = np.linspace(-window, window, cfg.u_points)
    grid[int(np.argmin(np.abs(grid - r)))] = r
    return grid


def _min_norm(lo: float, hi: float) -> float:
    if lo <= 0.0 <= hi:
        return 0.0
    return lo if abs(lo) < abs(hi) else hi


def _finish(variant: str, L_values: np.ndarray, products: np.ndarray, vacuous: np.ndarray,
            costates: np.ndarray, cfg: EnvelopeConfig, extra_residuals: Optional[np.ndarray] = None,
            spread: Optional[np.ndarray] = None) -> DbrReport:
    """由每个节点的 L_i 与 <p_i, u_i> 拟合 c（中位数）并汇总"""
    active = ~vacuous
    vacuous_fraction = float(np.mean(vacuous))
    if not np.any(active):
        return DbrReport(variant=variant, c=0.0, interval_lo=-INF, interval_hi=INF, residual=0.0,
                         vacuous_fraction=vacuous_fraction, passed=True,
                         node_L=L_values.tolist(), costates=costates.tolist(), vacuous=vacuous.tolist())

    values = L_values[active] - products[active]
    c = float(np.median(values))
    node_residual = np.abs(values - c)
    if spread is not None:
        node_residual = node_residual + spread[active]
    ok = node_residual <= cfg.tol_dbr
    ham = None
    if extra_residuals is not None:
        ham = float(np.max(extra_residuals[active]))
        ok &= extra_residuals[active] <= cfg.tol_dbr
    fraction = float(np.mean(ok))

    worst = int(np.flatnonzero(active)[int(np.argmax(node_residual))])
    return DbrReport(variant=variant, c=c, interval_lo=float(values.min()), interval_hi=float(values.max()),
                     residual=float(np.max(node_residual)), vacuous_fraction=vacuous_fraction,
                     pass_fraction=fraction, passed=fraction >= cfg.ae_fraction,
                     hamiltonian_residual=ham, worst_node=worst,
                     node_L=L_values.tolist(), costates=costates.tolist(), vacuous=vacuous.tolist())


def dbr_convexified(traj: Trajectory, L: LagrangianSpec,
                    cfg: Optional[EnvelopeConfig] = None) -> DbrReport:
    """
    凸化 DuBois-Reymond 检验

    p_i 取一维凸化截面在 r_i 处次微分 [d^l, d^r] 的最小范数元素，c 为 L0_i - p_i r_i 的中位数，
    同时检验 Hamilton 量 H(y_i, p_i) = -c

    Raises:
        NotReducible: 无法归约到一维
        HypothesisFailed: 沿轨迹 L = L0 在不足 ae_fraction 的节点上成立
    """
    cfg = cfg or EnvelopeConfig()
    states, slopes = traj.states[:-1], traj.slopes

    def node(i: int):
        y = states[i]
        e, r = radial_frame(slopes[i], L)
        s = _section_grid(r, cfg)
        section = np.asarray(L.evaluator(y[None, :], s[:, None] * e[None, :]), dtype=float)
        section = np.broadcast_to(section, s.shape).copy()
        env = lower_convex_envelope_1d(SampledFunction1D(s, section))
        k = int(np.flatnonzero(s == r)[0])
        d = one_sided_derivatives(env, r)
        p = _min_norm(d.left, d.right)
        H = legendre_fenchel(SampledFunction1D(s, section), np.array([p])).values[0]
        return section[k], env.ordinates[k], p, r, H, e

    parts = map_items(node, list(range(traj.N)), threads=cfg.threads)
    L_values = np.array([part[0] for part in parts])
    L0 = np.array([part[1] for part in parts])
    p = np.array([part[2] for part in parts])
    r = np.array([part[3] for part in parts])
    H = np.array([part[4] for part in parts])
    costates = np.array([part[2] * part[5] for part in parts])

    contact = (L_values - L0) <= cfg.tol_env
    if np.mean(contact) < cfg.ae_fraction:
        worst = int(np.argmax(L_values - L0))
        raise HypothesisFailed("convexification_contact",
                               f"L 与其凸化只在 {np.mean(contact):.1%} 的节点上重合", node=worst)

    report = _finish("convexified", L0, p * r, np.zeros(traj.N, dtype=bool), costates, cfg)
    ham = np.abs(H + report.c)
    return _finish("convexified", L0, p * r, np.zeros(traj.N, dtype=bool), costates, cfg,
                   extra_residuals=ham)


def _section_evaluator(L: LagrangianSpec, y: np.ndarray):
    return lambda pts: np.asarray(L.evaluator(y[None, :], pts), dtype=float)


def dbr_subdifferential(traj: Trajectory, L: LagrangianSpec, cfg: Optional[EnvelopeConfig] = None,
                        dcfg: Optional[DerivativeConfig] = None) -> DbrReport:
    """
    次微分变体：p_i 取 u -> L(y_i, u) 在 u_i 处次微分的最小范数元素；次微分为空的节点记为空转

    Raises:
        FlagMissing: 既不是半凸也不可微
    """
    if not (L.semiconvex_in_u or L.differentiable_in_u):
        raise FlagMissing(f"{L.name} 需要 semiconvex_in_u 或 differentiable_in_u")
    cfg = cfg or EnvelopeConfig()
    dcfg = dcfg or DerivativeConfig()
    states, slopes = traj.states[:-1], traj.slopes

    def node(i: int):
        return subdifferential(_section_evaluator(L, states[i]), slopes[i], dcfg)

    sets = map_items(node, list(range(traj.N)), threads=cfg.threads)
    return _from_gradient_sets("subdifferential", traj, L, sets, cfg, every_element=False)


def dbr_superdifferential(traj: Trajectory, L: LagrangianSpec, cfg: Optional[EnvelopeConfig] = None,
                          dcfg: Optional[DerivativeConfig] = None) -> DbrReport:
    """超微分变体：无前提；对非空节点的每个格点元素都检验常数性"""
    cfg = cfg or EnvelopeConfig()
    dcfg = dcfg or DerivativeConfig()
    states, slopes = traj.states[:-1], traj.slopes

    def node(i: int):
        return superdifferential(_section_evaluator(L, states[i]), slopes[i], dcfg)

    sets = map_items(node, list(range(traj.N)), threads=cfg.threads)
    return _from_gradient_sets("superdifferential", traj, L, sets, cfg, every_element=True)


def _from_gradient_sets(variant: str, traj: Trajectory, L: LagrangianSpec, sets, cfg: EnvelopeConfig,
                        every_element: bool) -> DbrReport:
    slopes = traj.slopes
    n = traj.n
    L_values = np.asarray(L.evaluator(traj.states[:-1], slopes), dtype=float)
    vacuous = np.array([s.empty for s in sets])
    costates = np.array([s.min_norm() if not s.empty else np.zeros(n) for s in sets])
    products = np.sum(costates * slopes, axis=1)

    spread = None
    if every_element:
        # 集合中每个元素都要满足常数性：把元素间 <p, u_i> 的最大偏差计入残差
        spread = np.array([
            0.0 if s.empty else float(np.max(np.abs(s.points @ slopes[i] - products[i])))
            for i, s in enumerate(sets)
        ])
    report = _finish(variant, L_values, products, vacuous, costates, cfg, spread=spread)
    if report.vacuous_fraction > 0:
        logger.info(f"{variant}: {report.vacuous_fraction:.1%} 的节点梯度集合为空（空转）")
    return report


def dbr_clarke(traj: Trajectory, L: LagrangianSpec, cfg: Optional[EnvelopeConfig] = None,
               dcfg: Optional[DerivativeConfig] = None) -> DbrReport:
    """
    Clarke 变体：p_i 取一维截面 Clarke 广义梯度的最小范数元素

    Raises:
        FlagMissing: 缺少 lipschitz_in_u
        NotReducible: 无法归约到一维
    """
    if not L.lipschitz_in_u:
        raise FlagMissing(f"{L.name} 需要 lipschitz_in_u")
    cfg = cfg or EnvelopeConfig()
    dcfg = dcfg or DerivativeConfig()
    states, slopes = traj.states[:-1], traj.slopes

    def node(i: int):
        y = states[i]
        e, r = radial_frame(slopes[i], L)
        section = lambda s: np.asarray(L.evaluator(y[None, :], np.asarray(s)[:, None] * e[None, :]),
                                       dtype=float)
        interval = clarke_gradient_1d(section, r, dcfg)
        p = interval.min_norm()
        return p * e, p * r

    parts = map_items(node, list(range(traj.N)), threads=cfg.threads)
    costates = np.array([part[0] for part in parts])
    products = np.array([part[1] for part in parts])
    L_values = np.asarray(L.evaluator(traj.states[:-1], slopes), dtype=float)
    return _finish("clarke", L_values, products, np.zeros(traj.N, dtype=bool), costates, cfg)


def run_dbr(variant: str, traj: Trajectory, L: LagrangianSpec,
            cfg: Optional[EnvelopeConfig] = None) -> DbrReport:
    """按名称分派：erdmann / convex / subdiff / clarke / superdiff"""
    cfg = cfg or EnvelopeConfig()
    if variant == "erdmann":
        return erdmann_interval_test(build_pipeline(traj, L, cfg))
    if variant in ("convex", "convexified"):
        return dbr_convexified(traj, L, cfg)
    if variant in ("subdiff", "subdifferential"):
        return dbr_subdifferential(traj, L, cfg)
    if variant == "clarke":
        return dbr_clarke(traj, L, cfg)
    if variant in ("superdiff", "superdifferential"):
        return dbr_superdifferential(traj, L, cfg)
    raise ValueError(f"未知的检验变体: {variant}")
