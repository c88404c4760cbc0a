"""
值函数与 Hamilton-Jacobi 检验

- 在 (t, x) 网格上用动态规划计算 Bolza 问题的值函数 V
- 用两级嵌套格点估计松弛积分量 L+ / L-，制表 H、H+、H-
- 检验初值达成、局部 Lipschitz、HJ 上/下解不等式、比较原理、Dini 单调性与微分包含刻画

时间层 k 表示剩余时长 t_k = k * tau；V[k+1](x) = min_d tau L(x, d/tau) + V[k](x + d)
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .config import LOGGING_CONFIG, get_relaxation_config, get_value_config
from .convex_analysis import ConjugateTable, SampledFunction1D, axis_box_subdifferential, legendre_fenchel
from .direct_solver import StateLattice, backtrack, lattice_shortest_path, transition_costs
from .errors import (
    AllInfiniteLayer,
    ConfigError,
    DimensionMismatch,
    NotReducible,
    TrajectoryOffGrid,
)
from .lagrangian_model import (
    INF,
    LagrangianSpec,
    TerminalCost,
    Trajectory,
    as_vector,
    evaluate_action,
    norm_sq,
)
from .parallel import map_chunks

# 配置日志
logging.basicConfig(level=LOGGING_CONFIG["level"], format=LOGGING_CONFIG["format"])
logger = logging.getLogger(__name__)


def _value_default(key: str):
    return lambda: get_value_config()[key]


def _relax_default(key: str):
    return lambda: get_relaxation_config()[key]


class ValueGridConfig(BaseModel):
    """值函数网格与 HJ 检验参数"""
    model_config = ConfigDict(frozen=True)

    tau: float = Field(default_factory=_value_default("tau"), gt=0)
    resolution: int = Field(default_factory=_value_default("resolution"), ge=3)
    half_width: float = Field(default_factory=_value_default("half_width"), gt=0)
    center: Optional[List[float]] = None
    sub: int = Field(default_factory=_value_default("sub"), ge=1)
    s_max: float = Field(default_factory=_value_default("s_max"), gt=0)
    grid_tail: int = Field(default_factory=_value_default("grid_tail"), ge=1)
    fan_rate: float = Field(default_factory=_value_default("fan_rate"), ge=0)
    tol_hj: float = Field(default_factory=_value_default("tol_hj"), ge=0)
    tol_grid_sub: float = Field(default_factory=_value_default("tol_grid_sub"), ge=0)
    tol_lsc: float = Field(default_factory=_value_default("tol_lsc"), ge=0)
    hj_fraction: float = Field(default_factory=_value_default("hj_fraction"), gt=0, le=1)
    inclusion_fraction: float = Field(default_factory=_value_default("inclusion_fraction"), gt=0, le=1)
    equality_fraction: float = Field(default_factory=_value_default("equality_fraction"), gt=0, le=1)
    tol_inclusion: float = Field(default_factory=_value_default("tol_inclusion"), ge=0)
    p_max: float = Field(default_factory=_value_default("p_max"), gt=0)
    p_points: int = Field(default_factory=_value_default("p_points"), ge=3)
    u_max: float = Field(default_factory=_value_default("u_max"), gt=0)
    u_points: int = Field(default_factory=_value_default("u_points"), ge=3)
    threads: Optional[int] = Field(default=None, ge=1)


class RelaxationConfig(BaseModel):
    """松弛积分量的步长序列与嵌套格点参数"""
    model_config = ConfigDict(frozen=True)

    h0: float = Field(default_factory=_relax_default("h0"), gt=0)
    levels: int = Field(default_factory=_relax_default("levels"), ge=0)
    tail: int = Field(default_factory=_relax_default("tail"), ge=1)
    inner_steps: int = Field(default_factory=_relax_default("inner_steps"), ge=2)
    refine: int = Field(default_factory=_relax_default("refine"), ge=1)
    margin: float = Field(default_factory=_relax_default("margin"), gt=0)
    u_points: int = Field(default_factory=_relax_default("u_points"), ge=3)
    u_max: float = Field(default_factory=_relax_default("u_max"), gt=0)

    @model_validator(mode="after")
    def _check_tail(self):
        if self.tail > self.levels + 1:
            raise ValueError("tail 不能超过步长个数 levels + 1")
        return self

    def steps(self) -> np.ndarray:
        return self.h0 * np.power(2.0, -np.arange(self.levels + 1))

    def u_grid(self) -> np.ndarray:
        return np.linspace(-self.u_max, self.u_max, self.u_points)


class Region(BaseModel):
    """检验区域；None 表示不限制"""
    t_min: Optional[float] = None
    t_max: Optional[float] = None
    x_min: Optional[float] = None
    x_max: Optional[float] = None

    def contains_t(self, t: np.ndarray) -> np.ndarray:
        lo = -INF if self.t_min is None else self.t_min - 1e-12
        hi = INF if self.t_max is None else self.t_max + 1e-12
        return (t >= lo) & (t <= hi)

    def contains_x(self, x: np.ndarray) -> np.ndarray:
        """x 形状 (S, n)，按各坐标的盒子判断"""
        lo = -INF if self.x_min is None else self.x_min - 1e-12
        hi = INF if self.x_max is None else self.x_max + 1e-12
        return np.all((x >= lo) & (x <= hi), axis=-1)


def hopf_lax_quadratic(t, x) -> np.ndarray:
    """L = |u|^2、phi = |x|^2 时的闭式值函数 V(t, x) = |x|^2 / (1 + t)"""
    x = np.asarray(x, dtype=float)
    sq = norm_sq(x) if x.ndim > 1 else x * x
    return sq / (1.0 + np.asarray(t, dtype=float))


# ============================================================================
# 值函数网格
# ============================================================================

@dataclass(frozen=True, eq=False)
class ValueGrid:
    """
    (t, x) 张量网格上的值函数

    V 形状 (K+1, S)，第 0 层等于 phi 的格点采样；ustar[k] 为第 k 层的最优斜率，ustar[0] 为 0
    """
    tau: float
    lattice: StateLattice
    V: np.ndarray
    ustar: np.ndarray
    phi: np.ndarray
    displacements: np.ndarray
    lagrangian: LagrangianSpec
    terminal: TerminalCost
    cfg: ValueGridConfig

    @property
    def K(self) -> int:
        return self.V.shape[0] - 1

    @property
    def times(self) -> np.ndarray:
        return self.tau * np.arange(self.K + 1)

    @property
    def nodes(self) -> np.ndarray:
        return self.lattice.nodes

    @property
    def spacing(self) -> float:
        return float(np.min(self.lattice.spacing))

    def value(self, k: int, points) -> np.ndarray:
        return interpolate(self.V[k], self.lattice, np.atleast_2d(np.asarray(points, dtype=float)))


def interpolate(layer: np.ndarray, lattice: StateLattice, points: np.ndarray) -> np.ndarray:
    """
    张量格点上的多线性插值

    任何权重为正的角点取 +inf 时结果为 +inf；网格外为 +inf；
    与格点距离在 1e-9 个格距以内的点按格点取值，保证格点处精确
    """
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    shape = tuple(len(axis) for axis in lattice.axes)
    grid = np.asarray(layer, dtype=float).reshape(shape)
    P = points.shape[0]

    lower, fracs = [], []
    outside = np.zeros(P, dtype=bool)
    for a, axis in enumerate(lattice.axes):
        dx = axis[1] - axis[0]
        pos = (points[:, a] - axis[0]) / dx
        outside |= (pos < -1e-9) | (pos > len(axis) - 1 + 1e-9)
        pos = np.clip(pos, 0.0, len(axis) - 1)
        j = np.floor(pos).astype(int)
        f = pos - j
        up = f > 1.0 - 1e-9
        j = np.minimum(np.where(up, j + 1, j), len(axis) - 1)
        f = np.where(up | (f < 1e-9), 0.0, f)
        lower.append(j)
        fracs.append(f)

    out = np.zeros(P)
    hit_inf = np.zeros(P, dtype=bool)
    for corner in itertools.product((0, 1), repeat=len(shape)):
        weight = np.ones(P)
        index = []
        for a, c in enumerate(corner):
            weight = weight * (fracs[a] if c else 1.0 - fracs[a])
            index.append(np.minimum(lower[a] + c, shape[a] - 1))
        values = grid[tuple(index)]
        active = weight > 0
        finite = np.isfinite(values)
        hit_inf |= active & ~finite
        out += np.where(active & finite, weight * np.where(finite, values, 0.0), 0.0)
    out[hit_inf | outside] = INF
    return out


def _build_value_lattice(n: int, cfg: ValueGridConfig) -> StateLattice:
    center = np.zeros(n) if cfg.center is None else as_vector(cfg.center, n)
    return StateLattice(tuple(np.linspace(c - cfg.half_width, c + cfg.half_width, cfg.resolution)
                              for c in center))


def _transition_table(L: LagrangianSpec, lattice: StateLattice, tau: float, cfg: ValueGridConfig):
    """
    预计算一层转移：目标下标 (S, M)、插值比例 (M,)、位移 (S, M, n) 与代价 (S, M)

    sub = 1 时位移取相邻格点之差，代价与直接法的转移核逐项相同
    """
    nodes = lattice.nodes
    S, n = nodes.shape
    dx = lattice.spacing
    reach = cfg.s_max * tau

    if n == 1:
        sub = cfg.sub
        fine = dx[0] / sub
        m_max = int(math.floor(reach / fine + 1e-9))
        m = np.arange(-m_max, m_max + 1)
        q = np.arange(S)[:, None] * sub + m[None, :]
        valid = (q >= 0) & (q <= (S - 1) * sub)
        qc = np.clip(q, 0, (S - 1) * sub)
        targets = qc // sub
        frac = (m % sub) / sub
        axis = lattice.axes[0]
        upper = np.minimum(targets + 1, S - 1)
        position = np.where(frac[None, :] == 0.0, axis[targets],
                            axis[targets] + frac[None, :] * (axis[upper] - axis[targets]))
        disp = (position - axis[:, None])[..., None]
        unit = (m * fine)[:, None]
    else:
        if cfg.sub != 1:
            raise ConfigError("n >= 2 时只支持 sub = 1")
        ranges = [np.arange(-int(math.floor(reach / d + 1e-9)), int(math.floor(reach / d + 1e-9)) + 1)
                  for d in dx]
        offsets = np.stack(np.meshgrid(*ranges, indexing="ij"), axis=-1).reshape(-1, n)
        keep = np.sqrt(np.sum((offsets * dx) ** 2, axis=1)) <= reach + 1e-12
        offsets = offsets[keep]
        shape = tuple(len(a) for a in lattice.axes)
        multi = np.stack(np.unravel_index(np.arange(S), shape), axis=-1)
        target_multi = multi[:, None, :] + offsets[None, :, :]
        valid = np.all((target_multi >= 0) & (target_multi < np.array(shape)), axis=-1)
        clipped = np.clip(target_multi, 0, np.array(shape) - 1)
        targets = np.ravel_multi_index(tuple(clipped[..., a] for a in range(n)), shape)
        frac = np.zeros(offsets.shape[0])
        disp = nodes[targets] - nodes[:, None, :]
        unit = offsets * dx

    costs = tau * np.asarray(L.evaluator(nodes[:, None, :], disp / tau), dtype=float)
    costs = np.broadcast_to(costs, valid.shape).copy()
    costs[~valid] = INF
    return targets, frac, disp, costs, unit


def compute_value_grid(L: LagrangianSpec, phi: TerminalCost, horizon: float,
                       cfg: Optional[ValueGridConfig] = None) -> ValueGrid:
    """
    动态规划计算值函数

    Args:
        L: Lagrangian
        phi: 终端代价
        horizon: 最大剩余时长 T
        cfg: 网格配置

    Returns:
        ValueGrid，V[0] = phi 的格点采样

    Raises:
        AllInfiniteLayer: 某一层全为 +inf
    """
    cfg = cfg or ValueGridConfig()
    n = L.n
    if n > 2:
        raise DimensionMismatch(f"值函数网格只支持 n <= 2，当前 n = {n}")
    if phi.n != n:
        raise DimensionMismatch(f"终端代价维数 {phi.n} 与 Lagrangian 维数 {n} 不一致")

    K = max(1, int(round(horizon / cfg.tau)))
    tau = horizon / K
    lattice = _build_value_lattice(n, cfg)
    nodes = lattice.nodes
    S = nodes.shape[0]

    phi_values = np.asarray(phi(nodes), dtype=float).reshape(S)
    if not np.any(np.isfinite(phi_values)):
        raise AllInfiniteLayer("phi 在格点上处处为 +inf")

    targets, frac, disp, costs, unit = _transition_table(L, lattice, tau, cfg)
    interpolated = bool(np.any(frac > 0))
    upper = np.minimum(targets + 1, S - 1)

    V = np.empty((K + 1, S))
    ustar = np.zeros((K + 1, S, n))
    V[0] = phi_values
    logger.info(f"开始值函数计算: K={K}, 状态数={S}, 位移数={costs.shape[1]}, sub={cfg.sub}")

    for k in range(K):
        previous = V[k]

        def rows(a: int, b: int) -> np.ndarray:
            v0 = previous[targets[a:b]]
            if interpolated:
                v1 = previous[upper[a:b]]
                f = np.broadcast_to(frac, v0.shape)
                finite = np.isfinite(v0) & np.isfinite(v1)
                blend = np.where(finite, (1.0 - f) * np.where(finite, v0, 0.0)
                                 + f * np.where(finite, v1, 0.0), INF)
                v0 = np.where(f == 0.0, v0, blend)
            total = costs[a:b] + v0
            idx = np.argmin(total, axis=1)
            return np.stack([total[np.arange(b - a), idx], idx.astype(float)], axis=1)

        layer = map_chunks(rows, S, threads=cfg.threads)
        V[k + 1] = layer[:, 0]
        best = layer[:, 1].astype(int)
        ustar[k + 1] = disp[np.arange(S), best] / tau
        if not np.any(np.isfinite(V[k + 1])):
            raise AllInfiniteLayer(f"第 {k + 1} 层值函数全为 +inf")

    logger.info(f"✓ 值函数计算完成: V(T) 最小值={float(np.min(V[K])):.6g}")
    return ValueGrid(tau=tau, lattice=lattice, V=V, ustar=ustar, phi=phi_values, displacements=unit,
                     lagrangian=L, terminal=phi, cfg=cfg)


def optimal_rollout(grid: ValueGrid, x, steps: Optional[int] = None) -> Trajectory:
    """
    从 x 出发、剩余 steps 层的最优轨迹；每一步在格点外位置重新求解单步问题

    Args:
        grid: 值函数网格
        x: 初始状态
        steps: 步数，默认 K

    Returns:
        Trajectory，t0 = 0，步长 tau
    """
    steps = grid.K if steps is None else steps
    L = grid.lagrangian
    y = as_vector(x, L.n)
    states = [y]
    for s in range(steps):
        k = steps - s
        candidates = y[None, :] + grid.displacements
        cost = grid.tau * np.asarray(L.evaluator(y[None, :], grid.displacements / grid.tau), dtype=float)
        total = cost + grid.value(k - 1, candidates)
        y = candidates[int(np.argmin(total))]
        states.append(y)
    return Trajectory(t0=0.0, step=grid.tau, states=np.array(states))


# ============================================================================
# 松弛积分量 L+ / L-
# ============================================================================

@dataclass(frozen=True, eq=False)
class RelaxedIntegrandEstimate:
    """I(h) 全序列及尾部统计；kind = 'plus' 取尾部最大，'minus' 取尾部最小"""
    x: np.ndarray
    u: np.ndarray
    kind: str
    steps: np.ndarray
    values: np.ndarray
    tail: int

    @property
    def value(self) -> float:
        tail = self.values[-self.tail:]
        return float(np.max(tail) if self.kind == "plus" else np.min(tail))


def _inner_cost(L: LagrangianSpec, start: float, end: float, h: float, cfg: RelaxationConfig) -> float:
    """
    时长 h、从 start 到 end 的最短路均值代价

    先在间距 h / N_in 的粗格点上求解，再在粗最优路径附近的细格点上求解；
    细格距取使 end - start 为整数倍的值，从而端点精确落在细格点上
    """
    n_in = cfg.inner_steps
    step = h / n_in
    coarse_spacing = h / n_in
    delta = end - start
    extent = cfg.margin * max(h, abs(delta))

    lo, hi = min(start, end) - extent, max(start, end) + extent
    k = np.arange(int(math.floor((lo - start) / coarse_spacing)),
                  int(math.ceil((hi - start) / coarse_spacing)) + 1)
    coarse = start + coarse_spacing * k
    origin = int(np.flatnonzero(k == 0)[0])
    target = int(np.argmin(np.abs(coarse - end)))
    T = transition_costs(L, coarse[:, None], step, threads=1)
    _, pred, _ = lattice_shortest_path(T, origin, n_in, threads=1)
    path = coarse[backtrack(pred, target)]

    fine_spacing = coarse_spacing / cfg.refine
    if delta != 0.0:
        fine_spacing = abs(delta) / max(1, int(round(abs(delta) / fine_spacing)))
    lo = min(float(path.min()), end) - 2.0 * coarse_spacing
    hi = max(float(path.max()), end) + 2.0 * coarse_spacing
    k = np.arange(int(math.floor((lo - start) / fine_spacing)),
                  int(math.ceil((hi - start) / fine_spacing)) + 1)
    fine = start + fine_spacing * k
    origin = int(np.flatnonzero(k == 0)[0])
    target = origin + int(round(delta / fine_spacing))
    fine[target] = end
    T = transition_costs(L, fine[:, None], step, threads=1)
    cost, _, _ = lattice_shortest_path(T, origin, n_in, threads=1)
    return float(cost[target]) / h


def relaxed_integrand(L: LagrangianSpec, x, u, kind: str,
                      cfg: Optional[RelaxationConfig] = None) -> RelaxedIntegrandEstimate:
    """
    L+(x, u)：从 x - h u 到 x；L-(x, u)：从 x 到 x + h u

    Raises:
        NotReducible: 只支持 n = 1
    """
    cfg = cfg or RelaxationConfig()
    if L.n != 1:
        raise NotReducible("松弛积分量的嵌套格点估计只支持 n = 1")
    x, u = as_vector(x, 1), as_vector(u, 1)
    steps = cfg.steps()
    values = []
    for h in steps:
        if kind == "plus":
            start, end = float(x[0] - h * u[0]), float(x[0])
        else:
            start, end = float(x[0]), float(x[0] + h * u[0])
        values.append(_inner_cost(L, start, end, float(h), cfg))
    return RelaxedIntegrandEstimate(x=x, u=u, kind=kind, steps=steps, values=np.array(values),
                                    tail=cfg.tail)


def estimate_L_plus(L: LagrangianSpec, x, u, cfg: Optional[RelaxationConfig] = None) -> RelaxedIntegrandEstimate:
    return relaxed_integrand(L, x, u, "plus", cfg)


def estimate_L_minus(L: LagrangianSpec, x, u, cfg: Optional[RelaxationConfig] = None) -> RelaxedIntegrandEstimate:
    return relaxed_integrand(L, x, u, "minus", cfg)


@dataclass(eq=False)
class RelaxedIntegrands:
    """
    按状态缓存的 L+ / L- 表

    L 连续时两者都等于 L（mode = 'continuous'）；否则在 u 网格上估计后线性插值（mode = 'estimated'）
    """
    lagrangian: LagrangianSpec
    cfg: RelaxationConfig = field(default_factory=RelaxationConfig)
    force_estimate: bool = False
    _tables: Dict[Tuple[float, ...], Tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)

    @property
    def mode(self) -> str:
        return "continuous" if self.lagrangian.continuous and not self.force_estimate else "estimated"

    def table(self, x) -> Tuple[np.ndarray, np.ndarray]:
        """(L+ 表, L- 表)，定义在 cfg.u_grid() 上"""
        x = as_vector(x, self.lagrangian.n)
        key = tuple(float(v) for v in x)
        if key not in self._tables:
            us = self.cfg.u_grid()
            plus = np.array([relaxed_integrand(self.lagrangian, x, [u], "plus", self.cfg).value for u in us])
            minus = np.array([relaxed_integrand(self.lagrangian, x, [u], "minus", self.cfg).value for u in us])
            self._tables[key] = (plus, minus)
        return self._tables[key]

    def _lookup(self, x, u, which: int) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if self.mode == "continuous":
            x = as_vector(x, self.lagrangian.n)
            pts = u.reshape(-1, self.lagrangian.n)
            return np.asarray(self.lagrangian.evaluator(x[None, :], pts), dtype=float).reshape(u.shape[:1])
        us = self.cfg.u_grid()
        values = self.table(x)[which]
        flat = u.reshape(-1)
        out = np.interp(flat, us, values)
        return np.where((flat < us[0]) | (flat > us[-1]), INF, out)

    def plus(self, x, u) -> np.ndarray:
        return self._lookup(x, u, 0)

    def minus(self, x, u) -> np.ndarray:
        return self._lookup(x, u, 1)


# ============================================================================
# Hamilton 量
# ============================================================================

@dataclass(frozen=True, eq=False)
class HamiltonianTable:
    H: ConjugateTable
    H_plus: ConjugateTable
    H_minus: ConjugateTable
    relaxation_mode: str

    @property
    def truncated(self) -> bool:
        return self.H.any_truncated or self.H_plus.any_truncated or self.H_minus.any_truncated


def hamiltonians(L: LagrangianSpec, x, p_grid, relaxed: Optional[RelaxedIntegrands] = None,
                 cfg: Optional[ValueGridConfig] = None) -> HamiltonianTable:
    """
    H(x, p)、H+(x, p)、H-(x, p) 的离散共轭表（n = 1）

    H+ 为 L+ 的共轭，H- 为 L- 的共轭；L 连续时两者与 H 相同。取到 u 网格边界的点带截断标记
    """
    cfg = cfg or ValueGridConfig()
    if L.n != 1:
        raise NotReducible("Hamilton 量制表只支持 n = 1")
    x = as_vector(x, 1)
    relaxed = relaxed or RelaxedIntegrands(L)
    us = np.linspace(-cfg.u_max, cfg.u_max, cfg.u_points)
    section = np.broadcast_to(np.asarray(L.evaluator(x[None, :], us[:, None]), dtype=float), us.shape)
    H = legendre_fenchel(SampledFunction1D(us, section), p_grid)
    if relaxed.mode == "continuous":
        return HamiltonianTable(H=H, H_plus=H, H_minus=H, relaxation_mode="continuous")

    coarse = relaxed.cfg.u_grid()
    plus, minus = relaxed.table(x)
    H_plus = legendre_fenchel(SampledFunction1D(coarse, plus), p_grid)
    H_minus = legendre_fenchel(SampledFunction1D(coarse, minus), p_grid)
    return HamiltonianTable(H=H, H_plus=H_plus, H_minus=H_minus, relaxation_mode="estimated")


# ============================================================================
# 网格相依导数
# ============================================================================

def grid_contingent(layers: np.ndarray, lattice: StateLattice, tau: float, k: int, x: np.ndarray,
                    sigma: int, v: np.ndarray, cfg: ValueGridConfig) -> Tuple[float, float]:
    """
    网格函数在 (t_k, x) 处沿 (sigma, v) 的下/上相依导数

    h = j tau (j = 1..grid_tail)，方向扰动宽度 fan_rate * h；格点外取值用插值。
    可用步长为空或基点取 +inf 时返回 (nan, nan)
    """
    K = layers.shape[0] - 1
    n = x.shape[0]
    base = float(interpolate(layers[k], lattice, x[None, :])[0])
    if not math.isfinite(base):
        return math.nan, math.nan

    lower, upper = INF, -INF
    for j in range(1, cfg.grid_tail + 1):
        kk = k + sigma * j
        if kk < 0 or kk > K:
            break
        h = j * tau
        width = cfg.fan_rate * h
        offsets = np.vstack([np.zeros((1, n)), width * np.eye(n), -width * np.eye(n)])
        points = x[None, :] + h * (v[None, :] + offsets)
        quotients = (interpolate(layers[kk], lattice, points) - base) / h
        lower = min(lower, float(np.min(quotients)))
        upper = max(upper, float(np.max(quotients)))
    if lower == INF and upper == -INF:
        return math.nan, math.nan
    return lower, upper


# ============================================================================
# 初值达成、Lipschitz 表
# ============================================================================

class InitialAttainmentReport(BaseModel):
    exact_initial: bool
    lsc_proxy: bool
    cone_min_margin: float
    cone_tolerance: float
    skipped_infinite: int
    passed: bool


def _neighbor_max(values: np.ndarray, lattice: StateLattice) -> np.ndarray:
    """每个格点沿各坐标轴相邻格点取值的最大值"""
    shape = tuple(len(a) for a in lattice.axes)
    grid = values.reshape(shape)
    out = np.full(shape, -INF)
    for a in range(len(shape)):
        forward = np.full(shape, -INF)
        backward = np.full(shape, -INF)
        src = [slice(None)] * len(shape)
        dst = [slice(None)] * len(shape)
        src[a], dst[a] = slice(1, None), slice(None, -1)
        forward[tuple(dst)] = grid[tuple(src)]
        backward[tuple(src)] = grid[tuple(dst)]
        out = np.maximum(out, np.maximum(forward, backward))
    return out.reshape(-1)


def _neighbor_min(values: np.ndarray, lattice: StateLattice) -> np.ndarray:
    """每个格点与其沿坐标轴一个格距以内格点的最小值"""
    shape = tuple(len(a) for a in lattice.axes)
    grid = values.reshape(shape)
    out = grid.copy()
    for a in range(len(shape)):
        src = [slice(None)] * len(shape)
        dst = [slice(None)] * len(shape)
        src[a], dst[a] = slice(1, None), slice(None, -1)
        out[tuple(dst)] = np.minimum(out[tuple(dst)], grid[tuple(src)])
        out[tuple(src)] = np.minimum(out[tuple(src)], grid[tuple(dst)])
    return out.reshape(-1)


def _local_constant(grid: ValueGrid, layers: int = 2) -> float:
    """前几层有限差商的最大值，用作容差的比例常数"""
    constants = [0.0]
    V = grid.V[:layers + 1]
    dt = np.abs(np.diff(V, axis=0)) / grid.tau
    constants.append(float(np.max(np.where(np.isfinite(dt), dt, 0.0))))
    shape = tuple(len(a) for a in grid.lattice.axes)
    for a, d in enumerate(grid.lattice.spacing):
        diff = np.abs(np.diff(V.reshape((V.shape[0],) + shape), axis=a + 1)) / d
        constants.append(float(np.max(np.where(np.isfinite(diff), diff, 0.0))))
    return max(constants)


def check_initial_attainment(grid: ValueGrid, phi: Optional[TerminalCost] = None,
                             cfg: Optional[ValueGridConfig] = None) -> InitialAttainmentReport:
    """
    V[0] = phi 精确成立；phi 无孤立向上尖峰；第一层在一个格距内的最小值不低于 phi(x0) 减容差

    容差为 tol_lsc + C1 (tau + 格距)，C1 为前几层的有限差商常数；phi = +inf 的点跳过
    """
    cfg = cfg or grid.cfg
    phi = phi or grid.terminal
    phi_values = np.asarray(phi(grid.nodes), dtype=float).reshape(-1)

    exact = bool(np.array_equal(grid.V[0], phi_values))
    neighbors = _neighbor_max(phi_values, grid.lattice)
    with np.errstate(invalid="ignore"):
        lsc = bool(np.all((phi_values <= neighbors + cfg.tol_lsc) | ~np.isfinite(phi_values)
                          | ~np.isfinite(neighbors)))

    finite = np.isfinite(phi_values)
    tolerance = cfg.tol_lsc + _local_constant(grid) * (grid.tau + grid.spacing)
    cone = _neighbor_min(grid.V[1], grid.lattice)
    margin = cone[finite] - (phi_values[finite] - tolerance)
    min_margin = float(np.min(margin)) if margin.size else INF

    return InitialAttainmentReport(exact_initial=exact, lsc_proxy=lsc, cone_min_margin=min_margin,
                                   cone_tolerance=tolerance, skipped_infinite=int(np.sum(~finite)),
                                   passed=exact and lsc and min_margin >= 0.0)


class LipschitzCell(BaseModel):
    t_range: Tuple[float, float]
    x_range: Tuple[float, float]
    lipschitz: float
    lipschitz_t: float
    lipschitz_x: float


def lipschitz_estimate_V(grid: ValueGrid, region: Optional[Region] = None,
                         splits: int = 2) -> List[LipschitzCell]:
    """
    局部 Lipschitz 表：区域按 t 与第一坐标各切成 splits 段，每个子区域内相邻格点差商的最大值

    Args:
        grid: 值函数网格
        region: 检验区域，t 应远离 0
        splits: 每个方向的切分段数

    Returns:
        LipschitzCell 列表
    """
    region = region or Region()
    times = grid.times
    nodes = grid.nodes
    shape = tuple(len(a) for a in grid.lattice.axes)
    tk = np.flatnonzero(region.contains_t(times))
    inside = region.contains_x(nodes).reshape(shape)
    axis0 = grid.lattice.axes[0]
    xi = np.flatnonzero(np.any(inside.reshape(shape[0], -1), axis=1))
    cells = []

    for t_part in np.array_split(tk, splits):
        for x_part in np.array_split(xi, splits):
            if t_part.size == 0 or x_part.size == 0:
                continue
            block = grid.V[t_part[0]:t_part[-1] + 1].reshape((-1,) + shape)[:, x_part[0]:x_part[-1] + 1]
            mask = inside[x_part[0]:x_part[-1] + 1]
            lt = _max_quotient(block, 0, grid.tau, mask[None, ...])
            lx = max(_max_quotient(block, a + 1, d, mask[None, ...])
                     for a, d in enumerate(grid.lattice.spacing))
            cells.append(LipschitzCell(t_range=(float(times[t_part[0]]), float(times[t_part[-1]])),
                                       x_range=(float(axis0[x_part[0]]), float(axis0[x_part[-1]])),
                                       lipschitz=max(lt, lx), lipschitz_t=lt, lipschitz_x=lx))
    return cells


def _max_quotient(block: np.ndarray, axis: int, step: float, mask: np.ndarray) -> float:
    if block.shape[axis] < 2:
        return 0.0
    diff = np.abs(np.diff(block, axis=axis)) / step
    both = np.logical_and(np.take(mask, range(mask.shape[axis] - 1), axis=axis) if mask.shape[axis] > 1 else mask,
                          np.take(mask, range(1, mask.shape[axis]), axis=axis) if mask.shape[axis] > 1 else mask)
    both = np.broadcast_to(both, diff.shape)
    values = diff[both & np.isfinite(diff)]
    return float(np.max(values)) if values.size else 0.0


# ============================================================================
# HJ 残差
# ============================================================================

class HjLocator(BaseModel):
    kind: str
    t: float
    x: List[float]
    residual: float


class HjResidualReport(BaseModel):
    """HJ 上/下解不等式的残差汇总；worst 为每类最差的至多 10 个点"""
    points_tested: int
    nonempty_points: int
    supersolution_min: float
    subsolution_max: float
    supersolution_pass_fraction: float
    subsolution_pass_fraction: float
    exists_max: float
    forall_max: float
    exists_pass_fraction: float
    forall_pass_fraction: float
    relaxation_mode: str
    tolerance: float
    passed: bool
    worst: List[HjLocator] = Field(default_factory=list)


def _quotient_min(V: np.ndarray, k: np.ndarray, i: np.ndarray, dk: int, di: int,
                  tail: int, step: float) -> np.ndarray:
    """沿 (dk, di) 方向 j = 1..tail 的差商的最小值"""
    base = V[k, i]
    out = np.full(base.shape, INF)
    for j in range(1, tail + 1):
        q = (V[k + dk * j, i + di * j] - base) / (j * step)
        out = np.minimum(out, np.where(np.isnan(q), INF, q))
    return out


def _worst(kind: str, values: np.ndarray, times: np.ndarray, xs: np.ndarray, largest: bool) -> List[HjLocator]:
    finite = np.isfinite(values)
    order = np.argsort(-values if largest else values, kind="stable")
    order = [o for o in order if finite[o]][:10]
    return [HjLocator(kind=kind, t=float(times[o]), x=[float(xs[o])], residual=float(values[o])) for o in order]


def hj_residuals(grid: ValueGrid, relaxed: Optional[RelaxedIntegrands] = None,
                 region: Optional[Region] = None, stride: int = 1) -> HjResidualReport:
    """
    HJ 不等式检验（n = 1）

    - 上解：对网格次微分盒子中的 (p_t, p_x) 采样，min p_t + H-(x, -p_x) >= -tol
    - 下解：max p_t + H+(x, -p_x) <= tol
    - 存在性：min_u [D_up V(t, x)(-1, u) + L-(x, u)] <= tol，u 取最优斜率及其 9 点扇形
    - 任意性：max_u [D_down V(t, x)(1, -u) - L+(x, u)] <= tol，u 取扇形加上 [-s_max, s_max] 的 9 个点

    Args:
        grid: 值函数网格
        relaxed: 松弛积分量，默认按 L 是否连续自动选择
        region: 检验区域
        stride: 空间方向的抽样步长

    Returns:
        HjResidualReport
    """
    L = grid.lagrangian
    if L.n != 1:
        raise DimensionMismatch("HJ 残差检验只支持 n = 1")
    cfg = grid.cfg
    relaxed = relaxed or RelaxedIntegrands(L)
    region = region or Region()
    tail = cfg.grid_tail
    tol = cfg.tol_hj
    V = grid.V
    K, S = V.shape[0] - 1, V.shape[1]
    axis = grid.lattice.axes[0]
    dx = float(axis[1] - axis[0])

    ks = np.arange(tail, K - tail + 1)
    ks = ks[region.contains_t(grid.times[ks])]
    iis = np.arange(tail, S - tail, stride)
    iis = iis[region.contains_x(axis[iis][:, None])]
    kk, ii = np.meshgrid(ks, iis, indexing="ij")
    kk, ii = kk.reshape(-1), ii.reshape(-1)
    finite = np.isfinite(V[kk, ii])
    kk, ii = kk[finite], ii[finite]
    tested = kk.size

    # 坐标轴方向的网格次微分盒子
    d_plus = np.stack([_quotient_min(V, kk, ii, 1, 0, tail, grid.tau),
                       _quotient_min(V, kk, ii, 0, 1, tail, dx)], axis=1)
    d_minus = np.stack([_quotient_min(V, kk, ii, -1, 0, tail, grid.tau),
                        _quotient_min(V, kk, ii, 0, -1, tail, dx)], axis=1)
    lo, hi, nonempty = axis_box_subdifferential(d_plus, d_minus, cfg.tol_grid_sub)
    nonempty &= np.all(np.isfinite(lo) & np.isfinite(hi), axis=1)

    p_grid = np.linspace(-cfg.p_max, cfg.p_max, cfg.p_points)
    tables: Dict[int, HamiltonianTable] = {}
    super_res = np.full(tested, INF)
    sub_res = np.full(tested, -INF)
    weights = np.linspace(0.0, 1.0, 5)
    for idx in np.flatnonzero(nonempty):
        i = int(ii[idx])
        if i not in tables:
            tables[i] = hamiltonians(L, axis[i:i + 1], p_grid, relaxed, cfg)
        table = tables[i]
        pt = lo[idx, 0] + weights * (hi[idx, 0] - lo[idx, 0])
        px = lo[idx, 1] + weights * (hi[idx, 1] - lo[idx, 1])
        PT, PX = np.meshgrid(pt, px, indexing="ij")
        super_res[idx] = float(np.min(PT + table.H_minus(-PX)))
        sub_res[idx] = float(np.max(PT + table.H_plus(-PX)))

    # 原始不等式：相依导数 + 松弛积分量
    quantum = dx / (cfg.sub * grid.tau)
    fan = np.arange(-4, 5) * quantum
    sweep = np.linspace(-cfg.s_max, cfg.s_max, 9)
    exists = np.full(tested, INF)
    forall = np.full(tested, -INF)
    for idx in range(tested):
        k, i = int(kk[idx]), int(ii[idx])
        x = axis[i:i + 1]
        center = float(grid.ustar[k, i, 0])
        candidates = center + fan
        l_minus = relaxed.minus(x, candidates)
        best = INF
        for u, lm in zip(candidates, l_minus):
            d_up, _ = grid_contingent(V, grid.lattice, grid.tau, k, x, -1, np.array([u]), cfg)
            if not math.isnan(d_up):
                best = min(best, d_up + lm)
        exists[idx] = best

        everywhere = np.concatenate([candidates, sweep])
        l_plus = relaxed.plus(x, everywhere)
        worst = -INF
        for u, lp in zip(everywhere, l_plus):
            _, d_down = grid_contingent(V, grid.lattice, grid.tau, k, x, 1, np.array([-u]), cfg)
            if not math.isnan(d_down):
                worst = max(worst, d_down - lp)
        forall[idx] = worst

    checked = np.flatnonzero(nonempty)
    super_ok = super_res[checked] >= -tol
    sub_ok = sub_res[checked] <= tol
    exists_ok = exists <= tol
    forall_ok = forall <= tol

    def fraction(mask: np.ndarray) -> float:
        return float(np.mean(mask)) if mask.size else 1.0

    times = grid.times[kk]
    xs = axis[ii]
    worst = (_worst("supersolution", super_res[checked], times[checked], xs[checked], largest=False)
             + _worst("subsolution", sub_res[checked], times[checked], xs[checked], largest=True)
             + _worst("exists", exists, times, xs, largest=True)
             + _worst("forall", forall, times, xs, largest=True))

    report = HjResidualReport(
        points_tested=int(tested), nonempty_points=int(checked.size),
        supersolution_min=float(np.min(super_res[checked])) if checked.size else INF,
        subsolution_max=float(np.max(sub_res[checked])) if checked.size else -INF,
        supersolution_pass_fraction=fraction(super_ok), subsolution_pass_fraction=fraction(sub_ok),
        exists_max=float(np.max(exists)) if tested else -INF,
        forall_max=float(np.max(forall)) if tested else -INF,
        exists_pass_fraction=fraction(exists_ok), forall_pass_fraction=fraction(forall_ok),
        relaxation_mode=relaxed.mode, tolerance=tol,
        passed=min(fraction(super_ok), fraction(sub_ok)) >= cfg.hj_fraction,
        worst=worst,
    )
    logger.info(f"HJ 残差: 测试点={tested}, 非空={checked.size}, 通过={report.passed}")
    return report


# ============================================================================
# Dini 单调性
# ============================================================================

class DiniReport(BaseModel):
    dini_max: float
    lsc_proxy: bool
    premise: bool
    increment: float
    integral_bound: Optional[float] = None
    holds: bool


def dini_monotonicity(t, f, g=None, tol: float = 1e-9) -> DiniReport:
    """
    采样函数的 Dini 单调性

    无 g 时：前向 Dini 差商的最大值 <= tol 则要求 f(b) <= f(a) + tol；
    有 g 时：要求 f(b) - f(a) <= sum g delta + tol（左端点求积）
    """
    t = np.asarray(t, dtype=float)
    f = np.asarray(f, dtype=float)
    delta = np.diff(t)
    quotients = np.diff(f) / delta
    dini_max = float(np.max(quotients))

    neighbors = np.maximum(np.concatenate([[-INF], f[:-1]]), np.concatenate([f[1:], [-INF]]))
    lsc = bool(np.all(f <= neighbors + tol))
    increment = float(f[-1] - f[0])

    if g is None:
        premise = dini_max <= tol
        holds = (not premise) or increment <= tol
        return DiniReport(dini_max=dini_max, lsc_proxy=lsc, premise=premise, increment=increment, holds=holds)

    g = np.asarray(g, dtype=float)
    g = g[:-1] if g.shape[0] == t.shape[0] else g
    bound = float(np.sum(g * delta))
    premise = bool(np.all(quotients <= g + tol))
    return DiniReport(dini_max=dini_max, lsc_proxy=lsc, premise=premise, increment=increment,
                      integral_bound=bound, holds=increment <= bound + tol)


def dini_along_trajectory(grid: ValueGrid, traj: Trajectory) -> DiniReport:
    """gamma(s) = V(T - s, y(s)) 与 g(s) = L(y(s), y'(s))"""
    N = traj.N
    gamma = np.array([float(grid.value(N - s, traj.states[s])[0]) for s in range(N + 1)])
    g = np.asarray(grid.lagrangian.evaluator(traj.states[:-1], traj.slopes), dtype=float)
    return dini_monotonicity(traj.times, gamma, g, tol=grid.cfg.tol_hj)


# ============================================================================
# 比较原理
# ============================================================================

class ComparisonVerdict(BaseModel):
    verdict: str = Field(description="NotAdmissible / SubsolutionViolated / Dominated / NotDominated")
    label: str = Field(default="sampled-verified",
                       description="n >= 2 且 L 不连续时下解检验用 L 代替 L+，标签带 L-fallback 后缀")
    initial_gap: float
    subsolution_max: float
    domination_max: float
    first_violation: Optional[HjLocator] = None


def comparison_check(W: np.ndarray, grid: ValueGrid, relaxed: Optional[RelaxedIntegrands] = None,
                     phi: Optional[TerminalCost] = None, region: Optional[Region] = None,
                     stride: int = 4, tol: Optional[float] = None) -> ComparisonVerdict:
    """
    比较原理的采样检验

    W(0, .) 必须等于 phi（否则 NotAdmissible）；在采样点与方向上检验下解不等式
    D_down W(t, x)(1, -u) <= L+(x, u)；成立时在整个网格上检验 W <= V + tol
    n >= 2 时直接用 L 代替 L+，L 不连续时标签注明这一退化
    """
    cfg = grid.cfg
    tol = cfg.tol_hj if tol is None else tol
    L = grid.lagrangian
    relaxed = relaxed or RelaxedIntegrands(L)
    phi = phi or grid.terminal
    region = region or Region()
    W = np.asarray(W, dtype=float).reshape(grid.V.shape)
    label = "sampled-verified"
    if L.n >= 2 and relaxed.mode != "continuous":
        label = "sampled-verified (L-fallback for L+)"
        logger.warning(f"⚠ n={L.n} 且 L 不连续，下解检验以 L 代替 L+")
    phi_values = np.asarray(phi(grid.nodes), dtype=float).reshape(-1)

    same_inf = ~np.isfinite(W[0]) & ~np.isfinite(phi_values)
    gap = np.where(same_inf, 0.0, np.abs(W[0] - phi_values))
    gap = np.where(np.isnan(gap), INF, gap)
    initial_gap = float(np.max(gap))
    if initial_gap > tol:
        return ComparisonVerdict(verdict="NotAdmissible", initial_gap=initial_gap,
                                 subsolution_max=math.nan, domination_max=math.nan, label=label)

    nodes = grid.nodes
    us = np.linspace(-cfg.s_max, cfg.s_max, 9)
    sub_max, violation = -INF, None
    ks = [k for k in range(0, grid.K - cfg.grid_tail + 1, stride) if region.contains_t(np.array([grid.times[k]]))[0]]
    inside = np.flatnonzero(region.contains_x(nodes))[::stride]
    for k in ks:
        for i in inside:
            x = nodes[i]
            if L.n == 1:
                l_plus = relaxed.plus(x, us)
                directions = us[:, None]
            else:
                directions = np.stack([np.concatenate([us, np.zeros_like(us)]),
                                       np.concatenate([np.zeros_like(us), us])], axis=1)
                l_plus = np.asarray(L.evaluator(x[None, :], directions), dtype=float)
            for u, lp in zip(directions, l_plus):
                _, d_down = grid_contingent(W, grid.lattice, grid.tau, k, x, 1, -u, cfg)
                if math.isnan(d_down):
                    continue
                residual = d_down - lp
                if residual > sub_max:
                    sub_max = residual
                if residual > tol and violation is None:
                    violation = HjLocator(kind="subsolution", t=float(grid.times[k]),
                                          x=x.tolist(), residual=float(residual))
    if violation is not None:
        return ComparisonVerdict(verdict="SubsolutionViolated", initial_gap=initial_gap,
                                 subsolution_max=sub_max, domination_max=math.nan, first_violation=violation,
                                 label=label)

    with np.errstate(invalid="ignore"):
        excess = np.where(np.isfinite(W), W - grid.V, -INF)
    excess = np.where(np.isnan(excess), -INF, excess)
    domination_max = float(np.max(excess))
    if domination_max > tol:
        k, i = np.unravel_index(int(np.argmax(excess)), excess.shape)
        locator = HjLocator(kind="domination", t=float(grid.times[k]), x=nodes[i].tolist(),
                            residual=domination_max)
        return ComparisonVerdict(verdict="NotDominated", initial_gap=initial_gap, subsolution_max=sub_max,
                                 domination_max=domination_max, first_violation=locator, label=label)
    return ComparisonVerdict(verdict="Dominated", initial_gap=initial_gap, subsolution_max=sub_max,
                             domination_max=domination_max, label=label)


# ============================================================================
# 微分包含刻画
# ============================================================================

class InclusionVerdict(BaseModel):
    verdict: str = Field(description="MINIMIZER / NOT_MINIMIZER")
    pass_fraction: float
    value_gap: float = Field(description="action + phi(end) - V(T, x)")
    equality_fraction: float
    max_r_F: float
    max_r_G: float
    r_F: List[float] = Field(default_factory=list, exclude=True)
    r_G: List[float] = Field(default_factory=list, exclude=True)


def inclusion_check(traj: Trajectory, grid: ValueGrid, L: Optional[LagrangianSpec] = None) -> InclusionVerdict:
    """
    微分包含检验

    每个节点 s：r_F = D_up V(t - s, y)(-1, y') + L(y, y')，r_G = L(y, y') - D_down V(t - s, y)(1, -y')；
    至少 inclusion_fraction 的节点满足其一，且 action + phi(end) <= V(T, x) + tol 时判为 MINIMIZER。
    另外统计四个相依导数等式 D V(-1, y') = -L、D V(1, -y') = L 在节点上成立的比例

    Raises:
        TrajectoryOffGrid: 起点不在格点上、步长与 tau 不符或时长超过网格
    """
    cfg = grid.cfg
    L = L or grid.lagrangian
    tol = cfg.tol_inclusion
    if abs(traj.step - grid.tau) > 1e-9 * grid.tau or abs(traj.t0) > 1e-12:
        raise TrajectoryOffGrid(f"轨迹步长 {traj.step} 或起点时间 {traj.t0} 与值函数网格不符")
    if traj.N > grid.K:
        raise TrajectoryOffGrid(f"轨迹步数 {traj.N} 超过网格层数 {grid.K}")
    gap_to_lattice = np.min(np.linalg.norm(grid.nodes - traj.states[0][None, :], axis=1))
    if gap_to_lattice > 1e-9 * max(1.0, grid.spacing):
        raise TrajectoryOffGrid(f"起点 {traj.states[0].tolist()} 不在格点上")

    N = traj.N
    slopes = traj.slopes
    L_values = np.asarray(L.evaluator(traj.states[:-1], slopes), dtype=float)
    r_F, r_G, equal = [], [], []
    for s in range(N):
        k = N - s
        y, u = traj.states[s], slopes[s]
        up_lo, up_hi = grid_contingent(grid.V, grid.lattice, grid.tau, k, y, -1, u, cfg)
        down_lo, down_hi = grid_contingent(grid.V, grid.lattice, grid.tau, k, y, 1, -u, cfg)
        r_F.append(up_lo + L_values[s])
        r_G.append(L_values[s] - down_hi)
        quantities = np.array([up_lo + L_values[s], up_hi + L_values[s],
                               down_lo - L_values[s], down_hi - L_values[s]])
        equal.append(bool(np.all(np.abs(quantities) <= tol)))

    r_F, r_G = np.array(r_F), np.array(r_G)
    with np.errstate(invalid="ignore"):
        node_ok = (r_F <= tol) | (r_G <= tol)
    action = evaluate_action(traj, L)
    end_cost = float(np.asarray(grid.terminal(traj.states[-1][None, :])).reshape(-1)[0])
    start_value = float(grid.value(N, traj.states[0])[0])
    value_gap = action + end_cost - start_value
    pass_fraction = float(np.mean(node_ok))
    minimizer = pass_fraction >= cfg.inclusion_fraction and value_gap <= tol

    finite_F = r_F[np.isfinite(r_F)]
    finite_G = r_G[np.isfinite(r_G)]
    return InclusionVerdict(
        verdict="MINIMIZER" if minimizer else "NOT_MINIMIZER",
        pass_fraction=pass_fraction, value_gap=value_gap,
        equality_fraction=float(np.mean(equal)),
        max_r_F=float(np.max(finite_F)) if finite_F.size else INF,
        max_r_G=float(np.max(finite_G)) if finite_G.size else INF,
        r_F=r_F.tolist(), r_G=r_G.tolist(),
    )


def lagrange_consistency(grid: ValueGrid, x) -> Tuple[float, float]:
    """
    同一转移核下两种求解器的一致性：返回 (V(T, x), min_j [直接法最短路代价_j + phi_j])

    只在 sub = 1 且 n = 1 时两者使用逐项相同的转移代价
    """
    nodes = grid.nodes
    start = int(np.argmin(np.linalg.norm(nodes - as_vector(x, grid.lagrangian.n)[None, :], axis=1)))
    T = transition_costs(grid.lagrangian, nodes, grid.tau, s_max=grid.cfg.s_max * (1 + 1e-9),
                         threads=grid.cfg.threads)
    cost, _, _ = lattice_shortest_path(T, start, grid.K, threads=grid.cfg.threads)
    return float(grid.V[grid.K, start]), float(np.min(cost + grid.phi))
