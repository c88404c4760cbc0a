"""
直接法求解器
在状态-时间格点上用动态规划全局求解离散化的固定端点 Lagrange 问题，
提供局部细化、重参数化增益检验与经验 Lipschitz 常数
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .config import LOGGING_CONFIG, get_solver_config
from .errors import (
    ConfigError,
    CostOverflow,
    DimensionMismatch,
    EndpointOutsideGrid,
    MassMismatch,
    SlopeOutOfDomain,
)
from .lagrangian_model import (
    LagrangianSpec,
    ProblemInstance,
    Trajectory,
    evaluate_action,
    saturating_sum,
)
from .parallel import map_chunks

# 配置日志
logging.basicConfig(level=LOGGING_CONFIG["level"], format=LOGGING_CONFIG["format"])
logger = logging.getLogger(__name__)

INF = math.inf


class SolverConfig(BaseModel):
    """格点动态规划的离散化参数"""
    model_config = ConfigDict(frozen=True)

    steps: int = Field(default_factory=lambda: get_solver_config()["steps"], ge=2,
                       description="时间步数 N")
    resolution: int = Field(default_factory=lambda: get_solver_config()["resolution"], ge=3,
                            description="每个坐标轴上的状态格点数")
    center: Optional[List[float]] = Field(default=None, description="状态网格中心，默认取端点中点")
    half_width: Optional[float] = Field(default_factory=lambda: get_solver_config()["half_width"], gt=0,
                                        description="状态网格半宽，默认按端点距离加 0.5")
    slope_policy: Literal["all", "capped"] = Field(
        default_factory=lambda: get_solver_config()["slope_policy"])
    s_max: Optional[float] = Field(default_factory=lambda: get_solver_config()["s_max"], gt=0)
    tie_break: Literal["lowest_index"] = "lowest_index"
    threads: Optional[int] = Field(default=None, ge=1)

    @model_validator(mode="after")
    def _check_cap(self):
        if self.slope_policy == "capped" and self.s_max is None:
            raise ValueError("slope_policy='capped' 需要 s_max")
        return self


@dataclass(frozen=True, eq=False)
class StateLattice:
    """张量积状态格点，nodes 形状 (S, n)，按 C 顺序展开"""
    axes: Tuple[np.ndarray, ...]

    @property
    def n(self) -> int:
        return len(self.axes)

    @property
    def nodes(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=-1)

    @property
    def spacing(self) -> np.ndarray:
        return np.array([axis[1] - axis[0] for axis in self.axes])

    def snap(self, x: np.ndarray) -> Tuple[int, float]:
        """
        最近格点下标与吸附距离

        Raises:
            EndpointOutsideGrid: 超出网格半个格距以上
        """
        idx = []
        for axis, value in zip(self.axes, x):
            half_cell = 0.5 * (axis[1] - axis[0])
            if value < axis[0] - half_cell or value > axis[-1] + half_cell:
                raise EndpointOutsideGrid(f"端点 {x.tolist()} 不在状态网格 [{axis[0]}, {axis[-1]}] 内")
            idx.append(int(np.argmin(np.abs(axis - value))))
        flat = int(np.ravel_multi_index(tuple(idx), tuple(len(a) for a in self.axes)))
        distance = float(np.linalg.norm(self.nodes[flat] - x))
        return flat, distance


@dataclass(frozen=True, eq=False)
class SolveResult:
    """求解结果；action 与 evaluate_action(trajectory) 按位相等"""
    trajectory: Trajectory
    action: float
    grid_global: bool
    ties: int
    tie_counts: np.ndarray
    snap_distance: float
    lagrangian: LagrangianSpec
    lattice: Optional[StateLattice] = None

    def to_report(self) -> dict:
        return {
            "action": self.action,
            "lipschitz": empirical_lipschitz(self.trajectory),
            "ties": int(self.ties),
            "snap_distance": self.snap_distance,
        }


# ============================================================================
# 共享转移核
# ============================================================================

def transition_costs(L: LagrangianSpec, nodes: np.ndarray, step: float,
                     s_max: Optional[float] = None, threads: Optional[int] = None) -> np.ndarray:
    """
    T[i, j] = step * L(X_i, (X_j - X_i) / step)，斜率超过 s_max 处为 +inf

    与 evaluate_action 使用完全相同的浮点运算顺序
    """
    S = nodes.shape[0]

    def rows(start: int, stop: int) -> np.ndarray:
        origin = nodes[start:stop, None, :]
        slopes = (nodes[None, :, :] - origin) / step
        block = step * np.asarray(L.evaluator(origin, slopes), dtype=float)
        block = np.broadcast_to(block, (stop - start, S)).copy()
        if s_max is not None:
            block[np.sqrt(np.sum(slopes * slopes, axis=-1)) > s_max] = INF
        return block

    return map_chunks(rows, S, threads=threads)


def lattice_shortest_path(T: np.ndarray, start: int, steps: int,
                          threads: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    分层有向图上的最短路

    Args:
        T: 层间转移代价 (S, S)，与层无关
        start: 起点下标
        steps: 层数
        threads: 线程数

    Returns:
        (cost, pred, ties)：终层代价 (S,)；前驱 (steps, S)；每层每个节点的并列前驱个数 (steps, S)
    """
    S = T.shape[0]
    cost = np.full(S, INF)
    cost[start] = 0.0
    pred = np.zeros((steps, S), dtype=int)
    ties = np.zeros((steps, S), dtype=int)

    for k in range(steps):
        previous = cost

        def columns(a: int, b: int) -> np.ndarray:
            total = previous[:, None] + T[:, a:b]
            idx = np.argmin(total, axis=0)
            best = total[idx, np.arange(b - a)]
            count = np.sum(total == best[None, :], axis=0) - 1
            return np.stack([best, idx.astype(float), count.astype(float)], axis=1)

        layer = map_chunks(columns, S, threads=threads)
        cost = layer[:, 0].copy()
        pred[k] = layer[:, 1].astype(int)
        ties[k] = np.where(np.isfinite(cost), layer[:, 2], 0).astype(int)

    return cost, pred, ties


def backtrack(pred: np.ndarray, end: int) -> np.ndarray:
    steps = pred.shape[0]
    path = np.empty(steps + 1, dtype=int)
    path[steps] = end
    for k in range(steps - 1, -1, -1):
        path[k] = pred[k, path[k + 1]]
    return path


def build_lattice(problem: ProblemInstance, cfg: SolverConfig) -> StateLattice:
    xa, xb = problem.xa, problem.xb
    center = np.asarray(cfg.center, dtype=float) if cfg.center is not None else 0.5 * (xa + xb)
    if center.shape[0] != problem.n:
        raise DimensionMismatch(f"网格中心维数 {center.shape[0]} 与问题维数 {problem.n} 不一致")
    half = cfg.half_width if cfg.half_width is not None else float(np.max(np.abs(xb - xa))) / 2 + 0.5
    return StateLattice(tuple(np.linspace(c - half, c + half, cfg.resolution) for c in center))


# ============================================================================
# 求解
# ============================================================================

def solve_lagrange_dp(problem: ProblemInstance, cfg: Optional[SolverConfig] = None) -> SolveResult:
    """
    固定端点 Lagrange 问题的格点全局最优解

    Args:
        problem: kind = 'lagrange' 的问题
        cfg: 求解配置

    Returns:
        SolveResult，轨迹是所有给定端点格点路径中作用量最小者，
        并列时取前驱下标最小者

    Raises:
        EndpointOutsideGrid: 端点不在网格内
        CostOverflow: 所有路径代价为 +inf
    """
    cfg = cfg or SolverConfig()
    if problem.kind != "lagrange":
        raise ConfigError("solve_lagrange_dp 只接受 lagrange 问题")
    if problem.n > 2 and cfg.slope_policy == "all":
        raise ConfigError(f"全转移策略只支持 n <= 2，当前 n = {problem.n}")

    lattice = build_lattice(problem, cfg)
    nodes = lattice.nodes
    start, snap_a = lattice.snap(problem.xa)
    end, snap_b = lattice.snap(problem.xb)
    step = (problem.b - problem.a) / cfg.steps

    s_max = cfg.s_max if cfg.slope_policy == "capped" else None
    logger.info(f"开始格点求解: N={cfg.steps}, 状态数={nodes.shape[0]}, s_max={s_max}")
    T = transition_costs(problem.lagrangian, nodes, step, s_max, cfg.threads)
    cost, pred, ties = lattice_shortest_path(T, start, cfg.steps, cfg.threads)

    if not math.isfinite(cost[end]):
        raise CostOverflow("所有连接端点的格点路径代价均为 +inf")

    path = backtrack(pred, end)
    traj = Trajectory(t0=problem.a, step=step, states=nodes[path])
    tie_counts = np.array([ties[k, path[k + 1]] for k in range(cfg.steps)])
    action = evaluate_action(traj, problem.lagrangian)
    logger.info(f"✓ 格点求解完成: action={action:.6g}, 并列={int(tie_counts.sum())}")

    return SolveResult(trajectory=traj, action=action, grid_global=True, ties=int(tie_counts.sum()),
                       tie_counts=tie_counts, snap_distance=max(snap_a, snap_b),
                       lagrangian=problem.lagrangian, lattice=lattice)


def refine_local(result: SolveResult, sweeps: int = 3, delta: Optional[float] = None) -> SolveResult:
    """
    逐坐标局部细化：内部节点在 {-1, -1/2, 0, 1/2, 1} * delta 的偏移中取局部代价最小者，
    delta 每轮减半；一轮之后作用量若上升则撤销该轮。端点固定，作用量不增
    """
    traj = result.trajectory
    L = result.lagrangian
    states = traj.states.copy()
    h = traj.step
    if delta is None:
        spacing = result.lattice.spacing if result.lattice is not None else np.array([h])
        delta = 0.5 * float(np.min(spacing))

    offsets = np.array([0.0, -1.0, -0.5, 0.5, 1.0])
    best_action = result.action

    for sweep in range(sweeps):
        trial = states.copy()
        for i in range(1, traj.N):
            for axis in range(traj.n):
                candidates = np.repeat(trial[i][None, :], offsets.shape[0], axis=0)
                candidates[:, axis] += offsets * delta
                left = h * np.asarray(L.evaluator(trial[i - 1][None, :],
                                                  (candidates - trial[i - 1][None, :]) / h), dtype=float)
                right = h * np.asarray(L.evaluator(candidates,
                                                   (trial[i + 1][None, :] - candidates) / h), dtype=float)
                local = left + right
                trial[i] = candidates[int(np.argmin(local))]
        action = evaluate_action(traj.with_states(trial), L)
        if action <= best_action:
            states, best_action = trial, action
        else:
            logger.debug(f"⚠ 第 {sweep + 1} 轮细化使作用量上升，已撤销")
        delta *= 0.5

    refined = traj.with_states(states)
    return SolveResult(trajectory=refined, action=evaluate_action(refined, L), grid_global=False,
                       ties=result.ties, tie_counts=result.tie_counts,
                       snap_distance=result.snap_distance, lagrangian=L, lattice=result.lattice)


# ============================================================================
# 重参数化与经验 Lipschitz 常数
# ============================================================================

def reparametrized_cost(traj: Trajectory, L: LagrangianSpec, v) -> np.ndarray:
    """f(t_i, v_i) = L(y_i, u_i / v_i) * v_i，v <= 1/2 处为 +inf"""
    v = np.broadcast_to(np.asarray(v, dtype=float), (traj.N,))
    out = np.full(traj.N, INF)
    ok = v > 0.5
    slopes = traj.slopes[ok] / v[ok][:, None]
    out[ok] = np.asarray(L.evaluator(traj.states[:-1][ok], slopes), dtype=float) * v[ok]
    return out


def reparametrization_gain(traj: Trajectory, L: LagrangianSpec, psi_slopes) -> float:
    """
    重参数化增益 sum h f(t_i, psi'_i) - sum h f(t_i, 1)

    对最小化轨迹，结果应不小于 -tol_repar

    Raises:
        SlopeOutOfDomain: 存在 psi' <= 1/2
        MassMismatch: sum psi' h 与 b - a 不符
    """
    psi = np.asarray(psi_slopes, dtype=float)
    if psi.shape != (traj.N,):
        raise DimensionMismatch(f"psi' 长度 {psi.shape} 与段数 {traj.N} 不一致")
    if np.any(psi <= 0.5):
        raise SlopeOutOfDomain(f"psi' 必须全部大于 1/2，最小值为 {float(psi.min())}")
    length = traj.t_end - traj.t0
    if abs(float(np.sum(psi * traj.step)) - length) > 1e-12 * length:
        raise MassMismatch(f"sum psi' h = {float(np.sum(psi * traj.step))} 与区间长度 {length} 不符")

    moved = saturating_sum(traj.step * reparametrized_cost(traj, L, psi))
    base = saturating_sum(traj.step * reparametrized_cost(traj, L, 1.0))
    if base == INF and moved == INF:
        # 两侧都为 +inf 时没有可比较的增益
        logger.warning("⚠ 重参数化前后作用量均为 +inf，增益记为 0")
        return 0.0
    return moved - base


def empirical_lipschitz(traj: Trajectory) -> float:
    """max_i |u_i|"""
    return float(np.max(np.sqrt(np.sum(traj.slopes * traj.slopes, axis=-1))))

