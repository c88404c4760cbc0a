"""
先验 Lipschitz 界
按常数链 M1 -> R -> M2 -> c_lb -> M -> C -> K 计算显式常数，并与经验斜率比较
"""

import logging
import math
from typing import Callable, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .config import LOGGING_CONFIG, get_bound_config
from .convex_analysis import SampledFunction1D, lower_convex_envelope_1d
from .direct_solver import empirical_lipschitz
from .errors import GaugeTooWeak, HypothesisFailed
from .lagrangian_model import DataBounds, GrowthGauge, LagrangianSpec, ProblemInstance, Trajectory, evaluate_action

# 配置日志
logging.basicConfig(level=LOGGING_CONFIG["level"], format=LOGGING_CONFIG["format"])
logger = logging.getLogger(__name__)


class BoundConfig(BaseModel):
    """超线性证书的几何 s 网格与 co Theta 的均匀网格"""
    model_config = ConfigDict(frozen=True)

    s_min: float = Field(default_factory=lambda: get_bound_config()["s_min"], gt=0)
    s_max: float = Field(default_factory=lambda: get_bound_config()["s_max"], gt=0)
    s_points: int = Field(default_factory=lambda: get_bound_config()["s_points"], ge=8)
    co_points: int = Field(default_factory=lambda: get_bound_config()["co_points"], ge=16)
    directions: int = Field(default_factory=lambda: get_bound_config()["directions"], ge=4)

    def s_grid(self) -> np.ndarray:
        return np.geomspace(self.s_min, self.s_max, self.s_points)


class BoundTrace(BaseModel):
    """常数链的全部中间量"""
    M1: float = Field(description="|y'| 积分的界")
    R: float = Field(description="A + M1")
    M2: float = Field(description="正测度集合上的斜率界")
    c_lb: float = Field(description="-3 Psi(R + 2 M2)")
    M: float = Field(description="Psi(R + 1)")
    C: float = Field(description="强制性反演得到的常数")
    K: float = Field(description="Lipschitz 常数，K = C >= 2")


class BoundReport(BaseModel):
    empirical: float
    K: float
    margin: float
    passed: bool


def lipschitz_bound(gauge: GrowthGauge, psi: Callable[[float], float], bounds: DataBounds,
                    cfg: Optional[BoundConfig] = None) -> BoundTrace:
    """
    显式 Lipschitz 常数

    Args:
        gauge: 超线性增长规范 Theta
        psi: 局部上界 Psi
        bounds: 数据界 A, B, alpha, beta
        cfg: 证书网格配置

    Returns:
        BoundTrace

    Raises:
        GaugeTooWeak: 证书网格范围内无法完成 M2 或 C 的反演
    """
    cfg = cfg or BoundConfig()
    A, B, alpha, beta = bounds.A, bounds.B, bounds.alpha, bounds.beta
    if alpha <= 0:
        raise GaugeTooWeak("alpha 必须为正")

    s = cfg.s_grid()
    rho = gauge.certificate(s, cfg.directions)

    # |u| <= s + Theta(u) / rho(s)，对 [a, b] 积分并用 int Theta <= B
    budget = np.where(B > 0, B / np.where(rho > 0, rho, 1.0), 0.0)
    budget = np.where((rho <= 0) & (B > 0), math.inf, budget)
    M1 = float(np.min(s * beta + budget))
    R = A + M1

    # 后缀最小的径向剖面：|u| > s 时 Theta(u) >= profile_min(s)
    profile = gauge.radial_profile(s, cfg.directions)
    suffix = np.minimum.accumulate(profile[::-1])[::-1]
    above = np.flatnonzero(suffix > B / alpha)
    if above.size == 0:
        raise GaugeTooWeak(f"在 s <= {cfg.s_max:g} 内找不到 Theta > B/alpha = {B / alpha:g} 的水平")
    M2 = float(s[above[0]])

    c_lb = -3.0 * float(psi(R + 2.0 * M2))
    M = float(psi(R + 1.0))
    threshold = M - min(c_lb, 0.0)

    # co Theta 沿最坏方向的径向剖面
    grid = np.linspace(0.0, cfg.s_max, cfg.co_points)
    co = lower_convex_envelope_1d(SampledFunction1D(grid, gauge.radial_profile(grid, cfg.directions)))
    ratio = co.ordinates[1:] / grid[1:]
    ok = np.flatnonzero(ratio <= threshold)
    if ok.size and ok[-1] == ratio.shape[0] - 1:
        raise GaugeTooWeak("co Theta(s)/s 在网格上界处仍不超过阈值")
    C = max(2.0, float(grid[1:][ok[-1]]) if ok.size else 2.0)

    trace = BoundTrace(M1=M1, R=R, M2=M2, c_lb=c_lb, M=M, C=C, K=C)
    logger.info(f"✓ Lipschitz 界: K={trace.K:.6g} (M1={M1:.4g}, M2={M2:.4g}, M={M:.4g})")
    return trace


def bound_for(L: LagrangianSpec, bounds: DataBounds, cfg: Optional[BoundConfig] = None) -> BoundTrace:
    return lipschitz_bound(L.gauge, L.local_bound, bounds, cfg)


def distance_to_origin(traj: Trajectory) -> float:
    """折线到原点的最小距离（逐段闭式）"""
    a, b = traj.states[:-1], traj.states[1:]
    d = b - a
    dd = np.sum(d * d, axis=1)
    t = np.where(dd > 0, -np.sum(a * d, axis=1) / np.where(dd > 0, dd, 1.0), 0.0)
    t = np.clip(t, 0.0, 1.0)
    closest = a + t[:, None] * d
    return float(np.min(np.linalg.norm(closest, axis=1)))


def verify_bound(problem: ProblemInstance, minimizer: Trajectory, trace: BoundTrace,
                 tol: float = 1e-12) -> BoundReport:
    """
    检查前提后比较经验斜率与 K

    前提与 HypothesisFailed.condition 的对应：
        bounds_declared     问题声明了数据界 A, B, alpha, beta
        distance_to_origin  轨迹到原点的距离 inf_t |y(t)| <= A
        action_budget       作用量 int L(y, y') dt <= B
        interval_length     区间长度 alpha <= b - a <= beta

    Raises:
        HypothesisFailed: 上述任一前提不成立
    """
    bounds = problem.bounds
    if bounds is None:
        raise HypothesisFailed("bounds_declared", "前提“数据界已声明”不成立：问题没有声明 A, B, alpha, beta")

    distance = distance_to_origin(minimizer)
    if distance > bounds.A + tol:
        raise HypothesisFailed("distance_to_origin",
                               f"前提“inf |y| <= A”不成立：inf |y| = {distance:.6g} > A = {bounds.A:.6g}")
    action = evaluate_action(minimizer, problem.lagrangian)
    if action > bounds.B + tol:
        raise HypothesisFailed("action_budget",
                               f"前提“作用量 <= B”不成立：作用量 {action:.6g} > B = {bounds.B:.6g}")
    length = minimizer.t_end - minimizer.t0
    if not (bounds.alpha - tol <= length <= bounds.beta + tol):
        raise HypothesisFailed("interval_length",
                               f"前提“alpha <= b - a <= beta”不成立：区间长度 {length:.6g} "
                               f"不在 [{bounds.alpha:.6g}, {bounds.beta:.6g}] 内")

    empirical = empirical_lipschitz(minimizer)
    report = BoundReport(empirical=empirical, K=trace.K, margin=trace.K - empirical,
                         passed=empirical <= trace.K)
    if not report.passed:
        logger.warning(f"✗ 经验斜率 {empirical:.6g} 超过 K = {trace.K:.6g}")
    return report
