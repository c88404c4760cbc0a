"""
非光滑 / 凸分析内核
- 采样函数的下凸包络（单调链下凸壳）
- Legendre-Fenchel 离散共轭
- 单侧导数、Dini 导数、相依导数
- 次微分 / 超微分 / Clarke 广义梯度
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .config import LOGGING_CONFIG, get_derivative_config
from .errors import (
    EmptyDualGrid,
    EmptyFan,
    EvaluatorInfinite,
    PointOutsideFiniteRegion,
    TooFewFinitePoints,
)
from .lagrangian_model import fan_directions

# 配置日志
logging.basicConfig(level=LOGGING_CONFIG["level"], format=LOGGING_CONFIG["format"])
logger = logging.getLogger(__name__)

INF = math.inf

PointEvaluator = Callable[[np.ndarray], np.ndarray]


class DerivativeConfig(BaseModel):
    """导数代理的步长序列、方向扇形与容差"""
    model_config = ConfigDict(frozen=True)

    h0: float = Field(default_factory=lambda: get_derivative_config()["h0"], gt=0)
    levels: int = Field(default_factory=lambda: get_derivative_config()["levels"], ge=1)
    tail: int = Field(default_factory=lambda: get_derivative_config()["tail"], ge=1)
    fan_width: float = Field(default_factory=lambda: get_derivative_config()["fan_width"], ge=0)
    tol_hull: float = Field(default_factory=lambda: get_derivative_config()["tol_hull"], ge=0)
    tol_fan: float = Field(default_factory=lambda: get_derivative_config()["tol_fan"], ge=0)
    tol_sub: float = Field(default_factory=lambda: get_derivative_config()["tol_sub"], ge=0)
    lattice_points: int = Field(default_factory=lambda: get_derivative_config()["lattice_points"], ge=3)
    lattice_pad: float = Field(default_factory=lambda: get_derivative_config()["lattice_pad"], ge=1.0)

    def steps(self) -> np.ndarray:
        """h_j = h0 * 2^-j, j = 0..J"""
        return self.h0 * np.power(2.0, -np.arange(self.levels + 1))

    def tail_steps(self) -> np.ndarray:
        steps = self.steps()
        return steps[-min(self.tail, steps.shape[0]):]


# ============================================================================
# 采样函数
# ============================================================================

@dataclass(frozen=True, eq=False)
class SampledFunction1D:
    """
    一维采样函数

    abscissae 严格递增；ordinates 为扩展实数（允许 +inf）；
    kind 区分“离散样本”与“分段线性”两种解释
    """
    abscissae: np.ndarray
    ordinates: np.ndarray
    kind: Literal["samples", "piecewise_linear"] = "samples"

    def __post_init__(self):
        v = np.asarray(self.abscissae, dtype=float)
        w = np.asarray(self.ordinates, dtype=float)
        object.__setattr__(self, "abscissae", v)
        object.__setattr__(self, "ordinates", w)
        if v.ndim != 1 or v.shape != w.shape:
            raise ValueError(f"横坐标与纵坐标形状不一致: {v.shape} vs {w.shape}")
        if v.shape[0] > 1 and not np.all(np.diff(v) > 0):
            raise ValueError("横坐标必须严格递增")
        if np.any(np.isnan(w)) or np.any(w == -INF):
            raise ValueError("纵坐标不能含 NaN 或 -inf")
        if not np.any(np.isfinite(w)):
            raise TooFewFinitePoints("采样函数没有有限值")

    @property
    def finite(self) -> np.ndarray:
        return np.isfinite(self.ordinates)

    @property
    def step(self) -> float:
        return float(np.max(np.diff(self.abscissae)))

    def __call__(self, v) -> np.ndarray:
        """在有限区域内分段线性插值，区域外为 +inf"""
        v = np.asarray(v, dtype=float)
        mask = self.finite
        xs, ys = self.abscissae[mask], self.ordinates[mask]
        out = np.interp(v, xs, ys)
        return np.where((v < xs[0]) | (v > xs[-1]), INF, out)

    def second_differences(self) -> np.ndarray:
        """非均匀网格上的离散二阶差商（只在连续三个有限点处）"""
        v, w = self.abscissae, self.ordinates
        left = (w[1:-1] - w[:-2]) / (v[1:-1] - v[:-2])
        right = (w[2:] - w[1:-1]) / (v[2:] - v[1:-1])
        out = right - left
        return np.where(np.isfinite(out), out, 0.0)


@dataclass(frozen=True)
class OneSidedDerivatives:
    left: float
    right: float
    point: float


@dataclass(frozen=True, eq=False)
class ConjugateTable:
    """离散共轭表：values[k] = max_u <p_k, u> - L(u)，truncated 标记取到 u 网格边界的点"""
    p: np.ndarray
    values: np.ndarray
    argmax: np.ndarray
    truncated: np.ndarray

    def __call__(self, q) -> np.ndarray:
        """一维对偶网格上的线性插值，超出网格为 +inf"""
        if self.p.ndim != 1:
            raise ValueError("只支持一维对偶网格上的插值")
        q = np.asarray(q, dtype=float)
        out = np.interp(q, self.p, self.values)
        return np.where((q < self.p[0]) | (q > self.p[-1]), INF, out)

    def as_sampled(self) -> SampledFunction1D:
        return SampledFunction1D(self.p, self.values, kind="piecewise_linear")

    @property
    def any_truncated(self) -> bool:
        return bool(np.any(self.truncated))


# ============================================================================
# 下凸包络
# ============================================================================

def _lower_hull(x: np.ndarray, y: np.ndarray) -> list:
    """单调链下凸壳，返回顶点下标；共线点被弹出"""
    hull = []
    for i in range(x.shape[0]):
        while len(hull) >= 2:
            o, a = hull[-2], hull[-1]
            cross = (x[a] - x[o]) * (y[i] - y[o]) - (y[a] - y[o]) * (x[i] - x[o])
            if cross <= 0:
                hull.pop()
            else:
                break
        hull.append(i)
    return hull


def lower_convex_envelope_1d(fn: SampledFunction1D) -> SampledFunction1D:
    """
    上图有限采样点的下凸包，在原横坐标上取值

    Args:
        fn: 采样函数

    Returns:
        包络；不大于输入，在有限横坐标的凸包之外保持 +inf

    Raises:
        TooFewFinitePoints: 有限点少于两个
    """
    mask = fn.finite
    if int(mask.sum()) < 2:
        raise TooFewFinitePoints(f"下凸包络至少需要 2 个有限点，实际 {int(mask.sum())} 个")

    xs, ys = fn.abscissae[mask], fn.ordinates[mask]
    hull = _lower_hull(xs, ys)

    v = fn.abscissae
    out = np.full(v.shape, INF)
    inside = (v >= xs[0]) & (v <= xs[-1])
    chord = np.interp(v[inside], xs[hull], ys[hull])
    out[inside] = np.minimum(chord, fn.ordinates[inside])
    return SampledFunction1D(v, out, kind="piecewise_linear")


def is_convex_sequence(fn: SampledFunction1D, tol: float = 1e-9) -> bool:
    return bool(np.all(fn.second_differences() >= -tol))


# ============================================================================
# Legendre-Fenchel 共轭
# ============================================================================

def legendre_fenchel(fn: Union[SampledFunction1D, Tuple[np.ndarray, np.ndarray]],
                     p_grid, block: int = 256) -> ConjugateTable:
    """
    离散共轭 H(p) = max_u <p, u> - L(u)，只在有限样本上取最大

    Args:
        fn: 一维采样函数，或 (points (M, n), values (M,)) 的多维样本
        p_grid: 对偶网格，形状 (P,) 或 (P, n)
        block: 分块大小，控制中间矩阵的内存

    Returns:
        ConjugateTable；argmax 落在 u 网格边界的点标记为 truncated

    Raises:
        EmptyDualGrid: 对偶网格为空
        TooFewFinitePoints: 样本没有有限值
    """
    if isinstance(fn, SampledFunction1D):
        points = fn.abscissae[:, None]
        values = fn.ordinates
    else:
        points, values = fn
        points = np.asarray(points, dtype=float)
        values = np.asarray(values, dtype=float)
        if points.ndim == 1:
            points = points[:, None]

    p = np.asarray(p_grid, dtype=float)
    if p.size == 0:
        raise EmptyDualGrid("对偶网格为空")
    p_mat = p[:, None] if p.ndim == 1 else p
    if p_mat.shape[1] != points.shape[1]:
        raise EmptyDualGrid(f"对偶网格维数 {p_mat.shape[1]} 与样本维数 {points.shape[1]} 不一致")

    mask = np.isfinite(values)
    if not np.any(mask):
        raise TooFewFinitePoints("共轭需要至少一个有限样本")
    u, w = points[mask], values[mask]

    # 样本包围盒的边界点视为截断
    lo, hi = u.min(axis=0), u.max(axis=0)
    on_edge = np.any((u == lo) | (u == hi), axis=1)

    out = np.empty(p_mat.shape[0])
    arg = np.empty(p_mat.shape[0], dtype=int)
    for start in range(0, p_mat.shape[0], block):
        scores = p_mat[start:start + block] @ u.T - w[None, :]
        idx = np.argmax(scores, axis=1)
        arg[start:start + block] = idx
        out[start:start + block] = scores[np.arange(idx.shape[0]), idx]

    table = ConjugateTable(p=p, values=out, argmax=u[arg] if u.shape[1] > 1 else u[arg, 0],
                           truncated=on_edge[arg])
    if table.any_truncated:
        logger.debug(f"⚠ 共轭在 {int(table.truncated.sum())} 个对偶点处取到 u 网格边界")
    return table


# ============================================================================
# 单侧导数
# ============================================================================

def one_sided_derivatives(fn: SampledFunction1D, v_star: float) -> OneSidedDerivatives:
    """
    凸采样函数在 v* 处的左右导数（相邻包络线段的斜率）

    Raises:
        PointOutsideFiniteRegion: v* 不在有限区域内部
    """
    v, w = fn.abscissae, fn.ordinates
    scale = 1e-12 * max(1.0, abs(v_star))
    k = int(np.searchsorted(v, v_star))

    if k < v.shape[0] and abs(v[k] - v_star) <= scale:
        on_sample = True
    elif k > 0 and abs(v[k - 1] - v_star) <= scale:
        k -= 1
        on_sample = True
    else:
        on_sample = False

    def slope(i: int, j: int) -> float:
        if i < 0 or j >= v.shape[0] or not (np.isfinite(w[i]) and np.isfinite(w[j])):
            raise PointOutsideFiniteRegion(f"v*={v_star} 不在有限区域内部")
        return float((w[j] - w[i]) / (v[j] - v[i]))

    if on_sample:
        return OneSidedDerivatives(left=slope(k - 1, k), right=slope(k, k + 1), point=float(v_star))
    d = slope(k - 1, k)
    return OneSidedDerivatives(left=d, right=d, point=float(v_star))


# ============================================================================
# Dini / 相依导数
# ============================================================================

def _evaluate_points(evaluator: PointEvaluator, points: np.ndarray) -> np.ndarray:
    return np.asarray(evaluator(points), dtype=float).reshape(points.shape[0])


def _base_value(evaluator: PointEvaluator, x: np.ndarray) -> float:
    base = float(_evaluate_points(evaluator, x[None, :])[0])
    if not math.isfinite(base):
        raise EvaluatorInfinite(f"函数在基点 {x.tolist()} 处不是有限值")
    return base


def _as_point(x) -> np.ndarray:
    return np.atleast_1d(np.asarray(x, dtype=float))


def dini_lower(evaluator: PointEvaluator, x, xi, cfg: Optional[DerivativeConfig] = None) -> float:
    """沿固定方向 xi 的下 Dini 导数：步长尾部差商的最小值"""
    cfg = cfg or DerivativeConfig()
    x, xi = _as_point(x), _as_point(xi)
    base = _base_value(evaluator, x)
    steps = cfg.tail_steps()
    values = _evaluate_points(evaluator, x[None, :] + steps[:, None] * xi[None, :])
    return float(np.min((values - base) / steps))


def _perturbed_directions(xi: np.ndarray, width: float) -> np.ndarray:
    """xi 自身以及沿各坐标轴 +-width 的扰动"""
    n = xi.shape[0]
    offsets = np.vstack([np.zeros((1, n)), width * np.eye(n), -width * np.eye(n)])
    return xi[None, :] + offsets


def contingent(evaluator: PointEvaluator, x, xi,
               cfg: Optional[DerivativeConfig] = None) -> Tuple[float, float]:
    """
    下/上相依导数 (D_up, D_down)

    在步长尾部与扰动方向上分别取差商的最小值与最大值；
    扰动宽度随步长平方收缩，扇形包含 xi 本身，因此 D_up <= dini <= D_down 严格成立
    """
    cfg = cfg or DerivativeConfig()
    x, xi = _as_point(x), _as_point(xi)
    base = _base_value(evaluator, x)

    lower, upper = INF, -INF
    for h in cfg.tail_steps():
        width = cfg.fan_width * (h / cfg.h0) ** 2
        dirs = _perturbed_directions(xi, width)
        quotients = (_evaluate_points(evaluator, x[None, :] + h * dirs) - base) / h
        lower = min(lower, float(np.min(quotients)))
        upper = max(upper, float(np.max(quotients)))
    return lower, upper


@dataclass(frozen=True, eq=False)
class DerivativeFan:
    """基点处一组方向上的 D_up、D_down、Dini 导数"""
    x: np.ndarray
    directions: np.ndarray
    steps: np.ndarray
    tail: int
    lower: np.ndarray
    upper: np.ndarray
    dini: np.ndarray

    def sandwich_holds(self, tol: float) -> bool:
        return bool(np.all(self.dini >= self.lower - tol) and np.all(self.dini <= self.upper + tol))


def default_directions(n: int) -> np.ndarray:
    """n = 1 时 {+1, -1}；否则平面扇形加上其余坐标轴的 +-e_i"""
    dirs = [fan_directions(n, 16)]
    for i in range(2, n):
        e = np.zeros(n)
        e[i] = 1.0
        dirs.append(np.vstack([e, -e]))
    return np.vstack(dirs)


def derivative_fan(evaluator: PointEvaluator, x, directions=None,
                   cfg: Optional[DerivativeConfig] = None) -> DerivativeFan:
    """
    在基点的方向扇形上计算导数代理

    Raises:
        EmptyFan: 方向集合为空
        EvaluatorInfinite: 基点处不是有限值
    """
    cfg = cfg or DerivativeConfig()
    x = _as_point(x)
    dirs = default_directions(x.shape[0]) if directions is None else np.atleast_2d(
        np.asarray(directions, dtype=float))
    if dirs.size == 0:
        raise EmptyFan("方向扇形为空")

    lower, upper, dini = [], [], []
    for xi in dirs:
        lo, hi = contingent(evaluator, x, xi, cfg)
        lower.append(lo)
        upper.append(hi)
        dini.append(dini_lower(evaluator, x, xi, cfg))

    return DerivativeFan(x=x, directions=dirs, steps=cfg.steps(), tail=cfg.tail,
                         lower=np.array(lower), upper=np.array(upper), dini=np.array(dini))


# ============================================================================
# 次微分 / 超微分
# ============================================================================

@dataclass(frozen=True, eq=False)
class GradientSet:
    """候选格点上的广义梯度集合"""
    points: np.ndarray
    lattice_step: float
    fan: Optional[DerivativeFan] = None

    @property
    def empty(self) -> bool:
        return self.points.shape[0] == 0

    @property
    def diameter(self) -> float:
        if self.points.shape[0] < 2:
            return 0.0
        return float(np.max(np.linalg.norm(self.points[:, None, :] - self.points[None, :, :], axis=-1)))

    def min_norm(self) -> Optional[np.ndarray]:
        """最小范数元素，范数相同时取下标最小者"""
        if self.empty:
            return None
        return self.points[int(np.argmin(np.linalg.norm(self.points, axis=1)))]


def _axis_estimates(fan: DerivativeFan, values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """由 +-e_i 方向的值估计梯度各分量的区间"""
    n = fan.x.shape[0]
    lo, hi = np.zeros(n), np.zeros(n)
    for i in range(n):
        plus = np.flatnonzero(np.all(np.isclose(fan.directions, np.eye(n)[i]), axis=1))
        minus = np.flatnonzero(np.all(np.isclose(fan.directions, -np.eye(n)[i]), axis=1))
        hi[i] = values[plus[0]] if plus.size else 0.0
        lo[i] = -values[minus[0]] if minus.size else 0.0
    finite = np.isfinite(lo) & np.isfinite(hi)
    lo = np.where(finite, lo, 0.0)
    hi = np.where(finite, hi, 0.0)
    return np.minimum(lo, hi), np.maximum(lo, hi)


def candidate_lattice(fan: DerivativeFan, values: np.ndarray,
                      cfg: Optional[DerivativeConfig] = None) -> Tuple[np.ndarray, float]:
    """以观测到的差商范围为中心、放大 lattice_pad 倍的均匀 p 格点；点数为奇数，含中心"""
    cfg = cfg or DerivativeConfig()
    lo, hi = _axis_estimates(fan, values)
    center = 0.5 * (lo + hi)
    half = np.maximum(cfg.lattice_pad * 0.5 * (hi - lo), 1e-3 * (1.0 + np.abs(center)))
    n = center.shape[0]
    points = cfg.lattice_points if n == 1 else min(cfg.lattice_points, 41)
    points += 1 - points % 2
    axes = [np.linspace(c - r, c + r, points) for c, r in zip(center, half)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    return mesh, float(np.max(2.0 * half / (points - 1)))


def subdifferential_from_fan(fan: DerivativeFan, cfg: Optional[DerivativeConfig] = None) -> GradientSet:
    """{p : <p, v> <= D_up(v) + tol_sub 对扇形中每个 v 成立}"""
    cfg = cfg or DerivativeConfig()
    lattice, step = candidate_lattice(fan, fan.lower, cfg)
    inner = lattice @ fan.directions.T
    keep = np.all(inner <= fan.lower[None, :] + cfg.tol_sub, axis=1)
    return GradientSet(points=lattice[keep], lattice_step=step, fan=fan)


def superdifferential_from_fan(fan: DerivativeFan, cfg: Optional[DerivativeConfig] = None) -> GradientSet:
    """{p : <p, v> >= D_down(v) - tol_sub 对扇形中每个 v 成立}"""
    cfg = cfg or DerivativeConfig()
    lattice, step = candidate_lattice(fan, fan.upper, cfg)
    inner = lattice @ fan.directions.T
    keep = np.all(inner >= fan.upper[None, :] - cfg.tol_sub, axis=1)
    return GradientSet(points=lattice[keep], lattice_step=step, fan=fan)


def subdifferential(evaluator: PointEvaluator, x, cfg: Optional[DerivativeConfig] = None,
                    directions=None) -> GradientSet:
    """
    次微分的格点代理

    Args:
        evaluator: 点值函数，输入 (k, n)，输出 (k,)
        x: 基点
        cfg: 导数配置
        directions: 方向扇形，默认 default_directions(n)

    Returns:
        GradientSet，可能为空
    """
    cfg = cfg or DerivativeConfig()
    return subdifferential_from_fan(derivative_fan(evaluator, x, directions, cfg), cfg)


def superdifferential(evaluator: PointEvaluator, x, cfg: Optional[DerivativeConfig] = None,
                      directions=None) -> GradientSet:
    cfg = cfg or DerivativeConfig()
    return superdifferential_from_fan(derivative_fan(evaluator, x, directions, cfg), cfg)


def axis_box_subdifferential(d_plus: np.ndarray, d_minus: np.ndarray,
                             tol: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    只用坐标轴方向时次微分恰为一个盒子：p_i in [-D_up(-e_i) - tol, D_up(e_i) + tol]

    Args:
        d_plus: D_up(+e_i)，形状 (..., n)
        d_minus: D_up(-e_i)，形状 (..., n)
        tol: 容差

    Returns:
        (lo, hi, nonempty)，nonempty 为每个点盒子是否非空
    """
    lo = -np.asarray(d_minus, dtype=float) - tol
    hi = np.asarray(d_plus, dtype=float) + tol
    nonempty = np.all(lo <= hi, axis=-1)
    return lo, hi, nonempty


# ============================================================================
# Clarke 广义梯度
# ============================================================================

@dataclass(frozen=True)
class ClarkeInterval:
    lo: float
    hi: float

    def min_norm(self) -> float:
        if self.lo <= 0.0 <= self.hi:
            return 0.0
        return self.lo if abs(self.lo) < abs(self.hi) else self.hi

    def contains(self, value: float, tol: float = 0.0) -> bool:
        return self.lo - tol <= value <= self.hi + tol


def clarke_gradient_1d(evaluator_u: Callable[[np.ndarray], np.ndarray], u_star: float,
                       cfg: Optional[DerivativeConfig] = None, samples: int = 5) -> ClarkeInterval:
    """
    一维 Clarke 广义梯度：u* 附近 (半径 h_j) 各点、步长 +-h_j 的差商在步长尾部上的 [min, max]

    Raises:
        EvaluatorInfinite: u* 处不是有限值
    """
    cfg = cfg or DerivativeConfig()
    u_star = float(u_star)
    if not math.isfinite(float(np.asarray(evaluator_u(np.array([u_star]))).reshape(-1)[0])):
        raise EvaluatorInfinite(f"函数在 u*={u_star} 处不是有限值")

    lo, hi = INF, -INF
    for h in cfg.tail_steps():
        us = u_star + np.linspace(-h, h, samples)
        for step in (h, -h):
            quotients = (np.asarray(evaluator_u(us + step), dtype=float)
                         - np.asarray(evaluator_u(us), dtype=float)) / step
            quotients = quotients[np.isfinite(quotients)]
            if quotients.size:
                lo = min(lo, float(np.min(quotients)))
                hi = max(hi, float(np.max(quotients)))
    if lo > hi:
        raise EvaluatorInfinite(f"u*={u_star} 附近没有有限差商")
    return ClarkeInterval(lo=lo, hi=hi)
