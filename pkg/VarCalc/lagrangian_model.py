"""
问题模型 - Lagrangian、增长规范、终端代价、轨迹与内置目录
负责 JSON 问题文档的解析校验，以及沿轨迹的作用量计算

扩展实数约定：使用 float64，+inf 表示 +∞；代价均非负，因此加法天然饱和，
不会出现 inf - inf
"""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .config import LOGGING_CONFIG
from .errors import (
    DimensionMismatch,
    NonFiniteState,
    SchemaError,
    UnknownLagrangian,
)

# 配置日志
logging.basicConfig(level=LOGGING_CONFIG["level"], format=LOGGING_CONFIG["format"])
logger = logging.getLogger(__name__)

INF = math.inf

Evaluator = Callable[[np.ndarray, np.ndarray], np.ndarray]


# ============================================================================
# 向量工具
# ============================================================================

def norm_sq(v: np.ndarray) -> np.ndarray:
    """最后一维上的平方范数，支持广播"""
    v = np.asarray(v, dtype=float)
    return np.sum(v * v, axis=-1)


def norm(v: np.ndarray) -> np.ndarray:
    return np.sqrt(norm_sq(v))


def as_vector(value, n: Optional[int] = None) -> np.ndarray:
    """把标量或列表转成一维 float 向量，并可选地检查维数"""
    vec = np.atleast_1d(np.asarray(value, dtype=float))
    if vec.ndim != 1:
        raise DimensionMismatch(f"期望一维向量，得到形状 {vec.shape}")
    if n is not None and vec.shape[0] != n:
        raise DimensionMismatch(f"维数不一致: 期望 {n}，得到 {vec.shape[0]}")
    return vec


def saturating_sum(terms) -> float:
    """按顺序逐项累加；任何一项为 +inf 时结果为 +inf"""
    total = 0.0
    for term in terms:
        term = float(term)
        if term == INF:
            return INF
        total += term
    return total


def fan_directions(n: int, count: int = 16) -> np.ndarray:
    """
    单位方向扇形

    n = 1 时为 {+1, -1}；n >= 2 时在前两个坐标平面内均匀取 count 个方向
    """
    if n == 1:
        return np.array([[1.0], [-1.0]])
    angles = 2.0 * np.pi * np.arange(count) / count
    dirs = np.zeros((count, n))
    dirs[:, 0] = np.cos(angles)
    dirs[:, 1] = np.sin(angles)
    return dirs


# ============================================================================
# 领域类型
# ============================================================================

@dataclass(frozen=True, eq=False)
class GrowthGauge:
    """超线性增长规范 Theta，以及其超线性证书 rho(s) = inf{Theta(u)/|u| : |u| >= s}"""
    name: str
    n: int
    evaluator: Callable[[np.ndarray], np.ndarray]

    def __call__(self, u) -> np.ndarray:
        return self.evaluator(np.asarray(u, dtype=float))

    def radial_profile(self, s: np.ndarray, directions: int = 16) -> np.ndarray:
        """s -> min_e Theta(s e)，取最坏方向，保证由此得到的界仍然成立"""
        s = np.asarray(s, dtype=float)
        dirs = fan_directions(self.n, directions)
        values = self.evaluator(s[:, None, None] * dirs[None, :, :])
        return np.min(values, axis=1)

    def certificate(self, s_grid: np.ndarray, directions: int = 16) -> np.ndarray:
        """在 s 网格上制表 rho(s)，用后缀最小值代替 |u| >= s 上的下确界"""
        s_grid = np.asarray(s_grid, dtype=float)
        ratio = self.radial_profile(s_grid, directions) / s_grid
        return np.minimum.accumulate(ratio[::-1])[::-1]


@dataclass(frozen=True, eq=False)
class LagrangianSpec:
    """
    自治 Lagrangian L(x, u) >= 0 及其元数据

    evaluator 必须是纯函数，对最后一维为 n 的数组广播求值
    """
    name: str
    n: int
    evaluator: Evaluator
    gauge: GrowthGauge
    local_bound: Callable[[float], float]
    convex_in_u: bool = False
    differentiable_in_u: bool = False
    semiconvex_in_u: bool = False
    lipschitz_in_u: bool = False
    continuous: bool = True
    radial_in_u: bool = False
    description: str = ""

    def __call__(self, x, u):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        value = self.evaluator(x, u)
        if np.ndim(value) == 0:
            return float(value)
        return value

    def section(self, x) -> Callable[[np.ndarray], np.ndarray]:
        """固定状态 x 的截面 u -> L(x, u)"""
        x = as_vector(x, self.n)
        return lambda u: self.evaluator(x, np.asarray(u, dtype=float))

    def flags(self) -> Dict[str, bool]:
        return {
            "convex_in_u": self.convex_in_u,
            "differentiable_in_u": self.differentiable_in_u,
            "semiconvex_in_u": self.semiconvex_in_u,
            "lipschitz_in_u": self.lipschitz_in_u,
            "continuous": self.continuous,
            "radial_in_u": self.radial_in_u,
        }


@dataclass(frozen=True, eq=False)
class TerminalCost:
    """终端代价 phi >= 0，可取 +inf；witness 为一个 phi 有限的点"""
    name: str
    n: int
    evaluator: Callable[[np.ndarray], np.ndarray]
    witness: np.ndarray
    description: str = ""

    def __call__(self, x):
        value = self.evaluator(np.asarray(x, dtype=float))
        if np.ndim(value) == 0:
            return float(value)
        return value


class DataBounds(BaseModel):
    """先验数据界 A, B, alpha, beta"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    A: float = Field(..., ge=0, description="inf |y| 的上界")
    B: float = Field(..., ge=0, description="作用量上界")
    alpha: float = Field(..., ge=0, description="区间长度下界")
    beta: float = Field(..., ge=0, description="区间长度上界")


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """Lagrange（固定端点）或 Bolza（值函数）问题"""
    kind: Literal["lagrange", "bolza"]
    lagrangian: LagrangianSpec
    a: Optional[float] = None
    b: Optional[float] = None
    xa: Optional[np.ndarray] = None
    xb: Optional[np.ndarray] = None
    horizon: Optional[float] = None
    x: Optional[np.ndarray] = None
    terminal: Optional[TerminalCost] = None
    bounds: Optional[DataBounds] = None
    document: Dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.lagrangian.n


@dataclass(frozen=True, eq=False)
class Trajectory:
    """
    均匀时间网格上的折线轨迹

    节点时间 t_i = t0 + i * step，节点状态 states[i]，斜率 u_i = (y_{i+1} - y_i) / step
    """
    t0: float
    step: float
    states: np.ndarray

    def __post_init__(self):
        states = np.asarray(self.states, dtype=float)
        if states.ndim == 1:
            states = states[:, None]
        object.__setattr__(self, "states", states)
        if states.shape[0] < 2:
            raise DimensionMismatch("轨迹至少需要两个节点")
        if not (self.step > 0 and math.isfinite(self.step)):
            raise NonFiniteState(f"时间步长必须为正的有限数: {self.step}")
        if not np.all(np.isfinite(states)):
            bad = int(np.argwhere(~np.isfinite(states))[0][0])
            raise NonFiniteState(f"节点 {bad} 的状态不是有限数")

    @classmethod
    def from_times(cls, times, states, rtol: float = 1e-9) -> "Trajectory":
        """由显式时间序列构造，检查间距均匀"""
        times = np.asarray(times, dtype=float)
        if times.shape[0] < 2:
            raise DimensionMismatch("轨迹至少需要两个节点")
        step = (times[-1] - times[0]) / (times.shape[0] - 1)
        spacing = np.diff(times)
        if np.max(np.abs(spacing - step)) > rtol * max(1.0, abs(times[-1]), abs(times[0])):
            raise NonFiniteState("时间网格不是均匀的")
        return cls(t0=float(times[0]), step=float(step), states=states)

    @property
    def N(self) -> int:
        return self.states.shape[0] - 1

    @property
    def n(self) -> int:
        return self.states.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.step * np.arange(self.N + 1)

    @property
    def t_end(self) -> float:
        return self.t0 + self.step * self.N

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.states, axis=0) / self.step

    def with_states(self, states: np.ndarray) -> "Trajectory":
        return Trajectory(t0=self.t0, step=self.step, states=states)


# ============================================================================
# 作用量
# ============================================================================

def action_terms(traj: Trajectory, L: LagrangianSpec) -> np.ndarray:
    """左端点求积的逐段代价 h * L(y_i, u_i)"""
    if traj.n != L.n:
        raise DimensionMismatch(f"轨迹维数 {traj.n} 与 Lagrangian 维数 {L.n} 不一致")
    values = np.asarray(L.evaluator(traj.states[:-1], traj.slopes), dtype=float)
    return traj.step * values


def evaluate_action(traj: Trajectory, L: LagrangianSpec) -> float:
    """
    沿轨迹的作用量 sum_i h * L(y_i, u_i)

    与动态规划的转移代价逐项相同、按相同顺序累加，因此两者结果按位一致

    Args:
        traj: 轨迹
        L: Lagrangian

    Returns:
        作用量，任何一项为 +inf 时返回 +inf
    """
    return saturating_sum(action_terms(traj, L))


# ============================================================================
# 内置目录
# ============================================================================

def _quadratic(x, u):
    return norm_sq(u)


def _double_well(x, u):
    w = norm_sq(u) - 1.0
    return w * w


def _double_well_x2(x, u):
    w = norm_sq(u) - 1.0
    return w * w + norm_sq(x)


def _abs_quadratic(x, u):
    return norm(u) + norm_sq(u)


def _piecewise_x(x, u):
    x = np.asarray(x, dtype=float)
    weight = np.where(x[..., 0] < 0.0, 2.0, 1.0)
    return norm_sq(u) * weight


def _unit(x, u):
    return np.ones(np.broadcast_shapes(np.shape(x)[:-1], np.shape(u)[:-1]))


def _zero(x, u):
    return np.zeros(np.broadcast_shapes(np.shape(x)[:-1], np.shape(u)[:-1]))


def _theta_quadratic(u):
    return norm_sq(u)


def _theta_double_well(u):
    w = np.maximum(norm_sq(u) - 1.0, 0.0)
    return w * w


def _theta_zero(u):
    return np.zeros(np.shape(u)[:-1])


def _psi_quadratic(R):
    return np.asarray(R, dtype=float) * R


def _psi_double_well(R):
    w = np.asarray(R, dtype=float) * R - 1.0
    return np.maximum(1.0, w * w)


def _psi_double_well_x2(R):
    return _psi_double_well(R) + np.asarray(R, dtype=float) * R


def _psi_abs(R):
    R = np.asarray(R, dtype=float)
    return R + R * R


def _psi_piecewise(R):
    R = np.asarray(R, dtype=float)
    return 2.0 * (R * R)


def _psi_unit(R):
    return np.ones_like(np.asarray(R, dtype=float))


def _psi_zero(R):
    return np.zeros_like(np.asarray(R, dtype=float))


# 固定表达式表：名称 -> (L, Theta, Psi, 标记, 说明)
_EXPRESSIONS = {
    "quadratic": (_quadratic, _theta_quadratic, _psi_quadratic,
                  dict(convex_in_u=True, differentiable_in_u=True, semiconvex_in_u=True,
                       lipschitz_in_u=True, continuous=True, radial_in_u=True),
                  "L = |u|^2"),
    "double_well": (_double_well, _theta_double_well, _psi_double_well,
                    dict(convex_in_u=False, differentiable_in_u=True, semiconvex_in_u=True,
                         lipschitz_in_u=True, continuous=True, radial_in_u=True),
                    "L = (|u|^2 - 1)^2"),
    "double_well_x2": (_double_well_x2, _theta_double_well, _psi_double_well_x2,
                       dict(convex_in_u=False, differentiable_in_u=True, semiconvex_in_u=True,
                            lipschitz_in_u=True, continuous=True, radial_in_u=True),
                       "L = (|u|^2 - 1)^2 + |x|^2"),
    "abs": (_abs_quadratic, _theta_quadratic, _psi_abs,
            dict(convex_in_u=True, differentiable_in_u=False, semiconvex_in_u=True,
                 lipschitz_in_u=True, continuous=True, radial_in_u=True),
            "L = |u| + |u|^2"),
    "piecewise_x": (_piecewise_x, _theta_quadratic, _psi_piecewise,
                    dict(convex_in_u=True, differentiable_in_u=True, semiconvex_in_u=True,
                         lipschitz_in_u=True, continuous=False, radial_in_u=True),
                    "L = |u|^2 (1 + 1[x_1 < 0])"),
}

# 只出现在表达式表中（非超线性，不进入目录）
_AUXILIARY_EXPRESSIONS = {
    "unit": (_unit, _theta_zero, _psi_unit,
             dict(convex_in_u=True, differentiable_in_u=True, semiconvex_in_u=True,
                  lipschitz_in_u=True, continuous=True, radial_in_u=True),
             "L = 1"),
    "zero": (_zero, _theta_zero, _psi_zero,
             dict(convex_in_u=True, differentiable_in_u=True, semiconvex_in_u=True,
                  lipschitz_in_u=True, continuous=True, radial_in_u=True),
             "L = 0"),
}


def make_lagrangian(expr_id: str, n: int = 1, name: Optional[str] = None) -> LagrangianSpec:
    """
    按表达式编号构造 Lagrangian

    Args:
        expr_id: 表达式表中的编号，如 'quadratic'
        n: 维数
        name: 显示名称，默认与编号相同

    Returns:
        LagrangianSpec

    Raises:
        UnknownLagrangian: 编号不存在
    """
    table = {**_EXPRESSIONS, **_AUXILIARY_EXPRESSIONS}
    if expr_id not in table:
        raise UnknownLagrangian(f"未知的 Lagrangian: {expr_id}。可用: {sorted(table)}")
    evaluator, theta, psi, flags, text = table[expr_id]
    gauge = GrowthGauge(name=f"theta_{expr_id}", n=n, evaluator=theta)
    return LagrangianSpec(name=name or expr_id, n=n, evaluator=evaluator, gauge=gauge,
                          local_bound=psi, description=text, **flags)


def make_terminal(name: str, n: int = 1, point=None) -> TerminalCost:
    """按名称构造终端代价：zero, quadratic_phi, indicator_point"""
    if name == "zero":
        return TerminalCost(name=name, n=n, witness=np.zeros(n),
                            evaluator=lambda x: np.zeros(np.shape(x)[:-1]),
                            description="phi = 0")
    if name == "quadratic_phi":
        return TerminalCost(name=name, n=n, witness=np.zeros(n), evaluator=norm_sq,
                            description="phi = |x|^2")
    if name == "indicator_point":
        target = np.zeros(n) if point is None else as_vector(point, n)

        def indicator(x):
            gap = np.max(np.abs(np.asarray(x, dtype=float) - target), axis=-1)
            return np.where(gap <= 1e-9, 0.0, INF)

        return TerminalCost(name=name, n=n, witness=target, evaluator=indicator,
                            description=f"phi = 0 at {target.tolist()}, +inf elsewhere")
    raise UnknownLagrangian(f"未知的终端代价: {name}")


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    kind: Literal["lagrangian", "terminal"]
    description: str
    item: object


def builtin_catalog(n: int = 1) -> List[CatalogEntry]:
    """内置目录：五个 Lagrangian 与三个终端代价，各自带精确的 Theta 与 Psi"""
    entries = []
    for expr_id in _EXPRESSIONS:
        spec = make_lagrangian(expr_id, n)
        entries.append(CatalogEntry(expr_id, "lagrangian", spec.description, spec))
    for name in ("zero", "quadratic_phi", "indicator_point"):
        terminal = make_terminal(name, n)
        entries.append(CatalogEntry(name, "terminal", terminal.description, terminal))
    return entries


# ============================================================================
# JSON 问题文档
# ============================================================================

class InlineLagrangian(BaseModel):
    """内联 Lagrangian：引用固定表达式表，不做运行时表达式解析"""
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    name: str
    n: int = Field(..., ge=1)
    expr_id: str = Field(..., alias="expr-id")


class TerminalDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str
    point: Optional[List[float]] = None


class LagrangeDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["lagrange"]
    lagrangian: Union[str, InlineLagrangian]
    a: float
    b: float
    xa: List[float] = Field(..., min_length=1)
    xb: List[float] = Field(..., min_length=1)
    bounds: Optional[DataBounds] = None
    description: Optional[str] = None


class BolzaDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["bolza"]
    lagrangian: Union[str, InlineLagrangian]
    t: float = Field(..., gt=0)
    x: List[float] = Field(..., min_length=1)
    phi: Union[str, TerminalDocument]
    bounds: Optional[DataBounds] = None
    description: Optional[str] = None


# pydantic 在联合类型的错误路径里插入的成员标签
_UNION_TAGS = {"str", "float", "int", "InlineLagrangian", "TerminalDocument", "DataBounds"}


def _pointer(loc) -> str:
    parts = [str(part) for part in loc if str(part) not in _UNION_TAGS]
    if parts and parts[0] == "expr_id":
        parts[0] = "expr-id"
    parts = ["expr-id" if p == "expr_id" else p for p in parts]
    return "/" + "/".join(parts)


def _read_document(source) -> dict:
    if isinstance(source, dict):
        return source
    if isinstance(source, Path):
        text = source.read_text(encoding="utf-8")
    else:
        text = str(source)
        if not text.lstrip().startswith("{"):
            text = Path(text).read_text(encoding="utf-8")
    try:
        document = json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaError("", f"JSON 解析失败: {e}")
    if not isinstance(document, dict):
        raise SchemaError("", "顶层必须是 JSON 对象")
    return document


def _resolve_lagrangian(spec: Union[str, InlineLagrangian], n: int) -> LagrangianSpec:
    if isinstance(spec, str):
        if spec not in _EXPRESSIONS:
            raise UnknownLagrangian(f"目录中没有 Lagrangian: {spec}")
        return make_lagrangian(spec, n)
    if spec.n != n:
        raise SchemaError("/lagrangian/n", f"维数 {spec.n} 与状态维数 {n} 不一致")
    return make_lagrangian(spec.expr_id, n, name=spec.name)


def load_problem(source) -> ProblemInstance:
    """
    加载并校验问题文档

    Args:
        source: 文件路径、JSON 文本或已解析的 dict

    Returns:
        完整校验后的 ProblemInstance

    Raises:
        SchemaError: 文档结构错误，带 JSON-pointer 路径
        UnknownLagrangian: 引用了目录外的名称
    """
    document = _read_document(source)
    kind = document.get("kind")
    if kind not in ("lagrange", "bolza"):
        raise SchemaError("/kind", f"kind 必须是 'lagrange' 或 'bolza'，得到 {kind!r}")

    model = LagrangeDocument if kind == "lagrange" else BolzaDocument
    try:
        doc = model.model_validate(document)
    except ValidationError as e:
        first = e.errors()[0]
        raise SchemaError(_pointer(first["loc"]), first["msg"])

    if isinstance(doc, LagrangeDocument):
        n = len(doc.xa)
        if len(doc.xb) != n:
            raise SchemaError("/xb", f"xb 维数 {len(doc.xb)} 与 xa 维数 {n} 不一致")
        if not doc.a < doc.b:
            raise SchemaError("/b", f"要求 a < b，得到 a={doc.a}, b={doc.b}")
        if doc.bounds is not None and not (doc.bounds.alpha <= doc.b - doc.a <= doc.bounds.beta):
            raise SchemaError("/bounds/alpha", "要求 alpha <= b - a <= beta")
        lagrangian = _resolve_lagrangian(doc.lagrangian, n)
        problem = ProblemInstance(kind="lagrange", lagrangian=lagrangian, a=doc.a, b=doc.b,
                                  xa=as_vector(doc.xa), xb=as_vector(doc.xb),
                                  bounds=doc.bounds, document=document)
    else:
        n = len(doc.x)
        lagrangian = _resolve_lagrangian(doc.lagrangian, n)
        phi = doc.phi if isinstance(doc.phi, TerminalDocument) else TerminalDocument(name=doc.phi)
        if phi.point is not None and len(phi.point) != n:
            raise SchemaError("/phi/point", f"point 维数与状态维数 {n} 不一致")
        terminal = make_terminal(phi.name, n, phi.point)
        problem = ProblemInstance(kind="bolza", lagrangian=lagrangian, horizon=doc.t,
                                  x=as_vector(doc.x), terminal=terminal,
                                  bounds=doc.bounds, document=document)

    logger.info(f"✓ 已加载问题: kind={problem.kind}, lagrangian={problem.lagrangian.name}, n={n}")
    return problem
