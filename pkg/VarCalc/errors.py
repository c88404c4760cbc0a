"""
异常定义
定理被违反属于“发现”，以报告数据返回；只有输入或前提不成立时才抛出异常
"""

from typing import Optional


class VarCalcError(Exception):
    """所有可预期错误的基类"""


class ConfigError(VarCalcError):
    """配置取值非法"""


class SchemaError(VarCalcError):
    """问题文档不符合 JSON 结构，pointer 为 JSON-pointer 路径"""

    def __init__(self, pointer: str, message: str):
        self.pointer = pointer
        super().__init__(f"{pointer}: {message}")


class UnknownLagrangian(VarCalcError):
    """目录中没有该名称的 Lagrangian 或终端代价"""


class NonFiniteState(VarCalcError):
    """轨迹节点含 NaN 或 inf"""


class DimensionMismatch(VarCalcError):
    """状态维数与 Lagrangian 维数不一致"""


class TooFewFinitePoints(VarCalcError):
    """采样函数的有限点不足"""


class EmptyDualGrid(VarCalcError):
    """对偶网格为空"""


class PointOutsideFiniteRegion(VarCalcError):
    """求导点不在有限区域内部"""


class EvaluatorInfinite(VarCalcError):
    """函数在基点处取 +inf"""


class EmptyFan(VarCalcError):
    """方向扇形为空"""


class EndpointOutsideGrid(VarCalcError):
    """端点落在状态网格之外"""


class CostOverflow(VarCalcError):
    """所有格点路径的代价都是 +inf"""


class SlopeOutOfDomain(VarCalcError):
    """重参数化斜率不大于 1/2"""


class MassMismatch(VarCalcError):
    """重参数化斜率之和与区间长度不符"""


class HypothesisFailed(VarCalcError):
    """定理前提在数值上不成立，condition 给出违反的条件名"""

    def __init__(self, condition: str, message: str, node: Optional[int] = None):
        self.condition = condition
        self.node = node
        super().__init__(f"[{condition}] {message}")


class FlagMissing(VarCalcError):
    """Lagrangian 缺少变体所需的正则性标记"""


class NotReducible(VarCalcError):
    """n >= 2 且 Lagrangian 不是径向的，无法归约到一维"""


class GaugeTooWeak(VarCalcError):
    """增长规范在制表范围内无法完成反演"""


class AllInfiniteLayer(VarCalcError):
    """值函数某一层全为 +inf"""


class TrajectoryOffGrid(VarCalcError):
    """轨迹起点不在值函数格点上"""
