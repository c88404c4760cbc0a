"""
VarCalc - FastAPI 后端服务
提供与命令行相同的求解与检验接口，返回相同的报告 JSON
"""

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field
from typing import Optional, List, Dict, Any, Union
import logging

# 导入全局配置
from config import LOGGING_CONFIG, get_api_config, get_path

from VarCalc import __version__
from VarCalc.cli import _jsonable
from VarCalc.config import build_config
from VarCalc.convex_analysis import SampledFunction1D, is_convex_sequence, lower_convex_envelope_1d
from VarCalc.direct_solver import SolverConfig, refine_local, solve_lagrange_dp
from VarCalc.errors import ConfigError, VarCalcError
from VarCalc.lagrangian_model import ProblemInstance, as_vector, builtin_catalog, load_problem, make_lagrangian
from VarCalc.necessary_conditions import EnvelopeConfig, run_dbr
from VarCalc.regularity import bound_for, verify_bound

import numpy as np

logging.basicConfig(level=LOGGING_CONFIG["level"], format=LOGGING_CONFIG["format"])
logger = logging.getLogger(__name__)

# 创建FastAPI应用
app = FastAPI(title="VarCalc API", version=__version__)

# 配置CORS
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


# ============================================================================
# 请求模型
# ============================================================================

class ProblemRequest(BaseModel):
    """problem 为问题文档本身，或 Problems/ 下的文件名"""
    problem: Union[str, Dict[str, Any]]
    steps: Optional[int] = Field(default=None, description="时间步数 N")
    resolution: Optional[int] = Field(default=None, description="每个坐标轴的状态格点数")
    half_width: Optional[float] = None
    refine: int = Field(default=0, ge=0, description="局部细化的扫描次数")


class SolveRequest(ProblemRequest):
    include_trajectory: bool = True


class DbrRequest(ProblemRequest):
    variant: str = Field(..., description="erdmann / convex / subdiff / clarke / superdiff")


class EnvelopeRequest(BaseModel):
    lagrangian: str
    x: List[float] = Field(default_factory=lambda: [0.0])
    u_max: float = Field(default=2.0, gt=0)
    points: int = Field(default=401, ge=3)


# ============================================================================
# 工具函数
# ============================================================================

def _load(request: ProblemRequest) -> ProblemInstance:
    source = request.problem
    if isinstance(source, str) and not source.lstrip().startswith("{"):
        source = get_path("problems_dir") / source
    problem = load_problem(source)
    if problem.kind != "lagrange":
        raise ConfigError(f"需要 lagrange 问题，得到 {problem.kind}")
    return problem


def _solve(request: ProblemRequest, problem: ProblemInstance):
    cfg = build_config(SolverConfig, steps=request.steps, resolution=request.resolution,
                       half_width=request.half_width)
    result = solve_lagrange_dp(problem, cfg)
    if request.refine:
        result = refine_local(result, sweeps=request.refine)
    return result


def _fail(action: str, e: Exception):
    """可预期错误返回 422，其余返回 500"""
    if isinstance(e, VarCalcError):
        raise HTTPException(status_code=422, detail=f"{type(e).__name__}: {e}")
    logger.exception(f"✗ {action}失败")
    raise HTTPException(status_code=500, detail=f"{action}失败: {str(e)}")


# ============================================================================
# 接口
# ============================================================================

@app.get("/")
async def root():
    """根路径"""
    return {"message": "VarCalc API", "version": __version__}


@app.get("/api/catalog", response_model=List[Dict[str, Any]])
async def get_catalog():
    """内置 Lagrangian 与终端代价"""
    return [{"name": e.name, "kind": e.kind, "description": e.description} for e in builtin_catalog()]


@app.post("/api/solve", response_model=Dict[str, Any])
async def solve(request: SolveRequest):
    """格点动态规划求解 Lagrange 问题"""
    try:
        problem = _load(request)
        result = _solve(request, problem)
        report = {**result.to_report(), "grid_global": result.grid_global, "steps": result.trajectory.N}
        if request.include_trajectory:
            report["times"] = result.trajectory.times
            report["states"] = result.trajectory.states
        return _jsonable(report)
    except Exception as e:
        _fail("求解", e)


@app.post("/api/bound", response_model=Dict[str, Any])
async def bound(request: ProblemRequest):
    """先验 Lipschitz 界及其在求解得到的极小元上的验证"""
    try:
        problem = _load(request)
        if problem.bounds is None:
            raise ConfigError("问题文档没有声明 bounds")
        trace = bound_for(problem.lagrangian, problem.bounds)
        verdict = verify_bound(problem, _solve(request, problem).trajectory, trace)
        return _jsonable({"trace": trace.model_dump(), "verify": verdict.model_dump()})
    except Exception as e:
        _fail("Lipschitz 界计算", e)


@app.post("/api/dbr", response_model=Dict[str, Any])
async def dbr(request: DbrRequest):
    """DuBois-Reymond / Erdmann 条件检验"""
    try:
        if request.variant not in ("erdmann", "convex", "subdiff", "clarke", "superdiff"):
            raise ConfigError(f"未知的检验变体: {request.variant}")
        problem = _load(request)
        traj = _solve(request, problem).trajectory
        report = run_dbr(request.variant, traj, problem.lagrangian, EnvelopeConfig())
        return _jsonable(report.summary())
    except Exception as e:
        _fail("DuBois-Reymond 检验", e)


@app.post("/api/envelope", response_model=Dict[str, Any])
async def envelope(request: EnvelopeRequest):
    """Lagrangian 一维截面的下凸包络"""
    try:
        L = make_lagrangian(request.lagrangian, len(request.x))
        if L.n != 1:
            raise ConfigError("只处理一维截面")
        x = as_vector(request.x, 1)
        us = np.linspace(-request.u_max, request.u_max, request.points)
        values = np.array(np.broadcast_to(np.asarray(L.evaluator(x[None, :], us[:, None]), dtype=float), us.shape))
        sampled = SampledFunction1D(us, values)
        co = lower_convex_envelope_1d(sampled)
        return _jsonable({
            "lagrangian": L.name,
            "u": us,
            "L": values,
            "co_L": co.ordinates,
            "section_convex": is_convex_sequence(sampled),
            "max_gap": float(np.max(values - co.ordinates)),
        })
    except Exception as e:
        _fail("包络计算", e)


# ============================================================================
# 启动服务
# ============================================================================

if __name__ == "__main__":
    import uvicorn

    api = get_api_config()
    uvicorn.run(
        "backend_api:app",
        host=api["host"],
        port=api["port"],
        log_level="info",
    )
