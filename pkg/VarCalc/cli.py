"""
命令行入口
加载问题、运行求解与检验，把报告 JSON 写到标准输出，把可作图的 CSV 与运行清单写到输出目录

退出码：0 = 运行完成且所有检验通过；1 = 运行完成但有发现（违反的检验写在报告里）；2 = 用法或配置错误
"""

import argparse
import csv
import hashlib
import json
import logging
import math
import sys
import time
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field, ValidationError

from . import __version__
from .config import LOGGING_CONFIG, build_config, get_path, get_thread_count
from .convex_analysis import (
    SampledFunction1D,
    is_convex_sequence,
    legendre_fenchel,
    lower_convex_envelope_1d,
    one_sided_derivatives,
)
from .direct_solver import SolverConfig, refine_local, solve_lagrange_dp
from .errors import ConfigError, VarCalcError
from .lagrangian_model import (
    ProblemInstance,
    Trajectory,
    as_vector,
    builtin_catalog,
    load_problem,
    make_lagrangian,
)
from .necessary_conditions import EnvelopeConfig, run_dbr
from .regularity import BoundConfig, bound_for, verify_bound
from .value_function import (
    Region,
    ValueGridConfig,
    check_initial_attainment,
    compute_value_grid,
    hj_residuals,
    inclusion_check,
    optimal_rollout,
)

# 配置日志
logging.basicConfig(level=LOGGING_CONFIG["level"], format=LOGGING_CONFIG["format"])
logger = logging.getLogger(__name__)

EXIT_OK, EXIT_FINDINGS, EXIT_ERROR = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """参数错误时抛出异常而不是打印多行用法后退出"""

    def error(self, message):
        raise UsageError(message)


class RunManifest(BaseModel):
    """一次运行的清单：命令、问题哈希、配置回显、版本、耗时与全部输出文件"""
    command: str
    argv: List[str]
    problem_hash: Optional[str] = Field(default=None, description="问题文档规范化 JSON 的 SHA-256")
    config: Dict[str, Any] = Field(default_factory=dict)
    version: str = __version__
    wall_time: float = 0.0
    outputs: List[str] = Field(default_factory=list)


# ============================================================================
# 输出格式
# ============================================================================

def _jsonable(value):
    """numpy 标量/数组转为 Python 类型，非有限浮点数写成字符串"""
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    return value


def dumps(payload) -> str:
    return json.dumps(_jsonable(payload), indent=2, sort_keys=True, ensure_ascii=False)


def problem_hash(problem: ProblemInstance) -> str:
    canonical = json.dumps(problem.document, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _format(value) -> str:
    if value is None:
        return ""
    return f"{float(value):.17g}"


def write_csv(path: Path, header: Sequence[str], rows) -> Path:
    """浮点数固定 17 位有效数字，None 写成空单元格"""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_format(v) for v in row])
    return path


def trajectory_header(n: int) -> List[str]:
    return ["t"] + [f"y{i + 1}" for i in range(n)] + [f"u{i + 1}" for i in range(n)]


def trajectory_rows(traj: Trajectory):
    """
    每个节点一行：t, y_1..y_n, u_1..u_n

    u 是从该节点出发那一段的斜率 (y_{i+1} - y_i) / h，末节点没有出发段，u 列留空
    """
    slopes = traj.slopes
    for i, (t, state) in enumerate(zip(traj.times, traj.states)):
        u = slopes[i] if i < traj.N else [None] * traj.n
        yield [t, *state, *u]


def read_trajectory(path: Path) -> Trajectory:
    """读取 t, y1..yn[, u1..un] 格式的轨迹 CSV，u 列由状态重新算出，读取时忽略"""
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    if len(rows) < 3:
        raise ConfigError(f"轨迹文件 {path} 至少需要表头和两行数据")
    state_columns = [j for j, name in enumerate(rows[0]) if name.strip().startswith(("y", "x"))]
    if not state_columns:
        raise ConfigError(f"轨迹文件 {path} 的表头没有状态列 y1..yn")
    data = np.array([[float(row[0])] + [float(row[j]) for j in state_columns] for row in rows[1:] if row],
                    dtype=float)
    return Trajectory.from_times(data[:, 0], data[:, 1:])


def _resolve_problem(value: str) -> Path:
    path = Path(value)
    if not path.exists():
        candidate = get_path("problems_dir") / value
        if candidate.exists():
            return candidate
    return path


# ============================================================================
# 参数
# ============================================================================

def _add_problem(p: argparse.ArgumentParser):
    p.add_argument("-p", "--problem", required=True, help="问题 JSON 文件（也可以是 Problems/ 下的文件名）")


def _add_solver(p: argparse.ArgumentParser):
    p.add_argument("-N", "--steps", type=int, help="时间步数")
    p.add_argument("--resolution", type=int, help="每个坐标轴的状态格点数")
    p.add_argument("--half-width", type=float, dest="half_width", help="状态网格半宽")
    p.add_argument("--s-max", type=float, dest="s_max", help="斜率上限（配合 --slope-policy capped）")
    p.add_argument("--slope-policy", choices=["all", "capped"], dest="slope_policy")
    p.add_argument("--refine", type=int, default=0, help="局部细化的扫描次数，0 表示不细化")


def _add_value(p: argparse.ArgumentParser):
    p.add_argument("--tau", type=float, help="时间步长")
    p.add_argument("--resolution", type=int, help="每个坐标轴的状态格点数")
    p.add_argument("--half-width", type=float, dest="half_width", help="状态网格半宽")
    p.add_argument("--sub", type=int, help="半拉格朗日子格点细分倍数")
    p.add_argument("--s-max", type=float, dest="s_max", help="斜率上限")


def _add_region(p: argparse.ArgumentParser):
    for name in ("t-min", "t-max", "x-min", "x-max"):
        p.add_argument(f"--{name}", type=float, dest=name.replace("-", "_"))
    p.add_argument("--stride", type=int, default=1, help="空间方向的抽样步长")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="varcalc", description="变分问题的直接法求解与最优性条件检验")
    parser.add_argument("--out", help="输出目录，默认 runs/<子命令>")
    parser.add_argument("--threads", type=int, help="线程数，默认读取 VARCALC_THREADS")
    parser.add_argument("--version", action="version", version=f"varcalc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="格点动态规划求解 Lagrange 问题")
    _add_problem(p)
    _add_solver(p)

    p = sub.add_parser("envelope", help="Lagrangian 截面的下凸包络")
    p.add_argument("--lagrangian", required=True)
    p.add_argument("--x", type=float, nargs="+", default=[0.0])
    p.add_argument("--u-max", type=float, dest="u_max", default=2.0)
    p.add_argument("--points", type=int, default=401)
    p.add_argument("--at", type=float, help="在此处计算包络的单侧导数")

    p = sub.add_parser("lft", help="Lagrangian 截面的离散 Legendre-Fenchel 变换")
    p.add_argument("--lagrangian", required=True)
    p.add_argument("--x", type=float, nargs="+", default=[0.0])
    p.add_argument("--u-max", type=float, dest="u_max", default=10.0)
    p.add_argument("--u-points", type=int, dest="u_points", default=2001)
    p.add_argument("--p-max", type=float, dest="p_max", default=8.0)
    p.add_argument("--p-points", type=int, dest="p_points", default=801)

    p = sub.add_parser("dbr", help="DuBois-Reymond / Erdmann 条件检验")
    _add_problem(p)
    _add_solver(p)
    p.add_argument("--variant", required=True, choices=["erdmann", "convex", "subdiff", "clarke", "superdiff"])
    p.add_argument("--trajectory", help="检验给定的轨迹 CSV，而不是求解得到的极小元")

    p = sub.add_parser("bound", help="先验 Lipschitz 界及其验证")
    _add_problem(p)
    _add_solver(p)

    p = sub.add_parser("value", help="Bolza 问题的值函数网格")
    _add_problem(p)
    _add_value(p)

    p = sub.add_parser("hj", help="值函数的 HJ 不等式残差")
    _add_problem(p)
    _add_value(p)
    _add_region(p)

    p = sub.add_parser("inclusion", help="微分包含刻画检验")
    _add_problem(p)
    _add_value(p)
    p.add_argument("--trajectory", help="检验给定的轨迹 CSV，默认使用值函数的最优展开")

    sub.add_parser("catalog", help="列出内置 Lagrangian 与终端代价")
    return parser


# ============================================================================
# 子命令
# ============================================================================

def _solver_config(args) -> SolverConfig:
    return build_config(SolverConfig, steps=args.steps, resolution=args.resolution, half_width=args.half_width,
                        s_max=args.s_max, slope_policy=args.slope_policy, threads=args.threads)


def _value_config(args) -> ValueGridConfig:
    return build_config(ValueGridConfig, tau=args.tau, resolution=args.resolution, half_width=args.half_width,
                        sub=args.sub, s_max=args.s_max, threads=args.threads)


def _load(args, kind: str) -> ProblemInstance:
    problem = load_problem(_resolve_problem(args.problem))
    if problem.kind != kind:
        raise ConfigError(f"子命令 {args.command} 需要 {kind} 问题，得到 {problem.kind}")
    return problem


def _minimizer(args, problem: ProblemInstance, run: RunManifest):
    cfg = _solver_config(args)
    run.config["solver"] = cfg.model_dump()
    result = solve_lagrange_dp(problem, cfg)
    if args.refine:
        result = refine_local(result, sweeps=args.refine)
    return result


def cmd_solve(args, out: Path, run: RunManifest):
    problem = _load(args, "lagrange")
    run.problem_hash = problem_hash(problem)
    result = _minimizer(args, problem, run)
    traj = result.trajectory
    run.outputs.append(str(write_csv(out / "trajectory.csv", trajectory_header(traj.n), trajectory_rows(traj))))
    report = {**result.to_report(), "grid_global": result.grid_global, "steps": traj.N}
    return report, EXIT_OK


def _section_samples(args, u_max: float, points: int):
    L = make_lagrangian(args.lagrangian, len(args.x))
    if L.n != 1:
        raise ConfigError("envelope / lft 只处理一维截面")
    x = as_vector(args.x, 1)
    us = np.linspace(-u_max, u_max, points)
    values = np.broadcast_to(np.asarray(L.evaluator(x[None, :], us[:, None]), dtype=float), us.shape)
    return L, x, us, np.array(values)


def cmd_envelope(args, out: Path, run: RunManifest):
    L, x, us, values = _section_samples(args, args.u_max, args.points)
    run.config["envelope"] = {"lagrangian": L.name, "x": x.tolist(), "u_max": args.u_max, "points": args.points}
    sampled = SampledFunction1D(us, values)
    envelope = lower_convex_envelope_1d(sampled)
    rows = zip(us, values, envelope.ordinates)
    run.outputs.append(str(write_csv(out / "envelope.csv", ["u", "L", "co_L"], rows)))
    gap = values - envelope.ordinates
    report = {
        "lagrangian": L.name,
        "x": x.tolist(),
        "section_convex": is_convex_sequence(sampled),
        "envelope_convex": is_convex_sequence(envelope),
        "max_gap": float(np.max(gap[np.isfinite(gap)])),
        "contact_fraction": float(np.mean(gap <= 1e-12)),
    }
    if args.at is not None:
        derivatives = one_sided_derivatives(envelope, args.at)
        report["derivatives"] = {"point": derivatives.point, "left": derivatives.left, "right": derivatives.right}
    return report, EXIT_OK


def cmd_lft(args, out: Path, run: RunManifest):
    L, x, us, values = _section_samples(args, args.u_max, args.u_points)
    run.config["lft"] = {"lagrangian": L.name, "x": x.tolist(), "u_max": args.u_max, "u_points": args.u_points,
                         "p_max": args.p_max, "p_points": args.p_points}
    p_grid = np.linspace(-args.p_max, args.p_max, args.p_points)
    table = legendre_fenchel(SampledFunction1D(us, values), p_grid)
    rows = zip(table.p, table.values, table.argmax, table.truncated.astype(float))
    run.outputs.append(str(write_csv(out / "conjugate.csv", ["p", "H", "argmax_u", "truncated"], rows)))
    report = {"lagrangian": L.name, "x": x.tolist(), "truncated_points": int(np.sum(table.truncated)),
              "H_min": float(np.min(table.values))}
    return report, EXIT_OK


def cmd_dbr(args, out: Path, run: RunManifest):
    problem = _load(args, "lagrange")
    run.problem_hash = problem_hash(problem)
    if args.trajectory:
        traj = read_trajectory(Path(args.trajectory))
    else:
        traj = _minimizer(args, problem, run).trajectory
    cfg = build_config(EnvelopeConfig, threads=args.threads)
    run.config["envelope"] = cfg.model_dump()
    report = run_dbr(args.variant, traj, problem.lagrangian, cfg)
    return report.summary(), EXIT_OK if report.passed else EXIT_FINDINGS


def cmd_bound(args, out: Path, run: RunManifest):
    problem = _load(args, "lagrange")
    run.problem_hash = problem_hash(problem)
    cfg = BoundConfig()
    run.config["bound"] = cfg.model_dump()
    if problem.bounds is None:
        raise ConfigError("bound 需要问题文档声明 bounds")
    trace = bound_for(problem.lagrangian, problem.bounds, cfg)
    result = _minimizer(args, problem, run)
    verdict = verify_bound(problem, result.trajectory, trace)
    report = {"trace": trace.model_dump(), "verify": verdict.model_dump()}
    return report, EXIT_OK if verdict.passed else EXIT_FINDINGS


def _value_grid(args, run: RunManifest):
    problem = _load(args, "bolza")
    run.problem_hash = problem_hash(problem)
    cfg = _value_config(args)
    run.config["value"] = cfg.model_dump()
    return problem, compute_value_grid(problem.lagrangian, problem.terminal, problem.horizon, cfg)


def cmd_value(args, out: Path, run: RunManifest):
    problem, grid = _value_grid(args, run)
    n = problem.n
    header = ["t"] + [f"x{i + 1}" for i in range(n)] + ["V"] + [f"u{i + 1}" for i in range(n)]

    def rows():
        for k, t in enumerate(grid.times):
            for i, node in enumerate(grid.nodes):
                yield [t, *node, grid.V[k, i], *grid.ustar[k, i]]

    run.outputs.append(str(write_csv(out / "value.csv", header, rows())))
    attainment = check_initial_attainment(grid)
    report = {
        "K": grid.K,
        "tau": grid.tau,
        "states": int(grid.nodes.shape[0]),
        "value_at_x": float(grid.value(grid.K, problem.x)[0]),
        "initial_attainment": attainment.model_dump(),
    }
    return report, EXIT_OK if attainment.passed else EXIT_FINDINGS


def cmd_hj(args, out: Path, run: RunManifest):
    _, grid = _value_grid(args, run)
    region = Region(t_min=args.t_min, t_max=args.t_max, x_min=args.x_min, x_max=args.x_max)
    run.config["region"] = region.model_dump()
    report = hj_residuals(grid, region=region, stride=max(1, args.stride))
    return report.model_dump(), EXIT_OK if report.passed else EXIT_FINDINGS


def cmd_inclusion(args, out: Path, run: RunManifest):
    problem, grid = _value_grid(args, run)
    if args.trajectory:
        traj = read_trajectory(Path(args.trajectory))
    else:
        start, _ = grid.lattice.snap(problem.x)
        traj = optimal_rollout(grid, grid.nodes[start])
        run.outputs.append(str(write_csv(out / "rollout.csv", trajectory_header(traj.n), trajectory_rows(traj))))
    verdict = inclusion_check(traj, grid)
    return verdict.model_dump(), EXIT_OK if verdict.verdict == "MINIMIZER" else EXIT_FINDINGS


def cmd_catalog(args, out: Path, run: RunManifest):
    entries = [{"name": e.name, "kind": e.kind, "description": e.description} for e in builtin_catalog()]
    return {"entries": entries}, EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "envelope": cmd_envelope,
    "lft": cmd_lft,
    "dbr": cmd_dbr,
    "bound": cmd_bound,
    "value": cmd_value,
    "hj": cmd_hj,
    "inclusion": cmd_inclusion,
    "catalog": cmd_catalog,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    命令行主函数

    Args:
        argv: 参数列表，None 时读取 sys.argv

    Returns:
        退出码 0 / 1 / 2
    """
    argv = list(sys.argv[1:] if argv is None else argv)
    started = time.perf_counter()
    try:
        args = build_parser().parse_args(argv)
        if args.threads is None:
            get_thread_count()
        elif args.threads < 1:
            raise ConfigError("--threads 必须是正整数")

        out = Path(args.out) if args.out else get_path("runs_dir") / args.command
        run = RunManifest(command=args.command, argv=argv)
        report, code = COMMANDS[args.command](args, out, run)

        text = dumps(report)
        if args.command != "catalog":
            out.mkdir(parents=True, exist_ok=True)
            report_path = out / "report.json"
            report_path.write_text(text + "\n", encoding="utf-8")
            run.outputs.append(str(report_path))
            run.wall_time = time.perf_counter() - started
            (out / "manifest.json").write_text(dumps(run.model_dump()) + "\n", encoding="utf-8")
        print(text)
        if code == EXIT_FINDINGS:
            logger.warning(f"⚠ {args.command}: 检验未通过，详见报告")
        return code
    except SystemExit as e:
        return int(e.code or 0)
    except UsageError as e:
        print(f"varcalc: 用法错误: {e}", file=sys.stderr)
        return EXIT_ERROR
    except (VarCalcError, ValidationError, OSError, ValueError) as e:
        message = " ".join(str(e).split())
        print(f"varcalc: {type(e).__name__}: {message}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
