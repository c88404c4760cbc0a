"""后端接口测试：直接调用路由协程"""

import asyncio

import pytest
from fastapi import HTTPException

from backend_api import (
    DbrRequest,
    EnvelopeRequest,
    ProblemRequest,
    SolveRequest,
    bound,
    dbr,
    envelope,
    get_catalog,
    root,
    solve,
)


def test_root_and_catalog():
    assert asyncio.run(root())["message"] == "VarCalc API"
    names = {entry["name"] for entry in asyncio.run(get_catalog())}
    assert {"quadratic", "double_well"} <= names


def test_solve():
    report = asyncio.run(solve(SolveRequest(problem="quadratic.json", steps=20, resolution=81)))
    assert report["steps"] == 20
    assert report["action"] == pytest.approx(1.0, abs=1e-2)
    assert len(report["states"]) == 21

    bare = asyncio.run(solve(SolveRequest(problem="quadratic.json", steps=20, resolution=81,
                                          include_trajectory=False)))
    assert "states" not in bare
    assert bare["action"] == report["action"]


def test_bound_and_dbr():
    report = asyncio.run(bound(ProblemRequest(problem="quadratic.json", steps=20, resolution=81)))
    assert report["verify"]["passed"]

    summary = asyncio.run(dbr(DbrRequest(problem="quadratic.json", steps=20, resolution=81, variant="erdmann")))
    assert summary["variant"] == "erdmann"
    assert summary["c"] == pytest.approx(-1.0, abs=2e-2)


def test_envelope():
    report = asyncio.run(envelope(EnvelopeRequest(lagrangian="double_well")))
    assert not report["section_convex"]
    assert report["max_gap"] == pytest.approx(1.0)
    assert len(report["co_L"]) == 401


# ============================================================================
# 错误映射
# ============================================================================

@pytest.mark.parametrize("request_", [
    DbrRequest(problem="quadratic.json", variant="weierstrass"),
    DbrRequest(problem="quadratic_bolza.json", variant="erdmann"),
])
def test_expected_errors_map_to_422(request_):
    with pytest.raises(HTTPException) as info:
        asyncio.run(dbr(request_))
    assert info.value.status_code == 422
