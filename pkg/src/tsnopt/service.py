"""FastAPI service exposing the solver, scheduler, sweeps, and self-test.

The CLI is a thin client of these endpoints; computations live in the core
modules and all request/response validation happens here via pydantic.
"""

from typing import Any, Literal

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import __version__
from .energy import EnergyError
from .geometry import ScenarioError
from .harness import (DEFAULT_THETA_BITS, ConfigError, ExperimentSpec,
                      gen_traffic, run_experiment, scenario_from_mapping)
from .optimizer import Solution, run_scheme
from .schedule import ScheduleError, materialize_plan, render_plan
from .selftest import run_selftest
from .waterfill import TrafficMatrix, WaterfillError

__all__ = ["app"]

app = FastAPI(title="tsnopt", version=__version__,
              description="Energy-efficiency optimizer for balloon-relayed "
                          "terrestrial-satellite networks")

_INPUT_ERRORS = (ConfigError, ScenarioError, WaterfillError, ScheduleError,
                 EnergyError, ValueError)


class SolveRequest(BaseModel):
    scenario: dict[str, Any] = Field(default_factory=dict)
    seed: int = 0
    theta_bits: float = DEFAULT_THETA_BITS
    scheme: Literal[1, 2, 3] = 1
    traffic: list[list[float]] | None = None


class SolveResponse(BaseModel):
    feasible: bool
    efficiency_bits_per_J: float | None
    n0: float | None
    m_bar: float | None
    alpha: float | None
    k_star: int | None
    breakdown: dict[str, float] | None
    min_slack: float | None
    diagnostics: dict[str, Any]


class ScheduleSegment(BaseModel):
    segment: int
    max_line_bits: float
    num_schedules: float
    coefficient_bits: float
    per_schedule_s: float
    lasers: int
    matrices: list[list[list[int]]]


class ScheduleResponse(BaseModel):
    feasible: bool
    k_star: int | None
    stms: list[list[list[float]]]
    segments: list[ScheduleSegment]
    text: str


class SweepRequest(BaseModel):
    scenario: dict[str, Any] = Field(default_factory=dict)
    axis: Literal["n_max", "S", "theta", "beta_max", "none"] = "none"
    values: list[float] = Field(default_factory=list)
    schemes: list[Literal[1, 2, 3]] = Field(default=[1, 2, 3])
    seed: int = 0
    reps: int = 1
    theta_bits: float = DEFAULT_THETA_BITS


class SweepResponse(BaseModel):
    metadata: dict[str, Any]
    rows: list[dict[str, Any]]


class SelftestCheckModel(BaseModel):
    name: str
    expected: float
    actual: float
    ok: bool


class SelftestResponse(BaseModel):
    passed: bool
    checks: list[SelftestCheckModel]


def _solve_from_request(req: SolveRequest) -> tuple[Solution, TrafficMatrix]:
    try:
        scenario = scenario_from_mapping(req.scenario)
        if req.traffic is not None:
            traffic = TrafficMatrix(np.asarray(req.traffic, dtype=float))
            if traffic.size != scenario.num_satellites:
                raise ConfigError(
                    f"traffic is {traffic.size}x{traffic.size} but the scenario "
                    f"has {scenario.num_satellites} satellites")
        else:
            traffic = gen_traffic(scenario.num_satellites, req.theta_bits, req.seed)
        return run_scheme(scenario, traffic, req.scheme), traffic
    except _INPUT_ERRORS as exc:
        raise HTTPException(status_code=422, detail=str(exc))


@app.get("/healthz")
def healthz() -> dict:
    return {"status": "ok", "version": __version__}


@app.post("/solve", response_model=SolveResponse)
def solve(req: SolveRequest) -> SolveResponse:
    solution, _ = _solve_from_request(req)
    if not solution.feasible:
        return SolveResponse(
            feasible=False, efficiency_bits_per_J=None, n0=None, m_bar=None,
            alpha=None, k_star=None, breakdown=None, min_slack=None,
            diagnostics=solution.diagnostics)
    return SolveResponse(
        feasible=True,
        efficiency_bits_per_J=solution.efficiency,
        n0=solution.vars.n0,
        m_bar=solution.plan.avg_lasers,
        alpha=solution.vars.alpha,
        k_star=solution.vars.k_star + 1,
        breakdown=solution.breakdown.to_dict(),
        min_slack=solution.report.min_slack,
        diagnostics=solution.diagnostics)


@app.post("/schedule", response_model=ScheduleResponse)
def schedule(req: SolveRequest) -> ScheduleResponse:
    solution, _ = _solve_from_request(req)
    if not solution.feasible:
        return ScheduleResponse(feasible=False, k_star=None, stms=[],
                                segments=[], text="")
    plan = materialize_plan(solution.plan, solution.stms)
    segments = [
        ScheduleSegment(
            segment=seg.segment + 1,
            max_line_bits=seg.max_line_bits,
            num_schedules=seg.num_schedules,
            coefficient_bits=seg.coefficient_bits,
            per_schedule_s=seg.per_schedule_s,
            lasers=seg.lasers.count if seg.lasers else 0,
            matrices=[cm.pattern.tolist() for cm in (seg.matrices or ())])
        for seg in plan.segments
    ]
    return ScheduleResponse(
        feasible=True, k_star=solution.vars.k_star + 1,
        stms=[m.tolist() for m in solution.stms.matrices],
        segments=segments, text=render_plan(plan))


@app.post("/sweep", response_model=SweepResponse)
def sweep(req: SweepRequest) -> SweepResponse:
    try:
        spec = ExperimentSpec(
            scenario=req.scenario, axis=req.axis, values=tuple(req.values),
            schemes=tuple(dict.fromkeys(req.schemes)), seed=req.seed,
            reps=req.reps, theta_bits=req.theta_bits)
        rows, metadata = run_experiment(spec)
    except _INPUT_ERRORS as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    return SweepResponse(metadata=metadata, rows=[r.to_dict() for r in rows])


@app.post("/selftest", response_model=SelftestResponse)
def selftest() -> SelftestResponse:
    checks = run_selftest()
    return SelftestResponse(
        passed=all(c.ok for c in checks),
        checks=[SelftestCheckModel(name=c.name, expected=float(c.expected),
                                   actual=float(c.actual), ok=c.ok)
                for c in checks])
