"""End-to-end optimization: series refinement, rounding, and the search
over the widest relay window, plus the semi-fixed baseline schemes.
"""

import math
from dataclasses import dataclass

import numpy as np

from .energy import (ConstraintReport, DecisionVars, EnergyBreakdown,
                     check_constraints, energy_breakdown)
from .geometry import Scenario, segment_layout
from .gp import GPConvergenceError, GPInfeasibleError, build_gp, solve_gp
from .schedule import SchedulePlan, build_plan
from .waterfill import StmSet, TrafficMatrix, tapped_water_fill

__all__ = ["Solution", "optimize", "run_scheme"]

SERIES_CAP = 30
SERIES_REL_TOL = 1e-4


@dataclass(frozen=True)
class Solution:
    """Best operating point found, or the reason none exists."""

    feasible: bool
    efficiency: float
    vars: DecisionVars | None
    plan: SchedulePlan | None
    breakdown: EnergyBreakdown | None
    report: ConstraintReport | None
    stms: StmSet | None
    diagnostics: dict

    @property
    def k_star(self) -> int | None:
        return self.vars.k_star if self.vars else None


def _segment_widths(scenario: Scenario, k_star: int) -> np.ndarray:
    windows = scenario.time_windows_s
    s = len(windows)
    tau = [max(windows[v] - windows[v + 1], 0.0) for v in range(s - 1)]
    tau.append(windows[-1])
    return np.array([tau[v] if v >= k_star else 0.0 for v in range(s)])


def _extract_point(result, problem, s: int):
    fixed = problem.fixed
    alpha = fixed.get("alpha", None)
    n0 = fixed.get("n0", None)
    if alpha is None:
        alpha = result["alpha"]
    if n0 is None:
        n0 = result["n0"]
    t_ground = tuple(result[f"t_ground[{i}]"] for i in range(s))
    t_uplink = tuple(result[f"t_uplink[{i}]"] for i in range(s))
    t_downlink = tuple(result[f"t_downlink[{i}]"] for i in range(s))
    extras = {v: result[f"extra[{v}]"] for v in problem.meta["active_segments"]}
    return alpha, n0, t_ground, t_uplink, t_downlink, extras


def _assemble(scenario, traffic, stms, k_star, alpha, n0, times, counts):
    """Plan, decision variables, energy, and slack report for one candidate."""
    s = scenario.num_satellites
    layout = segment_layout(scenario.time_windows_s, k_star, alpha)
    line_bits = stms.max_line_bits()
    count_vec = [counts.get(v, 0.0) for v in range(s)]
    plan = build_plan(line_bits, layout, scenario.seconds_per_bit,
                      scenario.schedule_overhead_s, n0, count_vec)
    dv = DecisionVars(
        n0=n0, alpha=alpha, k_star=k_star, t_ground=times[0],
        t_uplink=times[1], t_downlink=times[2],
        extra_schedules=tuple(max(c - s, 0.0) for c in count_vec))
    breakdown = energy_breakdown(scenario, traffic, dv, plan)
    report = check_constraints(scenario, traffic, dv, plan)
    return dv, plan, breakdown, report


def _repair_schedule_counts(scenario, line_bits, counts, n0, alpha, tau):
    """Bump matrix budgets until every schedule fits its segment width."""
    s = scenario.num_satellites
    spb = scenario.seconds_per_bit
    delta = scenario.schedule_overhead_s
    fixed = dict(counts)
    for v, count in fixed.items():
        width = alpha * tau[v]
        if delta >= width:
            return None  # overhead alone exceeds the segment; unfixable
        for _ in range(100000):
            per_schedule = n0 * spb * float(line_bits[v]) / (count - s) + delta
            if per_schedule <= width:
                break
            count += 1
        fixed[v] = count
    return fixed


def _solve_for_k(scenario, traffic, k_star, *, fixed_alpha, fixed_n0):
    """Series-refined GP solve plus rounding for one relay-window choice."""
    s = scenario.num_satellites
    stms = tapped_water_fill(traffic, k_star, _segment_widths(scenario, k_star))
    line_bits = stms.max_line_bits()

    prev_eff = None
    point = None
    t_used = 0
    gp_iters = 0
    for t_max in range(1, SERIES_CAP + 1):
        problem = build_gp(scenario, traffic, line_bits, k_star, t_max,
                           fixed_alpha=fixed_alpha, fixed_n0=fixed_n0)
        result = solve_gp(problem)
        gp_iters += result.iterations
        alpha, n0, tg, tb, td, extras = _extract_point(result, problem, s)
        counts = {v: e + s for v, e in extras.items()}
        _, _, breakdown, _ = _assemble(scenario, traffic, stms, k_star,
                                       alpha, n0, (tg, tb, td), counts)
        eff = breakdown.efficiency
        point = (alpha, n0, (tg, tb, td), extras)
        t_used = t_max
        if prev_eff is not None and \
                abs(eff - prev_eff) <= SERIES_REL_TOL * max(abs(prev_eff), 1e-30):
            break
        prev_eff = eff
    else:
        raise GPConvergenceError(
            f"series order exceeded {SERIES_CAP} without converging")

    alpha, n0_cont, times, extras = point
    tau = np.asarray(problem.meta["tau_s"])
    int_counts = {v: float(max(s + 1, math.ceil(e) + s)) for v, e in extras.items()}

    if fixed_n0 is not None:
        n0_candidates = [float(fixed_n0)]
    else:
        lo = max(1.0, math.floor(n0_cont))
        hi = min(float(scenario.max_serving_periods), math.ceil(n0_cont))
        n0_candidates = sorted({lo, hi})
    best = None
    for n0 in n0_candidates:
        counts = _repair_schedule_counts(scenario, line_bits, int_counts,
                                         n0, alpha, tau)
        if counts is None:
            continue
        dv, plan, breakdown, report = _assemble(
            scenario, traffic, stms, k_star, alpha, n0, times, counts)
        if not report.feasible():
            continue
        if best is None or breakdown.efficiency > best[2].efficiency:
            best = (dv, plan, breakdown, report)
    if best is None:
        raise GPInfeasibleError("rounding", 0.0)
    dv, plan, breakdown, report = best
    return Solution(
        feasible=True, efficiency=breakdown.efficiency, vars=dv, plan=plan,
        breakdown=breakdown, report=report, stms=stms,
        diagnostics={"t_max": t_used, "gp_newton_steps": gp_iters})


def optimize(scenario: Scenario, traffic: TrafficMatrix, *,
             fixed_alpha: float | None = None, fixed_n0: float | None = None,
             search_k: bool = True) -> Solution:
    """Run the full pipeline, searching the relay-window index when allowed.

    The window index advances while the exact efficiency strictly improves
    and stops at the first non-improvement; infeasible indices before the
    first feasible one are skipped.  Returns an infeasible
    :class:`Solution` carrying diagnostics when no index works.
    """
    s = scenario.num_satellites
    best = None
    history = []
    last_error = ""
    for k_star in range(s if search_k else 1):
        try:
            cand = _solve_for_k(scenario, traffic, k_star,
                                fixed_alpha=fixed_alpha, fixed_n0=fixed_n0)
        except (GPInfeasibleError, GPConvergenceError) as exc:
            history.append({"k_star": k_star, "efficiency": None,
                            "error": str(exc)})
            last_error = str(exc)
            if best is not None:
                break
            continue
        history.append({"k_star": k_star, "efficiency": cand.efficiency,
                        "t_max": cand.diagnostics["t_max"]})
        if best is None or cand.efficiency > best.efficiency:
            best = cand
        else:
            break
    if best is None:
        return Solution(feasible=False, efficiency=float("nan"), vars=None,
                        plan=None, breakdown=None, report=None, stms=None,
                        diagnostics={"k_history": history,
                                     "message": last_error or "no feasible window"})
    diagnostics = dict(best.diagnostics)
    diagnostics["k_history"] = history
    return Solution(feasible=True, efficiency=best.efficiency, vars=best.vars,
                    plan=best.plan, breakdown=best.breakdown, report=best.report,
                    stms=best.stms, diagnostics=diagnostics)


def run_scheme(scenario: Scenario, traffic: TrafficMatrix, variant: int) -> Solution:
    """The three comparison schemes.

    1: full optimization including the relay-window search.
    2: relay share pinned to one half, widest window fixed.
    3: single serving period, widest window fixed.
    """
    if variant == 1:
        return optimize(scenario, traffic)
    if variant == 2:
        return optimize(scenario, traffic, fixed_alpha=0.5, search_k=False)
    if variant == 3:
        return optimize(scenario, traffic, fixed_n0=1.0, search_k=False)
    raise ValueError(f"scheme variant must be 1, 2, or 3, got {variant}")
