"""Energy accounting for the six-step serving cycle and constraint checks.

Energies are joules, rates bits per second.  The reported efficiency always
uses the exact exponential power formulas, never a series truncation.
"""

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Scenario, transmit_powers
from .schedule import SchedulePlan
from .waterfill import TrafficMatrix

__all__ = [
    "EnergyError",
    "DecisionVars",
    "EnergyBreakdown",
    "ConstraintReport",
    "arrival_rates",
    "energy_breakdown",
    "check_constraints",
]

FEASIBILITY_TOL = 1e-8


class EnergyError(ValueError):
    """Raised on inconsistent energy-accounting inputs."""


@dataclass(frozen=True)
class DecisionVars:
    """Decision variables of one candidate operating point.

    Times are per-satellite tuples (seconds); ``extra_schedules[v]`` is the
    matrix budget of segment v beyond the matrix dimension (zero for idle
    segments and segments before ``k_star``).
    """

    n0: float
    alpha: float
    k_star: int
    t_ground: tuple[float, ...]
    t_uplink: tuple[float, ...]
    t_downlink: tuple[float, ...]
    extra_schedules: tuple[float, ...]

    def __post_init__(self):
        if self.n0 < 1:
            raise EnergyError(f"n0 must be >= 1, got {self.n0}")
        if not 0.0 < self.alpha < 1.0:
            raise EnergyError(f"alpha must lie in (0, 1), got {self.alpha}")
        n = len(self.t_ground)
        if len(self.t_uplink) != n or len(self.t_downlink) != n:
            raise EnergyError("per-satellite time tuples must have equal length")
        if self.k_star < 0 or self.k_star >= n:
            raise EnergyError(f"k_star must lie in [0, {n - 1}], got {self.k_star}")
        for name in ("t_ground", "t_uplink", "t_downlink"):
            if any(t <= 0 for t in getattr(self, name)):
                raise EnergyError(f"{name} entries must be positive")
        if any(p < 0 for p in self.extra_schedules):
            raise EnergyError("extra_schedules entries must be non-negative")


@dataclass(frozen=True)
class EnergyBreakdown:
    """Per-component energies (J) with throughput (bits) and bits/J."""

    caching: float
    computing: float
    ground_tx: float
    balloon_tx: float
    satellite_tx: float
    laser_static: float
    laser_dynamic: float
    laser_launch: float
    total: float
    throughput: float
    efficiency: float

    def to_dict(self) -> dict:
        return {
            "caching": self.caching,
            "computing": self.computing,
            "ground_tx": self.ground_tx,
            "balloon_tx": self.balloon_tx,
            "satellite_tx": self.satellite_tx,
            "laser_static": self.laser_static,
            "laser_dynamic": self.laser_dynamic,
            "laser_launch": self.laser_launch,
            "total": self.total,
            "throughput": self.throughput,
            "efficiency": self.efficiency,
        }


def arrival_rates(traffic: TrafficMatrix, orbit_period_s: float
                  ) -> tuple[np.ndarray, np.ndarray]:
    """Average source and destination rates implied by the traffic matrix.

    Row sums over the orbit period give the per-satellite arrival rate,
    column sums the rate landing at each satellite after relaying; their
    totals coincide by construction.
    """
    if orbit_period_s <= 0:
        raise EnergyError("orbit_period_s must be positive")
    return (traffic.row_sums() / orbit_period_s,
            traffic.col_sums() / orbit_period_s)


def energy_breakdown(scenario: Scenario, traffic: TrafficMatrix,
                     dv: DecisionVars, plan: SchedulePlan) -> EnergyBreakdown:
    """Exact energy accounting of a candidate point against its plan.

    Constraint violations do not abort the accounting; feasibility is the
    concern of :func:`check_constraints`.
    """
    if not math.isclose(plan.n0, dv.n0, rel_tol=1e-12, abs_tol=1e-12):
        raise EnergyError(f"plan was built for n0={plan.n0}, vars carry {dv.n0}")
    lam, mu = arrival_rates(traffic, scenario.orbit_period_s)
    s = scenario.num_satellites
    period = scenario.orbit_period_s
    throughput = dv.n0 * period * float(lam.sum())

    caching = scenario.caching_power_w_per_bit * throughput
    computing = (scenario.computing_power_w_per_cps
                 * scenario.computing_load_cycles_per_bit * s)

    ground = balloon = satellite = 0.0
    for i in range(s):
        pg, pb, pd = transmit_powers(scenario, i, dv.n0, dv.t_ground[i],
                                     dv.t_uplink[i], dv.t_downlink[i],
                                     float(lam[i]), float(mu[i]))
        ground += pg * dv.t_ground[i]
        balloon += pb * dv.t_uplink[i]
        satellite += pd * dv.t_downlink[i]

    window_kstar = scenario.time_windows_s[dv.k_star]
    relay_budget = dv.alpha * window_kstar
    schedule_time = sum(seg.num_schedules * seg.per_schedule_s
                        for seg in plan.segments)
    if schedule_time > 0.0:
        laser_static = (dv.n0 * traffic.total_bits
                        * scenario.laser_static_power_w_per_bps
                        * s * window_kstar * schedule_time / relay_budget ** 2)
        laser_dynamic = (scenario.isl_capacity_bps
                         * scenario.laser_dynamic_power_w_per_bps
                         * s * schedule_time)
        laser_launch = sum(
            scenario.laser_launch_power_w * seg.num_schedules ** 2 / relay_budget
            * seg.per_schedule_s * s * scenario.alignment_delay_s
            for seg in plan.segments)
    else:
        laser_static = laser_dynamic = laser_launch = 0.0

    total = (caching + computing + ground + balloon + satellite
             + laser_static + laser_dynamic + laser_launch)
    efficiency = throughput / total if total > 0 else 0.0
    return EnergyBreakdown(
        caching=caching, computing=computing, ground_tx=ground,
        balloon_tx=balloon, satellite_tx=satellite, laser_static=laser_static,
        laser_dynamic=laser_dynamic, laser_launch=laser_launch,
        total=total, throughput=throughput, efficiency=efficiency)


@dataclass(frozen=True)
class ConstraintReport:
    """Signed slacks of every constraint; non-negative means satisfied."""

    slacks: tuple[tuple[str, float], ...]

    @property
    def min_slack(self) -> float:
        return min((s for _, s in self.slacks), default=0.0)

    @property
    def worst(self) -> str:
        return min(self.slacks, key=lambda kv: kv[1])[0] if self.slacks else ""

    def feasible(self, tol: float = FEASIBILITY_TOL) -> bool:
        return self.min_slack >= -tol


def check_constraints(scenario: Scenario, traffic: TrafficMatrix,
                      dv: DecisionVars, plan: SchedulePlan) -> ConstraintReport:
    """Evaluate every feasibility constraint of the serving cycle.

    Covers, per satellite, the pre-window budget (ground transmission plus
    pooled computing plus propagation) and the in-window budget (uplink,
    downlink, propagation, relay share); plan-wide it covers the average
    laser bound, the per-segment schedule fit, and the variable box bounds.
    """
    lam, _ = arrival_rates(traffic, scenario.orbit_period_s)
    s = scenario.num_satellites
    period = scenario.orbit_period_s
    compute_delay = (scenario.computing_load_cycles_per_bit * dv.n0 * period
                     * float(lam.sum()) / scenario.computing_pool_cps)
    window_kstar = scenario.time_windows_s[dv.k_star]
    entries = []
    for i in range(s):
        l_i = scenario.balloon_heights_km[i]
        w_i = scenario.time_windows_s[i]
        prop_up = l_i / scenario.propagation_speed_km_s
        entries.append((
            f"pre_window[{i}]",
            period - (dv.t_ground[i] + compute_delay + prop_up + w_i)))
        relay_share = dv.alpha * (w_i if i >= dv.k_star else window_kstar)
        round_trip = 2.0 * (scenario.altitude_km - l_i) / scenario.propagation_speed_km_s
        entries.append((
            f"in_window[{i}]",
            w_i - (dv.t_uplink[i] + dv.t_downlink[i] + round_trip + relay_share)))
    entries.append(("avg_lasers", scenario.max_lasers - plan.avg_lasers))
    for seg in plan.segments:
        if seg.max_line_bits > 0.0:
            entries.append((f"schedule_fit[{seg.segment}]",
                            seg.usable_width_s - seg.per_schedule_s))
    entries.append(("n0_lower", dv.n0 - 1.0))
    entries.append(("n0_upper", float(scenario.max_serving_periods) - dv.n0))
    entries.append(("alpha_lower", dv.alpha))
    entries.append(("alpha_upper", 1.0 - dv.alpha))
    return ConstraintReport(slacks=tuple(entries))
