"""Built-in worked-example checks runnable from the CLI and the service."""

import math
from dataclasses import dataclass

import numpy as np

from .geometry import orbital_period
from .schedule import decompose, laser_count, schedule_coefficient_bits

__all__ = ["SelftestCheck", "run_selftest"]


@dataclass(frozen=True)
class SelftestCheck:
    name: str
    expected: float
    actual: float
    ok: bool


def _close(actual: float, expected: float, rel: float) -> bool:
    return math.isclose(actual, expected, rel_tol=rel, abs_tol=0.0)


def run_selftest() -> list[SelftestCheck]:
    """Reproduce the four-satellite scheduling example and geometry anchors.

    Example setup: ISL capacity 4e9 bps, per-schedule overhead 2 s, usable
    segment width 1000 s, a budget of 7 matrices for 4 satellites, single
    serving period, bottleneck line sum 1.8e10 bits.
    """
    checks = []
    capacity = 4e9
    overhead = 2.0
    width = 1000.0
    budget = 7
    size = 4
    n0 = 1.0
    bottleneck = 1.8e10

    spb = 1.0 / capacity
    checks.append(SelftestCheck(
        "seconds_per_bit", 0.25e-9, spb, _close(spb, 0.25e-9, 1e-12)))
    coeff = schedule_coefficient_bits(bottleneck, budget, size, n0)
    checks.append(SelftestCheck(
        "coefficient_bits", 6e9, coeff, _close(coeff, 6e9, 1e-12)))
    tx_time = coeff * spb
    checks.append(SelftestCheck(
        "per_schedule_tx_s", 1.5, tx_time, _close(tx_time, 1.5, 1e-12)))
    lasers = laser_count(bottleneck, budget, size, n0, spb, overhead,
                         alpha=1.0, tau_s=width)
    checks.append(SelftestCheck(
        "lasers_required", 0.0245, lasers.required,
        _close(lasers.required, 0.0245, 1e-12)))
    checks.append(SelftestCheck(
        "lasers_count", 1, lasers.count, lasers.count == 1))

    demand = np.full((size, size), bottleneck / (size - 1))
    np.fill_diagonal(demand, 0.0)
    matrices = decompose(demand, budget, n0)
    covered = sum(cm.coefficient_bits * cm.pattern for cm in matrices)
    coverage_ok = bool(np.all(covered >= n0 * demand - 1e-6))
    checks.append(SelftestCheck(
        "decompose_count_within_budget", budget, len(matrices),
        len(matrices) <= budget and coverage_ok))

    routing = math.pi * (550.0 + 6371.0)
    checks.append(SelftestCheck(
        "max_routing_distance_km", 2.17e4, routing, _close(routing, 2.17e4, 5e-3)))
    delay = routing / 3e5
    checks.append(SelftestCheck(
        "routing_delay_s", 7.25e-2, delay, _close(delay, 7.25e-2, 5e-3)))
    period = orbital_period(550.0)
    checks.append(SelftestCheck(
        "orbit_period_s", 5731.0, period, abs(period - 5731.0) <= 1.0))
    return checks
