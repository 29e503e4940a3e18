"""Acceptance suite: one test per release criterion, each printing a
PASS line with its headline numbers (run with ``pytest -v -s``).
"""

import math
import time

import numpy as np
import pytest

from tsnopt.geometry import orbital_period
from tsnopt.gp import build_gp, solve_gp
from tsnopt.harness import (ExperimentSpec, format_rows, gen_traffic,
                            run_experiment, scenario_from_mapping)
from tsnopt.optimizer import _segment_widths, run_scheme
from tsnopt.schedule import (decompose, laser_count, max_line_sum,
                             schedule_coefficient_bits)
from tsnopt.waterfill import TrafficMatrix, tapped_water_fill, water_fill

TLEO_REFERENCE = 5730.118908188776  # 40-digit evaluation, frozen


def relative(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


_CACHE = {}


def scheme_efficiency(scheme, seed, *, n_max=20, beta_max=45.0, theta=1e4,
                      size=5):
    """Memoized scheme run; returns NaN for infeasible cells."""
    key = (scheme, seed, n_max, beta_max, theta, size)
    if key not in _CACHE:
        scenario = scenario_from_mapping({
            "max_serving_periods": n_max, "elevation_max_deg": beta_max,
            "num_satellites": size})
        traffic = gen_traffic(size, theta, seed)
        solution = run_scheme(scenario, traffic, scheme)
        _CACHE[key] = solution.efficiency if solution.feasible else float("nan")
    return _CACHE[key]


def non_increasing(values, tol=1e-6):
    return all(b <= a * (1.0 + tol) for a, b in zip(values, values[1:]))


def non_decreasing(values, tol=1e-6):
    return all(b >= a * (1.0 - tol) for a, b in zip(values, values[1:]))


def unimodal(values, tol=1e-6):
    peak = max(range(len(values)), key=lambda k: values[k])
    return (non_decreasing(values[: peak + 1], tol)
            and non_increasing(values[peak:], tol))


def test_criterion_1_worked_scheduling_example():
    start = time.perf_counter()
    capacity, size, budget, n0 = 4e9, 4, 7, 1.0
    bottleneck, width, overhead = 1.8e10, 1000.0, 2.0

    spb = 1.0 / capacity
    assert relative(spb, 0.25e-9) <= 1e-12
    coeff = schedule_coefficient_bits(bottleneck, budget, size, n0)
    assert relative(coeff, 6e9) <= 1e-12
    assert relative(coeff * spb, 1.5) <= 1e-12
    lasers = laser_count(bottleneck, budget, size, n0, spb, overhead,
                         alpha=1.0, tau_s=width)
    assert relative(lasers.required, 0.0245) <= 1e-12
    assert lasers.count == 1
    demand = np.full((size, size), bottleneck / (size - 1))
    np.fill_diagonal(demand, 0.0)
    matrices = decompose(demand, budget, n0)
    assert 0 < len(matrices) <= budget
    covered = sum(cm.coefficient_bits * cm.pattern.astype(float)
                  for cm in matrices)
    assert np.all(covered >= demand - 1e-6)
    elapsed = time.perf_counter() - start
    assert elapsed < 1.0
    print(f"PASS criterion 1: worked example reproduced "
          f"(coeff=6e9 bits, 1.5 s, m=1; {elapsed:.3f} s)")


def test_criterion_2_geometry_anchors():
    scenario = scenario_from_mapping({})
    assert relative(scenario.max_routing_distance_km, 2.17e4) <= 5e-3
    assert relative(scenario.routing_delay_s, 7.25e-2) <= 5e-3
    period = orbital_period(550.0)
    assert relative(period, TLEO_REFERENCE) <= 1e-12
    assert abs(period - 5731.0) <= 1.0
    print(f"PASS criterion 2: geometry anchors "
          f"(routing {scenario.max_routing_distance_km:.4g} km, "
          f"delay {scenario.routing_delay_s:.4g} s, period {period:.1f} s)")


def test_criterion_3_tapped_waterfill_suite():
    start = time.perf_counter()
    rng = np.random.default_rng(303)
    for trial in range(1000):
        size = int(rng.integers(2, 9))
        k_star = int(rng.integers(0, size))
        bits = rng.random((size, size)) * 10.0 ** rng.integers(1, 7)
        np.fill_diagonal(bits, 0.0)
        traffic = TrafficMatrix(bits)
        widths = np.concatenate([
            np.zeros(k_star), rng.random(size - k_star) * 100.0 + 0.1])
        stms = tapped_water_fill(traffic, k_star, widths)

        combined = stms.combined()
        np.testing.assert_allclose(combined, bits, rtol=1e-9, atol=1e-9)
        for v, m in enumerate(stms.matrices):
            rows, cols = np.nonzero(m)
            if rows.size:
                assert v >= k_star
                assert int(np.maximum(rows, cols).max()) <= v
        heights = np.zeros(size)
        for m, sol in zip(range(size - 1, k_star - 1, -1), stms.rounds):
            assert abs(sol.carried().sum() - sol.volume) <= \
                1e-9 * max(sol.volume, 1.0)
            heights[m:] += sol.added
        final = heights[k_star:]
        assert np.all(np.diff(final) >= -1e-9 * np.abs(final[1:]) - 1e-9)
    elapsed = time.perf_counter() - start
    assert elapsed < 30.0
    print(f"PASS criterion 3: tapped water-fill suite, 1000 instances "
          f"({elapsed:.1f} s)")


def test_criterion_4_decomposition_suite():
    start = time.perf_counter()
    rng = np.random.default_rng(404)
    for trial in range(1000):
        size = int(rng.integers(2, 9))
        extra = int(rng.integers(1, 6))
        budget = size + extra
        n0 = float(rng.integers(1, 4))
        bits = rng.random((size, size)) * 10.0 ** rng.integers(1, 8)
        if trial % 3 == 0:
            bits = np.floor(bits)
        np.fill_diagonal(bits, 0.0)
        bottleneck = max_line_sum(bits)
        matrices = decompose(bits, budget, n0)
        assert len(matrices) <= budget
        if bottleneck == 0.0:
            assert matrices == []
            continue
        coeff = schedule_coefficient_bits(bottleneck, budget, size, n0)
        quotient = np.floor(n0 * bits / coeff)
        assert max_line_sum(quotient) <= extra
        covered = np.zeros_like(bits)
        for cm in matrices:
            pattern = cm.pattern
            assert pattern.sum(axis=0).max(initial=0) <= 1
            assert pattern.sum(axis=1).max(initial=0) <= 1
            covered += cm.coefficient_bits * pattern.astype(float)
        slack = covered - n0 * bits
        assert np.all(slack >= -1e-6 * max(coeff, 1.0))
        assert np.all(slack < coeff)
    elapsed = time.perf_counter() - start
    assert elapsed < 60.0
    print(f"PASS criterion 4: decomposition suite, 1000 instances "
          f"({elapsed:.1f} s)")


def test_criterion_5_waterfill_oracle_equivalence():
    start = time.perf_counter()
    rng = np.random.default_rng(505)
    for _ in range(10_000):
        k = int(rng.integers(1, 11))
        widths = rng.random(k) + 1e-3
        heights = rng.random(k) * 10.0 ** rng.integers(0, 4)
        volume = float(rng.random() * 10.0 ** rng.integers(0, 5))
        sol = water_fill(widths, heights, volume)
        # Bisection oracle on the level.
        lo = float(heights.min())
        hi = float(heights.max() + volume / widths.sum() + 1.0)
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if (widths * np.maximum(0.0, mid - heights)).sum() < volume:
                lo = mid
            else:
                hi = mid
        oracle = 0.5 * (lo + hi)
        assert abs(sol.level - oracle) <= 1e-9 * max(abs(oracle), 1.0)
    elapsed = time.perf_counter() - start
    assert elapsed < 10.0
    print(f"PASS criterion 5: water level matches bisection on 10^4 "
          f"instances ({elapsed:.1f} s)")


def test_criterion_6_gp_solver_sanity():
    from tsnopt.gp import GPProblem, Posynomial

    # Three instances with optima known from stationarity conditions.
    instances = [
        (GPProblem(names=("x",),
                   objective=Posynomial([1.0], [[1.0]], "obj"),
                   constraints=(Posynomial([3.7], [[-1.0]], "floor"),),
                   initial_point=np.array([10.0])), 3.7),
        (GPProblem(names=("x",),
                   objective=Posynomial([1.0, 1.0], [[1.0], [-1.0]], "obj"),
                   constraints=(), initial_point=np.array([4.0])), 2.0),
        (GPProblem(names=("x", "y"),
                   objective=Posynomial([1.0, 1.0],
                                        [[-1.0, -1.0], [0.0, 1.0]], "obj"),
                   constraints=(Posynomial([0.5], [[1.0, 0.0]], "cap"),),
                   initial_point=np.array([1.0, 1.0])), math.sqrt(2.0)),
    ]
    for problem, optimum in instances:
        result = solve_gp(problem)
        assert relative(result.objective, optimum) <= 1e-5

    # No random feasible perturbation improves the truncated objective.
    scenario = scenario_from_mapping({})
    traffic = gen_traffic(5, 1e4, 0)
    stms = tapped_water_fill(traffic, 0, _segment_widths(scenario, 0))
    problem = build_gp(scenario, traffic, stms.max_line_bits(), 0, 3)
    result = solve_gp(problem)
    f_col = problem.index("F")
    epigraph = problem.constraints[0]
    others = problem.constraints[1:]

    def energy(x):
        pinned = x.copy()
        pinned[f_col] = 1.0
        return epigraph.value(pinned)

    base = energy(result.x)
    rng = np.random.default_rng(606)
    improvements = 0
    for _ in range(1000):
        jitter = rng.normal(scale=1e-3, size=result.x.size)
        jitter[f_col] = 0.0
        candidate = result.x * np.exp(jitter)
        if any(c.value(candidate) > 1.0 + 1e-12 for c in others):
            continue
        if energy(candidate) < base * (1.0 - 1e-6):
            improvements += 1
    assert improvements == 0
    print("PASS criterion 6: KKT instances within 1e-5; no feasible "
          "perturbation improves the objective")


def test_criterion_7_scheme_dominance_over_nmax():
    start = time.perf_counter()
    worst_margin = math.inf
    for n_max in range(1, 21):
        e1 = scheme_efficiency(1, 0, n_max=n_max)
        e2 = scheme_efficiency(2, 0, n_max=n_max)
        e3 = scheme_efficiency(3, 0, n_max=n_max)
        assert e1 >= e2 * (1.0 - 1e-6), f"scheme 2 wins at n_max={n_max}"
        assert e1 >= e3 * (1.0 - 1e-6), f"scheme 3 wins at n_max={n_max}"
        worst_margin = min(worst_margin, e1 - max(e2, e3))
    elapsed = time.perf_counter() - start
    assert elapsed < 600.0
    print(f"PASS criterion 7: scheme 1 dominates across n_max 1..20 "
          f"(min margin {worst_margin:.3e} bits/J, {elapsed:.0f} s)")


SEEDS = (0, 1, 2)
BETA_GRID = (10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0, 45.0)
THETA_GRID = (2.5e2, 1e3, 4e3, 1e4, 2e4, 4e4)


def seeds_passing(check) -> int:
    return sum(1 for seed in SEEDS if check(seed))


def test_criterion_8a_scheme3_flat_in_nmax_and_beta():
    def flat_nmax(seed):
        effs = [scheme_efficiency(3, seed, n_max=n) for n in range(1, 21)]
        return (max(effs) - min(effs)) <= 1e-6 * max(effs)

    def flat_beta(seed):
        effs = [scheme_efficiency(3, seed, beta_max=b) for b in BETA_GRID]
        return (max(effs) - min(effs)) <= 1e-6 * max(effs)

    assert seeds_passing(flat_nmax) >= 2
    assert seeds_passing(flat_beta) >= 2
    print("PASS criterion 8a: scheme 3 flat across n_max and beta_max")


def test_criterion_8b_scheme1_rises_then_saturates_in_nmax():
    def saturating(seed):
        effs = [scheme_efficiency(1, seed, n_max=n) for n in range(1, 21)]
        peak = max(range(20), key=lambda k: effs[k])
        rises = non_decreasing(effs[: peak + 1])
        saturated = all(e >= effs[peak] * 0.98 for e in effs[peak:])
        return rises and saturated

    assert seeds_passing(saturating) >= 2
    print("PASS criterion 8b: scheme 1 non-decreasing then within 2% "
          "of its peak over n_max")


def test_criterion_8c_efficiency_decreases_with_beta_max():
    def decreasing(seed):
        ok = True
        for scheme in (1, 2):
            effs = [scheme_efficiency(scheme, seed, beta_max=b)
                    for b in BETA_GRID]
            ok = ok and non_increasing(effs)
        return ok

    assert seeds_passing(decreasing) >= 2
    print("PASS criterion 8c: schemes 1 and 2 non-increasing in beta_max")


def test_criterion_8d_efficiency_unimodal_in_theta():
    def peak_shape(seed):
        effs = [scheme_efficiency(1, seed, theta=t) for t in THETA_GRID]
        if any(math.isnan(e) for e in effs):
            return False
        return unimodal(effs)

    assert seeds_passing(peak_shape) >= 2
    print("PASS criterion 8d: efficiency rises to a peak then falls over "
          "the traffic-bound grid")


def test_criterion_8e_efficiency_decreases_with_constellation_size():
    def decreasing(seed):
        ok = True
        for scheme in (1, 2):
            effs = [scheme_efficiency(scheme, seed, size=s)
                    for s in (3, 4, 5, 6, 7)]
            ok = ok and non_increasing(effs)
        return ok

    assert seeds_passing(decreasing) >= 2
    print("PASS criterion 8e: schemes 1 and 2 non-increasing in "
          "constellation size")


def test_criterion_9_sweep_determinism(tmp_path):
    spec = ExperimentSpec(axis="n_max", values=(1.0, 2.0), schemes=(1, 3),
                          seed=7, reps=1, theta_bits=1e3)
    rows_a, meta_a = run_experiment(spec)
    rows_b, meta_b = run_experiment(spec)

    def stripped(rows, meta):
        text = format_rows(rows, meta, "csv")
        kept = []
        for line in text.splitlines():
            if line.startswith("#") or "," not in line:
                kept.append(line)
            else:
                kept.append(",".join(line.split(",")[:-1]))
        return "\n".join(kept)

    assert stripped(rows_a, meta_a) == stripped(rows_b, meta_b)
    # Every emitted feasible row passed the constraint check upstream; the
    # recorded laser averages must respect the cap.
    for row in rows_a:
        if row.feasible:
            assert row.m_bar <= 50.0
    print("PASS criterion 9: identical sweep bytes excluding wall time")
