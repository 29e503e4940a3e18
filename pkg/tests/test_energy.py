import numpy as np
import pytest

from tsnopt.energy import (DecisionVars, EnergyError, arrival_rates,
                           check_constraints, energy_breakdown)
from tsnopt.geometry import Scenario, segment_layout
from tsnopt.schedule import build_plan
from tsnopt.waterfill import TrafficMatrix, tapped_water_fill


def stock_scenario(**overrides) -> Scenario:
    kwargs = dict(
        balloon_heights_km=tuple(np.linspace(20, 75, 5)),
        min_elevations_rad=tuple(np.deg2rad(np.linspace(45, 5, 5))),
    )
    kwargs.update(overrides)
    return Scenario(**kwargs)


def make_candidate(scenario, traffic, n0=2.0, alpha=0.4, k_star=0,
                   counts_extra=3.0):
    s = scenario.num_satellites
    layout = segment_layout(scenario.time_windows_s, k_star, alpha)
    widths = [0.0] * k_star + list(layout.tau_s[k_star:])
    stms = tapped_water_fill(traffic, k_star, widths)
    line_bits = stms.max_line_bits()
    counts = [s + counts_extra if line_bits[v] > 0 else 0.0 for v in range(s)]
    plan = build_plan(line_bits, layout, scenario.seconds_per_bit,
                      scenario.schedule_overhead_s, n0, counts)
    dv = DecisionVars(
        n0=n0, alpha=alpha, k_star=k_star,
        t_ground=tuple([50.0] * s), t_uplink=tuple([20.0] * s),
        t_downlink=tuple([20.0] * s),
        extra_schedules=tuple(max(c - s, 0.0) for c in counts))
    return dv, plan, stms


def uniform_traffic(size, bits):
    a = np.full((size, size), float(bits))
    np.fill_diagonal(a, 0.0)
    return TrafficMatrix(a)


class TestArrivalRates:
    def test_zero_traffic(self):
        lam, mu = arrival_rates(TrafficMatrix(np.zeros((3, 3))), 100.0)
        assert np.all(lam == 0.0) and np.all(mu == 0.0)

    def test_symmetric_traffic(self):
        a = np.array([[0.0, 2.0, 3.0], [2.0, 0.0, 5.0], [3.0, 5.0, 0.0]])
        lam, mu = arrival_rates(TrafficMatrix(a), 10.0)
        assert lam == pytest.approx(mu)

    def test_hand_computed(self):
        a = np.array([[0.0, 1.0, 2.0], [3.0, 0.0, 4.0], [5.0, 6.0, 0.0]])
        lam, mu = arrival_rates(TrafficMatrix(a), 2.0)
        assert lam == pytest.approx([1.5, 3.5, 5.5])
        assert mu == pytest.approx([4.0, 3.5, 3.0])
        assert lam.sum() == pytest.approx(mu.sum(), rel=1e-12)


class TestEnergyBreakdown:
    def test_zero_traffic_leaves_computing_only(self):
        sc = stock_scenario()
        traffic = TrafficMatrix(np.zeros((5, 5)))
        dv, plan, _ = make_candidate(sc, traffic)
        bd = energy_breakdown(sc, traffic, dv, plan)
        expected = (sc.computing_power_w_per_cps
                    * sc.computing_load_cycles_per_bit * 5)
        assert bd.computing == pytest.approx(expected, rel=1e-12)
        assert bd.total == pytest.approx(expected, rel=1e-12)
        assert bd.efficiency == 0.0

    def test_caching_per_bit_is_constant(self):
        sc = stock_scenario()
        for n0, alpha, bits in [(1.0, 0.3, 1e3), (4.0, 0.6, 1e5)]:
            traffic = uniform_traffic(5, bits)
            dv, plan, _ = make_candidate(sc, traffic, n0=n0, alpha=alpha)
            bd = energy_breakdown(sc, traffic, dv, plan)
            assert bd.caching / bd.throughput == pytest.approx(
                sc.caching_power_w_per_bit, rel=1e-12)

    def test_total_is_component_sum(self):
        sc = stock_scenario()
        traffic = uniform_traffic(5, 2e4)
        dv, plan, _ = make_candidate(sc, traffic)
        bd = energy_breakdown(sc, traffic, dv, plan)
        parts = (bd.caching + bd.computing + bd.ground_tx + bd.balloon_tx
                 + bd.satellite_tx + bd.laser_static + bd.laser_dynamic
                 + bd.laser_launch)
        assert bd.total == pytest.approx(parts, rel=1e-12)
        assert bd.efficiency == pytest.approx(bd.throughput / bd.total,
                                              rel=1e-12)
        assert all(v >= 0 for v in bd.to_dict().values())

    def test_term_by_term_oracle(self):
        # Re-derive every component from the closed forms at a fixed point.
        sc = stock_scenario()
        traffic = uniform_traffic(5, 1e4)
        n0, alpha = 3.0, 0.5
        dv, plan, _ = make_candidate(sc, traffic, n0=n0, alpha=alpha)
        bd = energy_breakdown(sc, traffic, dv, plan)

        period = sc.orbit_period_s
        lam = traffic.row_sums() / period
        mu = traffic.col_sums() / period
        throughput = n0 * period * lam.sum()
        assert bd.throughput == pytest.approx(throughput, rel=1e-12)
        assert bd.caching == pytest.approx(
            sc.caching_power_w_per_bit * throughput, rel=1e-12)

        scale = 10.0 ** 11.44 * sc.noise_psd_w_per_hz / sc.antenna_gain
        ground = sum(
            sc.bandwidth_ground_hz * scale * sc.balloon_heights_km[i] ** 2
            * (2.0 ** (n0 * period * lam[i]
                       / (sc.bandwidth_ground_hz * dv.t_ground[i])) - 1.0)
            * dv.t_ground[i]
            for i in range(5))
        assert bd.ground_tx == pytest.approx(ground, rel=1e-12)
        satellite = sum(
            sc.bandwidth_downlink_hz * scale
            * (sc.altitude_km - sc.balloon_heights_km[i]) ** 2
            * (2.0 ** (n0 * period * mu[i]
                       / (sc.bandwidth_downlink_hz * dv.t_downlink[i])) - 1.0)
            * dv.t_downlink[i]
            for i in range(5))
        assert bd.satellite_tx == pytest.approx(satellite, rel=1e-12)

        window = sc.time_windows_s[0]
        relay = alpha * window
        sched_time = sum(seg.num_schedules * seg.per_schedule_s
                         for seg in plan.segments)
        static = (n0 * traffic.total_bits * sc.laser_static_power_w_per_bps
                  * 5 * window * sched_time / relay ** 2)
        assert bd.laser_static == pytest.approx(static, rel=1e-12)
        dynamic = (sc.isl_capacity_bps * sc.laser_dynamic_power_w_per_bps
                   * 5 * sched_time)
        assert bd.laser_dynamic == pytest.approx(dynamic, rel=1e-12)
        launch = sum(sc.laser_launch_power_w * seg.num_schedules ** 2 / relay
                     * seg.per_schedule_s * 5 * sc.alignment_delay_s
                     for seg in plan.segments)
        assert bd.laser_launch == pytest.approx(launch, rel=1e-12)

    def test_transmitted_data_scales_linearly_with_n0(self):
        sc = stock_scenario()
        traffic = uniform_traffic(5, 1e4)
        dv1, plan1, _ = make_candidate(sc, traffic, n0=2.0)
        dv2, plan2, _ = make_candidate(sc, traffic, n0=4.0)
        bd1 = energy_breakdown(sc, traffic, dv1, plan1)
        bd2 = energy_breakdown(sc, traffic, dv2, plan2)
        assert bd2.throughput == pytest.approx(2.0 * bd1.throughput, rel=1e-12)
        assert bd2.caching == pytest.approx(2.0 * bd1.caching, rel=1e-12)

    def test_rejects_plan_with_other_n0(self):
        sc = stock_scenario()
        traffic = uniform_traffic(5, 1e4)
        dv, plan, _ = make_candidate(sc, traffic, n0=2.0)
        bad = DecisionVars(n0=3.0, alpha=dv.alpha, k_star=dv.k_star,
                           t_ground=dv.t_ground, t_uplink=dv.t_uplink,
                           t_downlink=dv.t_downlink,
                           extra_schedules=dv.extra_schedules)
        with pytest.raises(EnergyError):
            energy_breakdown(sc, traffic, bad, plan)


class TestCheckConstraints:
    def test_relay_share_near_one_is_infeasible(self):
        sc = stock_scenario()
        traffic = uniform_traffic(5, 1e3)
        dv, plan, _ = make_candidate(sc, traffic, alpha=0.999)
        report = check_constraints(sc, traffic, dv, plan)
        in_window = {k: v for k, v in report.slacks if k.startswith("in_window")}
        assert min(in_window.values()) < 0
        assert not report.feasible()

    def test_small_times_zero_traffic_feasible(self):
        sc = stock_scenario()
        traffic = TrafficMatrix(np.zeros((5, 5)))
        s = 5
        layout = segment_layout(sc.time_windows_s, 0, 0.1)
        plan = build_plan(np.zeros(5), layout, sc.seconds_per_bit,
                          sc.schedule_overhead_s, 1.0, [0.0] * s)
        dv = DecisionVars(n0=1.0, alpha=0.1, k_star=0,
                          t_ground=(1e-3,) * s, t_uplink=(1e-3,) * s,
                          t_downlink=(1e-3,) * s,
                          extra_schedules=(0.0,) * s)
        report = check_constraints(sc, traffic, dv, plan)
        assert report.feasible()
        assert report.min_slack >= 0.0

    def test_exact_schedule_fit_boundary_is_feasible(self):
        # Construct a segment whose per-schedule time equals its width.
        # A negligible computing load keeps the pre-window budget slack so
        # only the schedule-fit boundary is exercised.
        sc = stock_scenario(computing_load_cycles_per_bit=1e-3)
        s = 5
        alpha = 0.5
        layout = segment_layout(sc.time_windows_s, 0, alpha)
        tau_last = layout.tau_s[-1]
        width = alpha * tau_last
        count = float(s + 1)
        # Pick the bottleneck so n0*spb*bits/(count-s) + overhead == width.
        bits = (width - sc.schedule_overhead_s) * (count - s) \
            / sc.seconds_per_bit
        a = np.zeros((s, s))
        a[s - 1, 0] = bits
        traffic = TrafficMatrix(a)
        stms = tapped_water_fill(traffic, 0, layout.tau_s)
        counts = [count if v == s - 1 else 0.0 for v in range(s)]
        plan = build_plan(stms.max_line_bits(), layout, sc.seconds_per_bit,
                          sc.schedule_overhead_s, 1.0, counts)
        dv = DecisionVars(n0=1.0, alpha=alpha, k_star=0,
                          t_ground=(1.0,) * s, t_uplink=(1.0,) * s,
                          t_downlink=(1.0,) * s,
                          extra_schedules=tuple(max(c - s, 0.0) for c in counts))
        report = check_constraints(sc, traffic, dv, plan)
        fit = dict(report.slacks)[f"schedule_fit[{s - 1}]"]
        assert fit == pytest.approx(0.0, abs=1e-9)
        assert report.feasible()

    def test_objective_matches_scaled_inverse_efficiency(self):
        # The scaled program objective and 1/efficiency pick the same
        # winner over a grid of candidate points.
        sc = stock_scenario()
        traffic = uniform_traffic(5, 1e4)
        candidates = []
        for n0 in (1.0, 2.0, 4.0):
            for alpha in (0.3, 0.5):
                dv, plan, _ = make_candidate(sc, traffic, n0=n0, alpha=alpha)
                bd = energy_breakdown(sc, traffic, dv, plan)
                scale = (10.0 ** 11.44 * sc.noise_psd_w_per_hz
                         / (sc.orbit_period_s
                            * traffic.row_sums().sum() / sc.orbit_period_s))
                objective = (1.0 / bd.efficiency
                             - sc.caching_power_w_per_bit) / scale
                candidates.append((objective, 1.0 / bd.efficiency))
        by_objective = min(range(len(candidates)),
                           key=lambda k: candidates[k][0])
        by_inverse_eff = min(range(len(candidates)),
                             key=lambda k: candidates[k][1])
        assert by_objective == by_inverse_eff
