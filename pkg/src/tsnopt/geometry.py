"""Orbital and link geometry for a balloon-relayed LEO constellation.

Distances are kilometers, times seconds, angles radians (degrees only at
the config boundary), powers watts, bandwidths Hz.
"""

import math
from dataclasses import dataclass, field

__all__ = [
    "ScenarioError",
    "Scenario",
    "SegmentLayout",
    "orbital_period",
    "time_window",
    "segment_layout",
    "path_loss_gain",
    "transmit_powers",
]

EARTH_RADIUS_KM = 6371.0
KEPLER_MU_KM3_S2 = 398601.58
BOLTZMANN_W_PER_HZ_K = 1.380649e-23
NOISE_TEMPERATURE_K = 260.0

# Lumped link-budget factor of the closed-form transmit-power expressions
# (km-based path loss folded together with the noise bandwidth scaling).
TX_PATH_SCALE = 10.0 ** 11.44


class ScenarioError(ValueError):
    """Raised when scenario parameters violate their physical constraints."""


def orbital_period(altitude_km: float,
                   earth_radius_km: float = EARTH_RADIUS_KM,
                   kepler_mu_km3_s2: float = KEPLER_MU_KM3_S2) -> float:
    """Circular orbital period in seconds for a satellite at the given altitude."""
    if not math.isfinite(altitude_km) or altitude_km < 0:
        raise ScenarioError(f"altitude_km must be finite and >= 0, got {altitude_km}")
    if earth_radius_km <= 0 or kepler_mu_km3_s2 <= 0:
        raise ScenarioError("earth_radius_km and kepler_mu_km3_s2 must be positive")
    r = altitude_km + earth_radius_km
    return 2.0 * math.pi * math.sqrt(r ** 3 / kepler_mu_km3_s2)


def time_window(balloon_height_km: float,
                min_elevation_rad: float,
                altitude_km: float,
                earth_radius_km: float = EARTH_RADIUS_KM,
                kepler_mu_km3_s2: float = KEPLER_MU_KM3_S2) -> float:
    """Per-orbit contact time between a balloon and its satellite, seconds.

    The window is set by the geocentric half-angle at which the satellite
    rises above the balloon's minimum elevation.  Zero when the elevation
    is grazing (pi/2) or the balloon sits at the satellite altitude.
    """
    if not 0.0 <= balloon_height_km <= altitude_km:
        raise ScenarioError(
            f"balloon_height_km must lie in [0, altitude_km], got {balloon_height_km}")
    if not 0.0 <= min_elevation_rad < math.pi / 2 + 1e-12:
        raise ScenarioError(
            f"min_elevation_rad must lie in [0, pi/2], got {min_elevation_rad}")
    ratio = (earth_radius_km + balloon_height_km) / (altitude_km + earth_radius_km)
    arg = ratio * math.cos(min_elevation_rad)
    if arg > 1.0 + 1e-12:
        raise ScenarioError(f"invalid geometry: arccos argument {arg} exceeds 1")
    arg = min(arg, 1.0)
    half_angle = math.acos(arg) - min_elevation_rad
    window = 2.0 * half_angle * math.sqrt(
        (altitude_km + earth_radius_km) ** 3 / kepler_mu_km3_s2)
    return max(window, 0.0)


def path_loss_gain(distance_km: float, frequency_ghz: float) -> tuple[float, float]:
    """Log-distance path loss (dB) and the linear channel power gain.

    loss = 92.44 + 20 log10(d_km) + 20 log10(f_GHz); gain = 10^(-loss/10).
    """
    if distance_km <= 0:
        raise ScenarioError(f"distance_km must be positive, got {distance_km}")
    if frequency_ghz <= 0:
        raise ScenarioError(f"frequency_ghz must be positive, got {frequency_ghz}")
    loss_db = 92.44 + 20.0 * math.log10(distance_km) + 20.0 * math.log10(frequency_ghz)
    return loss_db, 10.0 ** (-loss_db / 10.0)


@dataclass(frozen=True)
class Scenario:
    """Physical and system parameters of one constellation deployment.

    Balloons are re-indexed on construction so that satellite 0 has the
    longest contact window; every downstream formula assumes that ordering.
    ``time_windows_s`` is therefore non-increasing and stays paired with
    ``balloon_heights_km`` / ``min_elevations_rad``.
    """

    balloon_heights_km: tuple[float, ...]
    min_elevations_rad: tuple[float, ...]
    altitude_km: float = 550.0
    earth_radius_km: float = EARTH_RADIUS_KM
    kepler_mu_km3_s2: float = KEPLER_MU_KM3_S2
    bandwidth_ground_hz: float = 1e8      # ground -> balloon
    bandwidth_uplink_hz: float = 1e8      # balloon -> satellite
    bandwidth_downlink_hz: float = 1e8    # satellite -> balloon
    noise_psd_w_per_hz: float = BOLTZMANN_W_PER_HZ_K * NOISE_TEMPERATURE_K
    antenna_gain: float = 10.0 ** 1.5
    propagation_speed_km_s: float = 3e5
    carrier_frequency_ghz: float = 3.0
    isl_capacity_bps: float = 1e9
    caching_power_w_per_bit: float = 1e-10
    computing_power_w_per_cps: float = 1e-6
    computing_load_cycles_per_bit: float = 1e10
    computing_pool_cps: float = 1e12
    laser_static_power_w_per_bps: float = 1e-15
    laser_dynamic_power_w_per_bps: float = 1e-15
    laser_launch_power_w: float = 1e-3
    alignment_delay_s: float = 1.0
    max_routing_distance_km: float = 0.0  # 0 -> half orbit circumference
    max_serving_periods: int = 20
    max_lasers: int = 50
    # Constant (dB) inside the per-link channel gain.  The log-distance
    # model at 3 GHz gives ~101.98 dB; the closed-form power expressions
    # bake in their own 114.4 dB lump.  Kept configurable because the two
    # cannot be reconciled.
    link_loss_const_db: float = 106.3
    orbit_period_s: float = field(init=False)
    time_windows_s: tuple[float, ...] = field(init=False)

    def __post_init__(self):
        n = len(self.balloon_heights_km)
        if n < 1:
            raise ScenarioError("at least one balloon is required")
        if len(self.min_elevations_rad) != n:
            raise ScenarioError(
                f"balloon_heights_km has {n} entries but min_elevations_rad "
                f"has {len(self.min_elevations_rad)}")
        for name in ("bandwidth_ground_hz", "bandwidth_uplink_hz",
                     "bandwidth_downlink_hz", "noise_psd_w_per_hz",
                     "antenna_gain", "propagation_speed_km_s",
                     "carrier_frequency_ghz", "isl_capacity_bps",
                     "caching_power_w_per_bit", "computing_power_w_per_cps",
                     "computing_load_cycles_per_bit", "computing_pool_cps",
                     "laser_static_power_w_per_bps",
                     "laser_dynamic_power_w_per_bps", "laser_launch_power_w"):
            if getattr(self, name) <= 0:
                raise ScenarioError(f"{name} must be positive, got {getattr(self, name)}")
        if self.alignment_delay_s < 0:
            raise ScenarioError("alignment_delay_s must be >= 0")
        if self.max_serving_periods < 1:
            raise ScenarioError("max_serving_periods must be >= 1")
        if self.max_lasers < 1:
            raise ScenarioError("max_lasers must be >= 1")
        for l in self.balloon_heights_km:
            if not 0.0 < l < self.altitude_km:
                raise ScenarioError(
                    f"balloon_heights_km entries must lie in (0, altitude_km), got {l}")
        for b in self.min_elevations_rad:
            if not 0.0 < b < math.pi / 2:
                raise ScenarioError(
                    f"min_elevations_rad entries must lie in (0, pi/2), got {b}")

        period = orbital_period(self.altitude_km, self.earth_radius_km,
                                self.kepler_mu_km3_s2)
        windows = [time_window(l, b, self.altitude_km, self.earth_radius_km,
                               self.kepler_mu_km3_s2)
                   for l, b in zip(self.balloon_heights_km, self.min_elevations_rad)]
        order = sorted(range(n), key=lambda i: -windows[i])
        object.__setattr__(self, "balloon_heights_km",
                           tuple(self.balloon_heights_km[i] for i in order))
        object.__setattr__(self, "min_elevations_rad",
                           tuple(self.min_elevations_rad[i] for i in order))
        object.__setattr__(self, "orbit_period_s", period)
        object.__setattr__(self, "time_windows_s",
                           tuple(windows[i] for i in order))
        if self.max_routing_distance_km <= 0:
            object.__setattr__(
                self, "max_routing_distance_km",
                math.pi * (self.altitude_km + self.earth_radius_km))

    @property
    def num_satellites(self) -> int:
        return len(self.balloon_heights_km)

    @property
    def seconds_per_bit(self) -> float:
        """Inverse of the inter-satellite link capacity."""
        return 1.0 / self.isl_capacity_bps

    @property
    def routing_delay_s(self) -> float:
        """Worst-case propagation time across the constellation."""
        return self.max_routing_distance_km / self.propagation_speed_km_s

    @property
    def schedule_overhead_s(self) -> float:
        """Fixed overhead before each schedule: antenna alignment + routing."""
        return self.alignment_delay_s + self.routing_delay_s

    def link_gain(self, distance_km: float) -> float:
        """Channel power gain using the configured per-link dB constant."""
        if distance_km <= 0:
            raise ScenarioError(f"distance_km must be positive, got {distance_km}")
        loss_db = self.link_loss_const_db + 20.0 * math.log10(distance_km)
        return 10.0 ** (-loss_db / 10.0)


@dataclass(frozen=True)
class SegmentLayout:
    """Time segments carved out of the nested contact windows.

    ``tau_s[v]`` is the unscaled width of segment v (difference of adjacent
    windows, last window for the final segment).  ``widths_s`` carries the
    usable width alpha*tau for segments >= k_star and 0 before it, which is
    exactly the width vector the tapped water-filling pass consumes.
    """

    k_star: int
    alpha: float
    tau_s: tuple[float, ...]
    widths_s: tuple[float, ...]

    @property
    def relay_budget_s(self) -> float:
        return sum(self.widths_s)


def segment_layout(windows_s, k_star: int, alpha: float) -> SegmentLayout:
    """Build the segment layout for relaying in segments k_star..S-1.

    ``windows_s`` must be sorted non-increasing; ``k_star`` is a 0-based
    segment index; ``0 < alpha < 1`` scales every segment width.
    """
    windows = list(windows_s)
    n = len(windows)
    if n == 0:
        raise ScenarioError("windows_s must be non-empty")
    for a, b in zip(windows, windows[1:]):
        if b > a + 1e-9 * max(abs(a), 1.0):
            raise ScenarioError("windows_s must be sorted in non-increasing order")
    if not 0 <= k_star < n:
        raise ScenarioError(f"k_star must lie in [0, {n - 1}], got {k_star}")
    if not 0.0 < alpha < 1.0:
        raise ScenarioError(f"alpha must lie in (0, 1), got {alpha}")
    tau = [max(windows[v] - windows[v + 1], 0.0) for v in range(n - 1)]
    tau.append(windows[-1])
    widths = [alpha * tau[v] if v >= k_star else 0.0 for v in range(n)]
    return SegmentLayout(k_star=k_star, alpha=alpha,
                         tau_s=tuple(tau), widths_s=tuple(widths))


def _link_power(bandwidth_hz: float, distance_km: float, data_bits: float,
                duration_s: float, noise_psd: float, antenna_gain: float) -> float:
    # P = B sigma^2 d^2 10^11.44 (2^(bits/(B T)) - 1) / G_T
    exponent = data_bits / (bandwidth_hz * duration_s)
    if exponent > 1000.0:  # beyond any float's dynamic range: hopeless link
        return math.inf
    return (bandwidth_hz * noise_psd * distance_km ** 2 * TX_PATH_SCALE
            * (2.0 ** exponent - 1.0) / antenna_gain)


def transmit_powers(scenario: Scenario, i: int, n0: float,
                    t_ground_s: float, t_uplink_s: float, t_downlink_s: float,
                    arrival_rate_bps: float, departure_rate_bps: float
                    ) -> tuple[float, float, float]:
    """Closed-form transmission powers (W) for satellite i's three hops.

    Ground->balloon and balloon->satellite move ``n0 * T_orbit * arrival``
    bits, satellite->balloon moves ``n0 * T_orbit * departure`` bits, each
    within its transmission time.
    """
    if min(t_ground_s, t_uplink_s, t_downlink_s) <= 0:
        raise ScenarioError("transmission times must be positive")
    if arrival_rate_bps < 0 or departure_rate_bps < 0:
        raise ScenarioError("traffic rates must be non-negative")
    if n0 < 1:
        raise ScenarioError(f"n0 must be >= 1, got {n0}")
    l_i = scenario.balloon_heights_km[i]
    up_down_km = scenario.altitude_km - l_i
    in_bits = n0 * scenario.orbit_period_s * arrival_rate_bps
    out_bits = n0 * scenario.orbit_period_s * departure_rate_bps
    sigma2 = scenario.noise_psd_w_per_hz
    gain = scenario.antenna_gain
    p_ground = _link_power(scenario.bandwidth_ground_hz, l_i, in_bits,
                           t_ground_s, sigma2, gain)
    p_uplink = _link_power(scenario.bandwidth_uplink_hz, up_down_km, in_bits,
                           t_uplink_s, sigma2, gain)
    p_downlink = _link_power(scenario.bandwidth_downlink_hz, up_down_km, out_bits,
                             t_downlink_s, sigma2, gain)
    return p_ground, p_uplink, p_downlink
