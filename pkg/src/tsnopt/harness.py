"""Scenario ingestion, seeded traffic generation, and experiment sweeps.

Scenario files are flat ``key = value`` text with ``#`` comments and
comma-separated lists; every key has a default, so an empty file yields the
stock five-satellite deployment.  Sweep results are written atomically as
CSV or JSON with the run metadata in the header.
"""

import json
import math
import os
import tempfile
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .geometry import Scenario, ScenarioError
from .optimizer import Solution, run_scheme
from .waterfill import TrafficMatrix

__all__ = [
    "ConfigError",
    "ExperimentSpec",
    "ResultRow",
    "read_config",
    "scenario_from_mapping",
    "load_scenario",
    "gen_traffic",
    "run_experiment",
    "format_rows",
    "write_rows",
    "CSV_COLUMNS",
]

PRNG_ID = "numpy-pcg64"
DEFAULT_THETA_BITS = 1e4
AXES = ("n_max", "S", "theta", "beta_max", "none")
CSV_COLUMNS = ("axis_name", "axis_value", "scheme", "rep",
               "efficiency_bits_per_J", "n0", "m_bar", "alpha", "k_star",
               "feasible", "walltime_s")

_FLOAT_KEYS = (
    "altitude_km", "earth_radius_km", "kepler_mu_km3_s2",
    "balloon_height_min_km", "balloon_height_max_km",
    "elevation_min_deg", "elevation_max_deg",
    "bandwidth_ground_hz", "bandwidth_uplink_hz", "bandwidth_downlink_hz",
    "noise_psd_w_per_hz", "antenna_gain", "propagation_speed_km_s",
    "carrier_frequency_ghz", "isl_capacity_bps", "caching_power_w_per_bit",
    "computing_power_w_per_cps", "computing_load_cycles_per_bit",
    "computing_pool_cps", "laser_static_power_w_per_bps",
    "laser_dynamic_power_w_per_bps", "laser_launch_power_w",
    "alignment_delay_s", "max_routing_distance_km", "link_loss_const_db",
)
_INT_KEYS = ("num_satellites", "max_serving_periods", "max_lasers")
_LIST_KEYS = ("balloon_heights_km", "elevation_angles_deg")
KNOWN_KEYS = frozenset(_FLOAT_KEYS + _INT_KEYS + _LIST_KEYS)


class ConfigError(ValueError):
    """Raised for unparsable or inconsistent scenario configuration."""


def read_config(path: str) -> dict:
    """Parse a flat key=value scenario file into a raw string mapping."""
    mapping = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in KNOWN_KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown key '{key}'")
            mapping[key] = value
    return mapping


def _coerce_float(mapping, key, default=None):
    if key not in mapping:
        return default
    try:
        return float(mapping[key])
    except (TypeError, ValueError):
        raise ConfigError(f"key '{key}': cannot parse '{mapping[key]}' as a number")


def _coerce_int(mapping, key, default=None):
    if key not in mapping:
        return default
    try:
        return int(float(mapping[key]))
    except (TypeError, ValueError):
        raise ConfigError(f"key '{key}': cannot parse '{mapping[key]}' as an integer")


def _coerce_list(mapping, key):
    if key not in mapping:
        return None
    value = mapping[key]
    if isinstance(value, (list, tuple)):
        items = value
    else:
        items = [v for v in str(value).split(",") if v.strip()]
    try:
        return [float(v) for v in items]
    except (TypeError, ValueError):
        raise ConfigError(f"key '{key}': cannot parse '{value}' as a number list")


def scenario_from_mapping(mapping: dict) -> Scenario:
    """Build a scenario from config values layered over the stock defaults.

    Balloon heights default to an even spread between the min and max
    height; elevations spread the other way so the highest balloon gets the
    smallest minimum elevation.  Explicit lists override the spreading.
    """
    unknown = set(mapping) - KNOWN_KEYS
    if unknown:
        raise ConfigError(f"unknown key '{sorted(unknown)[0]}'")
    s = _coerce_int(mapping, "num_satellites", 5)
    if s < 2:
        raise ConfigError(f"key 'num_satellites': need at least 2, got {s}")
    altitude = _coerce_float(mapping, "altitude_km", 550.0)

    heights = _coerce_list(mapping, "balloon_heights_km")
    if heights is None:
        l_min = _coerce_float(mapping, "balloon_height_min_km", 20.0)
        l_max = _coerce_float(mapping, "balloon_height_max_km", 75.0)
        if l_min <= 0:
            raise ConfigError(f"key 'balloon_height_min_km': must be positive, got {l_min}")
        if l_max >= altitude:
            raise ConfigError(
                f"key 'balloon_height_max_km': {l_max} must stay below altitude_km={altitude}")
        if l_max < l_min:
            raise ConfigError("key 'balloon_height_max_km': below balloon_height_min_km")
        heights = list(np.linspace(l_min, l_max, s))
    elif len(heights) != s:
        raise ConfigError(
            f"key 'balloon_heights_km': expected {s} entries, got {len(heights)}")

    elevations = _coerce_list(mapping, "elevation_angles_deg")
    if elevations is None:
        b_min = _coerce_float(mapping, "elevation_min_deg", 5.0)
        b_max = _coerce_float(mapping, "elevation_max_deg", 45.0)
        if not 0 < b_min < 90 or not 0 < b_max < 90:
            raise ConfigError("key 'elevation_min_deg'/'elevation_max_deg': "
                              "must lie in (0, 90)")
        if b_max < b_min:
            raise ConfigError("key 'elevation_max_deg': below elevation_min_deg")
        # Lower balloons get larger minimum elevations.
        elevations = list(np.linspace(b_max, b_min, s))
    elif len(elevations) != s:
        raise ConfigError(
            f"key 'elevation_angles_deg': expected {s} entries, got {len(elevations)}")

    kwargs = {}
    for key in _FLOAT_KEYS:
        if key in ("balloon_height_min_km", "balloon_height_max_km",
                   "elevation_min_deg", "elevation_max_deg"):
            continue
        value = _coerce_float(mapping, key)
        if value is not None:
            kwargs[key] = value
    for key in ("max_serving_periods", "max_lasers"):
        value = _coerce_int(mapping, key)
        if value is not None:
            kwargs[key] = value
    kwargs["altitude_km"] = altitude
    try:
        return Scenario(
            balloon_heights_km=tuple(heights),
            min_elevations_rad=tuple(math.radians(b) for b in elevations),
            **kwargs)
    except ScenarioError as exc:
        raise ConfigError(str(exc)) from exc


def load_scenario(path: str) -> Scenario:
    """Read a scenario file and build the scenario over Table-style defaults."""
    return scenario_from_mapping(read_config(path))


def gen_traffic(s: int, theta_bits: float, seed: int) -> TrafficMatrix:
    """Seeded uniform traffic: off-diagonal entries i.i.d. on [0, theta].

    Entries are drawn row-major, diagonal skipped, from a PCG64 generator
    (the ``numpy-pcg64`` stream recorded in result metadata); identical
    (seed, s, theta) reproduce the matrix bit for bit.
    """
    if s < 2:
        raise ConfigError(f"traffic needs at least 2 satellites, got {s}")
    if theta_bits < 0:
        raise ConfigError(f"theta_bits must be non-negative, got {theta_bits}")
    rng = np.random.Generator(np.random.PCG64(seed))
    bits = np.zeros((s, s))
    for i in range(s):
        for j in range(s):
            if i != j:
                bits[i, j] = theta_bits * rng.random()
    return TrafficMatrix(bits)


@dataclass(frozen=True)
class ExperimentSpec:
    """One sweep: an axis, its values, the schemes, and the seeding."""

    scenario: dict = field(default_factory=dict)
    axis: str = "none"
    values: tuple[float, ...] = ()
    schemes: tuple[int, ...] = (1, 2, 3)
    seed: int = 0
    reps: int = 1
    theta_bits: float = DEFAULT_THETA_BITS

    def __post_init__(self):
        if self.axis not in AXES:
            raise ConfigError(f"axis must be one of {AXES}, got '{self.axis}'")
        if self.axis == "none":
            if self.values:
                raise ConfigError("axis 'none' takes no values")
        else:
            if not self.values:
                raise ConfigError(f"axis '{self.axis}' needs at least one value")
            if any(v <= 0 for v in self.values):
                raise ConfigError("axis values must be positive")
            if list(self.values) != sorted(self.values):
                raise ConfigError("axis values must be sorted ascending")
        if not self.schemes or any(v not in (1, 2, 3) for v in self.schemes):
            raise ConfigError("schemes must be a non-empty subset of {1, 2, 3}")
        if self.reps < 1:
            raise ConfigError(f"reps must be >= 1, got {self.reps}")
        if self.theta_bits < 0:
            raise ConfigError("theta_bits must be non-negative")


@dataclass(frozen=True)
class ResultRow:
    """One sweep cell; optimization figures are None when infeasible."""

    axis_name: str
    axis_value: float | None
    scheme: int
    rep: int
    efficiency_bits_per_J: float | None
    n0: float | None
    m_bar: float | None
    alpha: float | None
    k_star: int | None  # 1-based satellite numbering in outputs
    feasible: bool
    walltime_s: float

    def to_dict(self) -> dict:
        return {
            "axis_name": self.axis_name,
            "axis_value": self.axis_value,
            "scheme": self.scheme,
            "rep": self.rep,
            "efficiency_bits_per_J": self.efficiency_bits_per_J,
            "n0": self.n0,
            "m_bar": self.m_bar,
            "alpha": self.alpha,
            "k_star": self.k_star,
            "feasible": self.feasible,
            "walltime_s": self.walltime_s,
        }


def _cell_inputs(spec: ExperimentSpec, axis_value):
    mapping = dict(spec.scenario)
    theta = spec.theta_bits
    if spec.axis == "n_max":
        mapping["max_serving_periods"] = int(axis_value)
    elif spec.axis == "S":
        mapping["num_satellites"] = int(axis_value)
    elif spec.axis == "beta_max":
        mapping["elevation_max_deg"] = axis_value
    elif spec.axis == "theta":
        theta = float(axis_value)
    return scenario_from_mapping(mapping), theta


def run_experiment(spec: ExperimentSpec, out_path: str | None = None,
                   out_format: str = "csv") -> tuple[list[ResultRow], dict]:
    """Run every (axis value, scheme, replication) cell of the sweep.

    Cells are independent; rows come back ordered by (axis value, scheme,
    replication) and infeasible cells are recorded rather than fatal.
    Traffic for replication r uses ``seed + r``.  When ``out_path`` is
    given the rows are also written atomically in the requested format.
    """
    values = spec.values if spec.axis != "none" else (None,)
    rows = []
    for axis_value in values:
        scenario, theta = _cell_inputs(spec, axis_value)
        for scheme in spec.schemes:
            for rep in range(spec.reps):
                traffic = gen_traffic(scenario.num_satellites, theta,
                                      spec.seed + rep)
                start = time.perf_counter()
                solution = run_scheme(scenario, traffic, scheme)
                wall = time.perf_counter() - start
                rows.append(_row_from_solution(
                    spec.axis, axis_value, scheme, rep, solution, wall))
    metadata = {
        "artifact_version": __version__,
        "prng": PRNG_ID,
        "seed": spec.seed,
        "axis": spec.axis,
        "schemes": ",".join(str(v) for v in spec.schemes),
        "reps": spec.reps,
        "theta_bits": spec.theta_bits,
    }
    if out_path is not None:
        write_rows(rows, metadata, out_path, out_format)
    return rows, metadata


def _row_from_solution(axis, axis_value, scheme, rep, solution: Solution,
                       walltime: float) -> ResultRow:
    if solution.feasible:
        return ResultRow(
            axis_name=axis, axis_value=axis_value, scheme=scheme, rep=rep,
            efficiency_bits_per_J=solution.efficiency,
            n0=solution.vars.n0, m_bar=solution.plan.avg_lasers,
            alpha=solution.vars.alpha, k_star=solution.vars.k_star + 1,
            feasible=True, walltime_s=walltime)
    return ResultRow(
        axis_name=axis, axis_value=axis_value, scheme=scheme, rep=rep,
        efficiency_bits_per_J=None, n0=None, m_bar=None, alpha=None,
        k_star=None, feasible=False, walltime_s=walltime)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def format_rows(rows, metadata: dict, out_format: str = "csv") -> str:
    """Render sweep rows (ResultRow objects or plain dicts) for output."""
    records = [row.to_dict() if hasattr(row, "to_dict") else dict(row)
               for row in rows]
    if out_format == "csv":
        lines = [f"# {key}={_fmt(metadata[key])}" for key in sorted(metadata)]
        lines.append(",".join(CSV_COLUMNS))
        for record in records:
            lines.append(",".join(_fmt(record[col]) for col in CSV_COLUMNS))
        return "\n".join(lines) + "\n"
    if out_format == "json":
        return json.dumps({"metadata": metadata, "rows": records},
                          sort_keys=True, indent=2) + "\n"
    raise ConfigError(f"format must be 'csv' or 'json', got '{out_format}'")


def write_rows(rows, metadata: dict, path: str, out_format: str = "csv") -> None:
    """Atomically write sweep rows with their metadata header."""
    payload = format_rows(rows, metadata, out_format)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tsnopt-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
