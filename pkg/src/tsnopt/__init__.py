"""Simulation and optimization engine for balloon-relayed satellite networks."""

__version__ = "0.1.0"

from .geometry import Scenario, SegmentLayout, orbital_period, time_window  # noqa: E402,F401
from .waterfill import StmSet, TrafficMatrix, tapped_water_fill, water_fill  # noqa: E402,F401
from .schedule import SchedulePlan, decompose  # noqa: E402,F401
from .energy import DecisionVars, EnergyBreakdown, check_constraints, energy_breakdown  # noqa: E402,F401
from .optimizer import Solution, optimize, run_scheme  # noqa: E402,F401
from .harness import ExperimentSpec, gen_traffic, load_scenario, run_experiment  # noqa: E402,F401
