"""Flow-level CSMA dynamics on conflict graphs.

Models a wireless network as a conflict graph, computes the exact schedule
distribution of standard and flow-aware CSMA in every flow-count state,
decides capacity-region membership, simulates or exactly solves the
flow-level Markov process, and classifies stability.
"""

from .capacity import CapacityVerdict, TrafficProfile, capacity_verdict, scale_to_load
from .csma import (
    AccessParams,
    Discipline,
    NetworkState,
    ScheduleDistribution,
    limit_distribution,
    link_throughputs,
    schedule_distribution,
    schedule_weights,
)
from .dynamics import (
    SimConfig,
    SimEstimate,
    StabilityVerdict,
    classify_stability,
    lyapunov_drift,
    lyapunov_value,
    merge_estimates,
    simulate,
)
from .errors import ConfigurationError, NumericalError
from .graph import ConflictGraph, ScheduleSet, enumerate_schedules, is_feasible
from .oracle import (
    SaturationConstants,
    TruncatedDistribution,
    saturation_constants,
    single_link_throughput,
    solve_stationary,
)
from .region3 import (
    FluidState,
    FluidTrajectory,
    RegionVerdict,
    fluid_drift,
    fluid_trajectory,
    region3_verdict,
    symmetric_boundary,
)

__version__ = "0.1.0"

__all__ = [
    "AccessParams",
    "CapacityVerdict",
    "ConfigurationError",
    "ConflictGraph",
    "Discipline",
    "FluidState",
    "FluidTrajectory",
    "NetworkState",
    "NumericalError",
    "RegionVerdict",
    "SaturationConstants",
    "ScheduleDistribution",
    "ScheduleSet",
    "SimConfig",
    "SimEstimate",
    "StabilityVerdict",
    "TrafficProfile",
    "TruncatedDistribution",
    "capacity_verdict",
    "classify_stability",
    "enumerate_schedules",
    "fluid_drift",
    "fluid_trajectory",
    "is_feasible",
    "limit_distribution",
    "link_throughputs",
    "lyapunov_drift",
    "lyapunov_value",
    "merge_estimates",
    "region3_verdict",
    "saturation_constants",
    "scale_to_load",
    "schedule_distribution",
    "schedule_weights",
    "simulate",
    "single_link_throughput",
    "solve_stationary",
    "symmetric_boundary",
]
