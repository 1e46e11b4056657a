"""Latency minimization for RIS-assisted integrated sensing, communication and computation.

Typical use::

    from ris_icsc import load_config, realize_scenario, algorithm4

    cfg = load_config()
    result = algorithm4(realize_scenario(cfg), cfg)
    print(result.report.weighted_total)
"""

from .beamforming import InfeasibleScenario, NoUplink, initial_state, inner_loop
from .channel import ChannelSet, realize_scenario
from .compute_alloc import alternate_compute, edge_allocation, integer_offload
from .config import ConfigError, SystemConfig, load_config
from .driver import RunResult, TraceRecord, algorithm4
from .fractional import outer_loop
from .metrics import BeamformingState, ComputeState, LatencyReport, latency
from .single_ue import SensingCaseInfeasible, algorithm5, two_ray_precoder

__all__ = [
    "BeamformingState",
    "ChannelSet",
    "ComputeState",
    "ConfigError",
    "InfeasibleScenario",
    "LatencyReport",
    "NoUplink",
    "RunResult",
    "SensingCaseInfeasible",
    "SystemConfig",
    "TraceRecord",
    "algorithm4",
    "algorithm5",
    "alternate_compute",
    "edge_allocation",
    "initial_state",
    "inner_loop",
    "integer_offload",
    "latency",
    "load_config",
    "outer_loop",
    "realize_scenario",
    "two_ray_precoder",
]
