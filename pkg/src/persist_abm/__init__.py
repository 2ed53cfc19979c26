"""Agent-based model of deaf-student post-secondary persistence."""

__version__ = "0.1.0"

from .engine import GridSpec, RunResult, SimConfig, run, run_with_trace, setup, stream
from .model import (
    DEFAULT_HAZARDS,
    FACTOR_NAMES,
    Agent,
    AgentStatus,
    FactorSpec,
    FactorVector,
    HazardVector,
    composite_persistence_level,
    departure_probability,
    effective_factor,
)

__all__ = [
    "DEFAULT_HAZARDS",
    "FACTOR_NAMES",
    "Agent",
    "AgentStatus",
    "FactorSpec",
    "FactorVector",
    "GridSpec",
    "HazardVector",
    "RunResult",
    "SimConfig",
    "composite_persistence_level",
    "departure_probability",
    "effective_factor",
    "run",
    "run_with_trace",
    "setup",
    "stream",
]
