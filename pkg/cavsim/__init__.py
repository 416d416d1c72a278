"""cavsim - Stochastic simulation of atoms self-organizing in a pumped lossy cavity."""

__version__ = "0.1.0"

from .config import load_config, parse_config, render_config
from .ensemble import EnsembleRunner, run_ensemble
from .integrator import StochasticIntegrator
from .models import (
    CavsimError,
    CheckpointError,
    ConfigError,
    EnsembleResult,
    NumericalError,
    SimConfig,
    SystemState,
    TrajectoryTrace,
)
from .oracle import EquilibriumSampler

__all__ = [
    "CavsimError",
    "CheckpointError",
    "ConfigError",
    "EnsembleResult",
    "EnsembleRunner",
    "EquilibriumSampler",
    "NumericalError",
    "SimConfig",
    "StochasticIntegrator",
    "SystemState",
    "TrajectoryTrace",
    "load_config",
    "parse_config",
    "render_config",
    "run_ensemble",
]
