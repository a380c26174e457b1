"""Coverage and spectral efficiency of multi-connectivity on a highway.

Stations and vehicles form 1-D Poisson point processes along a road.  The
package offers an analytic engine (:mod:`mcv2x.analytic`), a full-system
Monte Carlo simulator (:mod:`mcv2x.simulation`) and a sweep CLI
(:mod:`mcv2x.cli`).
"""
__version__ = "0.1.0"

from .analytic import (
    conditional_coverage,
    coverage_probability,
    laplace_interference,
    single_coverage,
    single_spectral_efficiency,
    spectral_efficiency,
)
from .config import ConfigError, SolverConfig, SystemConfig, load_config
from .simulation import SimulationResult, SimulationSpec, simulate

__all__ = [
    "ConfigError", "SimulationResult", "SimulationSpec", "SolverConfig", "SystemConfig",
    "conditional_coverage", "coverage_probability", "laplace_interference", "load_config",
    "simulate", "single_coverage", "single_spectral_efficiency", "spectral_efficiency",
]
