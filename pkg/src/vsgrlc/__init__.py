"""Multi-VSG microgrid analysis through the RLC equivalent-circuit analogy.

Modules: ``model`` (config and graph), ``tf`` (small-signal transfer
functions), ``equiv`` (RLC mapping and design rules), ``ctrl`` (controller
laws), ``engine`` (time-domain simulator), ``metrics`` and ``cli``.
"""
from .engine import SimState, Simulator, TimeSeries, equilibrium_init, network_solve, simulate
from .model import (
    CommGraph,
    ConfigError,
    GridLink,
    NetworkModel,
    Scenario,
    UnitParams,
    algebraic_connectivity,
    coupling_coefficient,
    laplacian,
    load_model,
    load_model_file,
)

__version__ = "0.1.0"

__all__ = [
    "CommGraph", "ConfigError", "GridLink", "NetworkModel", "Scenario", "SimState", "Simulator",
    "TimeSeries", "UnitParams", "algebraic_connectivity", "coupling_coefficient", "equilibrium_init",
    "laplacian", "load_model", "load_model_file", "network_solve", "simulate",
]
