"""Fast-forward design and robustness analysis of matter-wave splitting."""
from .numerics import Grid, TimeMesh, Units
from .protocols import bec_interpolation, gaussian_trajectory, three_term, two_bump
from .designer import PotentialTrace, assemble_potential, design, endpoint_consistency, solve_phase
from .solver import ground_state_of_slice, lowest_eigenpairs, propagate
from .lab import FidelityReport, Scenario, perturb, run_scenario, sweep
from .config import ScenarioConfig, parse_config

__all__ = [
    "Grid", "TimeMesh", "Units",
    "bec_interpolation", "gaussian_trajectory", "three_term", "two_bump",
    "PotentialTrace", "assemble_potential", "design", "endpoint_consistency", "solve_phase",
    "ground_state_of_slice", "lowest_eigenpairs", "propagate",
    "FidelityReport", "Scenario", "perturb", "run_scenario", "sweep",
    "ScenarioConfig", "parse_config",
]
__version__ = "0.1.0"
