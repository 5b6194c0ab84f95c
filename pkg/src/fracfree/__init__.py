"""Volume-constrained fractional obstacle problems on uniform grids."""

from .config import ConfigError, ScenarioConfig, parse_config, serialize_config, standard_config
from .fractional import build_kernel, energy_apply, frac_laplacian_apply, gagliardo_energy, normalization_constant
from .grid import Ball, Box, DomainSpec, GridSpec, ObstacleSpec, build_grid
from .penalty import PenaltyParams
from .solver import (
    ContinuationSchedule,
    Scenario,
    SolveConfig,
    build_problem,
    continuation_solve,
    minimize_fixed_params,
    volume_tune_epsilon,
)

__version__ = "0.1.0"
