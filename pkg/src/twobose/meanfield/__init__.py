"""Gross-Pitaevskii and Hartree functionals for two species."""

from .checks import (
    MiscibilityResult,
    convexity_gap,
    interaction_gap,
    miscibility_gp,
    miscibility_mf,
    random_density,
)
from .estimator import HartreeMinimizer, write_report
from .functional import (
    chemical_potentials,
    energy_gradient,
    energy_terms,
    gp_energy,
    hartree_energy,
    mean_field_operators,
    meanfield_residual,
)
from .minimize import MinimizationError, MinimizeOptions, initial_guess, minimize
from .model import (
    MinimizationReport,
    ModelError,
    ModelSpec,
    NormalizationError,
    OrbitalPair,
    potential_from_config,
    trap_from_config,
)

__all__ = [
    "HartreeMinimizer",
    "write_report",
    "MiscibilityResult",
    "miscibility_gp",
    "miscibility_mf",
    "convexity_gap",
    "interaction_gap",
    "random_density",
    "ModelSpec",
    "OrbitalPair",
    "MinimizationReport",
    "ModelError",
    "NormalizationError",
    "MinimizationError",
    "MinimizeOptions",
    "gp_energy",
    "hartree_energy",
    "energy_terms",
    "energy_gradient",
    "chemical_potentials",
    "meanfield_residual",
    "mean_field_operators",
    "minimize",
    "initial_guess",
    "trap_from_config",
    "potential_from_config",
]
