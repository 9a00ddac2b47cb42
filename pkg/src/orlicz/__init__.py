"""Obstacle problems and regularity diagnostics under generalized Orlicz growth."""

from .errors import (ConfigError, GeometryError, InfeasibleProblemError,
                     NotInvertibleError)
from .phi import (ConditionReport, PhiFunction, check_a0, check_a1,
                  check_ainc_adec, default_beta_grid, validate_weak_phi)
from .grid import (Domain, ScalarField, discrete_gradient, gradient_magnitude,
                   jensen_check, luxemburg_norm, modular, sobolev_poincare_check)
from .solver import (ObstacleProblem, Solution, SolverOptions, comparison_check,
                     energy, full_objective, local_min_restriction_check, solve)
from .capacity import (BoundaryPointReport, CapacityResult, ball_capacity,
                       ball_capacity_bounds, capacity_fatness_ratio,
                       classify_boundary_point, compute_capacity,
                       measure_density_ratio)
from .diagnostics import (CaccioppoliReport, ContinuityReport, GehringReport,
                          boundary_continuity_check, caccioppoli_boundary,
                          caccioppoli_interior_level, caccioppoli_interior_mean,
                          caccioppoli_sweep, fitted_gehring_constant,
                          gehring_estimate)
from .expressions import Expression, parse_expression

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "GeometryError", "InfeasibleProblemError", "NotInvertibleError",
    "ConditionReport", "PhiFunction", "check_a0", "check_a1", "check_ainc_adec",
    "default_beta_grid", "validate_weak_phi",
    "Domain", "ScalarField", "discrete_gradient", "gradient_magnitude",
    "jensen_check", "luxemburg_norm", "modular", "sobolev_poincare_check",
    "ObstacleProblem", "Solution", "SolverOptions", "comparison_check",
    "energy", "full_objective", "local_min_restriction_check", "solve",
    "BoundaryPointReport", "CapacityResult", "ball_capacity",
    "ball_capacity_bounds", "capacity_fatness_ratio", "classify_boundary_point",
    "compute_capacity", "measure_density_ratio",
    "CaccioppoliReport", "ContinuityReport", "GehringReport",
    "boundary_continuity_check", "caccioppoli_boundary",
    "caccioppoli_interior_level", "caccioppoli_interior_mean",
    "caccioppoli_sweep", "fitted_gehring_constant", "gehring_estimate",
    "Expression", "parse_expression",
    "__version__",
]
