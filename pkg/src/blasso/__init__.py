"""Off-the-grid sparse regression with exact degrees-of-freedom accounting.

The package solves least-squares regression over measures with a
total-variation penalty (and a positivity-constrained variant) by sliding
Frank-Wolfe, evaluates the closed-form divergence of the fitted values,
and runs SURE-based risk sweeps against a discrete grid-lasso baseline.
"""

from .domain import DiscreteMeasure, DomainSpec
from .dof import (DofReport, ExtendedSupport, GammaMatrix, MMatrix,
                  build_dof_report, build_gamma, build_m,
                  classify_extended_support, divergence_closed_form,
                  fourier_dof, trace_decomposition)
from .errors import (BlassoError, ConfigError, DegenerateCertificateError,
                     DegenerateFeatureError, DomainError, OracleFailureError,
                     SingularMatrixError)
from .estimators import Blasso, GridLasso, PositiveBlasso
from .gridlasso import (GridSpec, compare_grid_vs_continuous, grid_lasso_dof,
                        solve_grid_lasso, uniform_grid)
from .models import (Certificate, ForwardModel, FourierModel, ReluModel,
                     apply_forward, build_fourier_model, build_relu_model,
                     certificate_eval, complex_exponential_moments,
                     complex_real_map)
from .risk import (SweepConfig, SweepRecord, SweepResult,
                   finite_difference_divergence, monte_carlo_divergence,
                   run_sweep, sure_param_value, sure_value)
from .solver import (SolveResult, SolverOptions,
                     closed_form_on_extended_support, lasso_on_support,
                     primal_dual_gap, prune_to_injective, slide_local,
                     solve_blasso, solve_positive_blasso)

__version__ = "0.1.0"

__all__ = [
    "DiscreteMeasure", "DomainSpec",
    "ForwardModel", "FourierModel", "ReluModel", "Certificate",
    "build_fourier_model", "build_relu_model", "apply_forward",
    "certificate_eval", "complex_real_map", "complex_exponential_moments",
    "SolverOptions", "SolveResult", "solve_blasso", "solve_positive_blasso",
    "lasso_on_support", "slide_local", "primal_dual_gap",
    "prune_to_injective", "closed_form_on_extended_support",
    "GammaMatrix", "MMatrix", "DofReport", "ExtendedSupport",
    "build_gamma", "build_m", "divergence_closed_form", "fourier_dof",
    "classify_extended_support", "trace_decomposition", "build_dof_report",
    "sure_value", "sure_param_value", "finite_difference_divergence",
    "monte_carlo_divergence", "SweepConfig", "SweepRecord", "SweepResult",
    "run_sweep",
    "GridSpec", "uniform_grid", "solve_grid_lasso", "grid_lasso_dof",
    "compare_grid_vs_continuous",
    "Blasso", "PositiveBlasso", "GridLasso",
    "BlassoError", "DomainError", "DegenerateFeatureError",
    "SingularMatrixError", "DegenerateCertificateError",
    "OracleFailureError", "ConfigError",
]
