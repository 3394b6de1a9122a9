"""Scikit-learn style estimator wrappers around the measure solvers.

These classes expose the solvers through the familiar ``fit`` /
``predict`` / ``get_params`` surface so they drop into pipelines, cloning
and parameter search. The observation vector y plays the data role:
``fit(y)`` recovers a sparse measure, ``predict()`` returns the fitted
measurement vector.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .dof import DofReport, build_dof_report
from .gridlasso import grid_lasso_dof, solve_grid_lasso, uniform_grid
from .models import apply_forward
from .risk import sure_value
from .solver import SolverOptions, solve_blasso, solve_positive_blasso
from .validation import check_observation, check_positive


def _options_from(est) -> SolverOptions:
    return SolverOptions(
        max_outer_iterations=est.max_outer_iterations,
        certificate_grid_size=est.certificate_grid_size,
        duality_gap_tolerance=est.duality_gap_tolerance,
        seed=est.seed,
    )


class Blasso(BaseEstimator):
    """Sparse regression over measures with a total-variation penalty.

    Parameters mirror the solver options; fitted attributes are
    ``measure_`` (the recovered spikes), ``certificate_``,
    ``fitted_values_``, ``duality_gap_``, ``objective_``, ``n_iter_`` and
    ``converged_``.
    """

    def __init__(self, model=None, lam=1e-2, max_outer_iterations=50,
                 certificate_grid_size=4096, duality_gap_tolerance=1e-8,
                 seed=0):
        self.model = model
        self.lam = lam
        self.max_outer_iterations = max_outer_iterations
        self.certificate_grid_size = certificate_grid_size
        self.duality_gap_tolerance = duality_gap_tolerance
        self.seed = seed

    def fit(self, y):
        y = check_observation(self.model, y)
        check_positive("lam", self.lam)
        result = solve_blasso(self.model, y, self.lam, _options_from(self))
        self.measure_ = result.measure
        self.certificate_ = result.certificate
        self.duality_gap_ = result.duality_gap
        self.objective_ = result.objective_value
        self.n_iter_ = result.outer_iterations
        self.converged_ = result.converged
        self.fitted_values_ = apply_forward(self.model, result.measure)
        self._y = y
        return self

    def predict(self) -> np.ndarray:
        """Fitted measurement vector of the recovered measure."""
        return self.fitted_values_

    def dof_report(self, classify: bool = True) -> DofReport:
        return build_dof_report(self.model, self.measure_, self._y, self.lam,
                                classify=classify)

    def sure(self, sigma: float) -> float:
        """Unbiased risk estimate of the fit at noise level sigma."""
        report = self.dof_report(classify=False)
        return sure_value(self._y, self.fitted_values_, report.divergence,
                          sigma)


class PositiveBlasso(BaseEstimator):
    """Nonnegative regression over measures (constraint instead of penalty)."""

    def __init__(self, model=None, max_outer_iterations=50,
                 certificate_grid_size=4096, duality_gap_tolerance=1e-8,
                 seed=0):
        self.model = model
        self.max_outer_iterations = max_outer_iterations
        self.certificate_grid_size = certificate_grid_size
        self.duality_gap_tolerance = duality_gap_tolerance
        self.seed = seed

    def fit(self, y):
        y = check_observation(self.model, y)
        result = solve_positive_blasso(self.model, y, _options_from(self))
        self.measure_ = result.measure
        self.certificate_ = result.certificate
        self.duality_gap_ = result.duality_gap
        self.objective_ = result.objective_value
        self.n_iter_ = result.outer_iterations
        self.converged_ = result.converged
        self.fitted_values_ = apply_forward(self.model, result.measure)
        return self

    def predict(self) -> np.ndarray:
        return self.fitted_values_


class GridLasso(BaseEstimator):
    """Lasso on a fixed uniform grid of candidate positions."""

    def __init__(self, model=None, lam=1e-2, grid_size=256, tol=1e-10):
        self.model = model
        self.lam = lam
        self.grid_size = grid_size
        self.tol = tol

    def fit(self, y):
        y = check_observation(self.model, y)
        check_positive("lam", self.lam)
        grid = uniform_grid(self.model.domain, self.grid_size)
        self.grid_ = grid
        self.coef_ = solve_grid_lasso(self.model, grid, y, self.lam,
                                      tol=self.tol)
        self.fitted_values_ = self.model.feature_matrix(grid.nodes) @ self.coef_
        self.dof_ = grid_lasso_dof(self.coef_)
        return self

    def predict(self) -> np.ndarray:
        return self.fitted_values_
