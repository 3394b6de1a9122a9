"""Fast invariant suite behind the ``selftest`` subcommand.

Each check prints one PASS/FAIL line; the suite is deterministic and
finishes well under a minute. A sign error anywhere in the divergence
pipeline (for instance in the curvature correction) fails the
consistency checks here, which is what makes this a useful smoke test.
"""

from __future__ import annotations

import numpy as np

from .dof import build_gamma, build_m, divergence_closed_form, fourier_dof, \
    trace_decomposition
from .domain import DiscreteMeasure
from .models import (apply_forward, build_fourier_model, build_relu_model,
                     complex_exponential_moments, complex_real_map)
from .solver import (SolverOptions, closed_form_on_extended_support,
                     lasso_on_support, prune_to_injective, solve_blasso)
from .gridlasso import solve_grid_lasso, uniform_grid


def _check_fourier_derivatives():
    model = build_fourier_model(7)
    rng = np.random.default_rng(0)
    for x in rng.uniform(0, 1, 5):
        x = np.array([x])
        h = 1e-6
        jac_fd = (model.feature(x + h) - model.feature(x - h)) / (2 * h)
        if np.max(np.abs(model.feature_jacobian(x)[:, 0] - jac_fd)) > 1e-5 * 200:
            return f"jacobian mismatch at x={x[0]:.4f}"
        hess_fd = (model.feature_jacobian(x + h)[:, 0]
                   - model.feature_jacobian(x - h)[:, 0]) / (2 * h)
        if np.max(np.abs(model.feature_hessian(x)[:, 0, 0] - hess_fd)) > 1e-4 * 2000:
            return f"hessian mismatch at x={x[0]:.4f}"
    return None


def _check_relu_derivatives():
    rng = np.random.default_rng(1)
    model = build_relu_model(rng.standard_normal((30, 5)))
    x = rng.standard_normal(5)
    h = 1e-6
    for i in range(5):
        e = np.zeros(5)
        e[i] = h
        col = (model.feature(x + e) - model.feature(x - e)) / (2 * h)
        if np.max(np.abs(model.feature_jacobian(x)[:, i] - col)) > 1e-4:
            return f"jacobian mismatch in coordinate {i}"
    return None


def _check_unitary_map():
    f_c = 6
    U = complex_real_map(f_c, "to_real")
    V = complex_real_map(f_c, "to_complex")
    n = 2 * f_c + 1
    if np.max(np.abs(U @ V - np.eye(n))) > 1e-12:
        return "round trip is not the identity"
    rng = np.random.default_rng(2)
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    if abs(np.linalg.norm(U @ v) - np.linalg.norm(v)) > 1e-12:
        return "map does not preserve the norm"
    model = build_fourier_model(f_c)
    measure = DiscreteMeasure(rng.uniform(0, 1, (4, 1)),
                              rng.standard_normal(4))
    lhs = U @ complex_exponential_moments(measure, f_c)
    rhs = apply_forward(model, measure)
    if np.max(np.abs(lhs - rhs)) > 1e-10:
        return "moment map disagrees with the real features"
    return None


def _check_feature_norm():
    model = build_fourier_model(9)
    rng = np.random.default_rng(3)
    for x in rng.uniform(0, 1, 20):
        nrm = float(model.feature(np.array([x])) @ model.feature(np.array([x])))
        if abs(nrm - model.n) > 1e-12 * model.n:
            return f"|phi|^2 = {nrm} != {model.n}"
    return None


def _solve_reference():
    model = build_fourier_model(10)
    truth = DiscreteMeasure([[0.1], [0.6], [0.9]], [2.0, -4.5, 4.0])
    y = apply_forward(model, truth)
    result = solve_blasso(model, y, 1e-4, SolverOptions())
    return model, truth, y, result


def _check_recovery():
    model, truth, y, result = _solve_reference()
    if not result.converged:
        return "reference solve did not converge"
    m = result.measure
    if m.k != 3:
        return f"expected 3 spikes, found {m.k}"
    err = np.max(np.abs(np.sort(m.positions[:, 0])
                        - np.sort(truth.positions[:, 0])))
    if err > 1e-3:
        return f"position error {err:.2e}"
    cert = result.certificate
    for x, b in zip(m.positions, m.amplitudes):
        if abs(cert.value(x) - np.sign(b)) > 1e-6:
            return "certificate does not interpolate the signs"
        if abs(cert.gradient(x)[0]) > 1e-6:
            return "certificate gradient does not vanish on the support"
    return None


def _check_amplitude_formula():
    model, truth, y, result = _solve_reference()
    m = prune_to_injective(model, result.measure)
    signs = np.sign(m.amplitudes)
    direct = closed_form_on_extended_support(model, m.positions, y, 1e-4, signs)
    iterative = lasso_on_support(model, m.positions, y, 1e-4)
    if np.max(np.abs(direct - iterative)) > 1e-8:
        return f"max deviation {np.max(np.abs(direct - iterative)):.2e}"
    return None


def _check_divergence_consistency():
    model, truth, y, result = _solve_reference()
    m = prune_to_injective(model, result.measure)
    gamma = build_gamma(model, m.positions)
    m_matrix = build_m(model, m, y, 1e-4)
    div = divergence_closed_form(gamma, m_matrix)
    if not (-1e-10 <= div <= gamma.rank + 1e-10):
        return f"divergence {div} violates the rank bound {gamma.rank}"
    rank, correction = trace_decomposition(gamma, m_matrix)
    if correction < -1e-10:
        return f"trace correction {correction} is negative"
    if abs((rank - correction) - div) > 1e-9:
        return "trace decomposition does not match the divergence"
    dof, nu = fourier_dof(m, result.certificate, m_matrix, model.f_c)
    if nu < -1e-10:
        return f"curvature correction nu = {nu} is negative"
    if abs(dof - div) > 1e-10:
        return f"trigonometric form deviates by {abs(dof - div):.2e}"
    return None


def _check_grid_lasso():
    model = build_fourier_model(10)
    truth = DiscreteMeasure([[0.1], [0.6], [0.9]], [2.0, -4.5, 4.0])
    rng = np.random.default_rng(4)
    y = apply_forward(model, truth) + 0.01 * rng.standard_normal(model.n)
    grid = uniform_grid(model.domain, 256)
    beta = solve_grid_lasso(model, grid, y, 0.5)
    X = model.feature_matrix(grid.nodes)
    g = X.T @ (X @ beta - y)
    active = beta != 0
    res = np.where(active, np.abs(g + 0.5 * np.sign(beta)),
                   np.maximum(np.abs(g) - 0.5, 0.0))
    if np.max(res) > 1e-10:
        return f"KKT residual {np.max(res):.2e}"
    return None


CHECKS = [
    ("fourier-derivatives", _check_fourier_derivatives),
    ("relu-derivatives", _check_relu_derivatives),
    ("unitary-moment-map", _check_unitary_map),
    ("feature-norm-identity", _check_feature_norm),
    ("noiseless-recovery", _check_recovery),
    ("amplitude-pseudoinverse", _check_amplitude_formula),
    ("divergence-consistency", _check_divergence_consistency),
    ("grid-lasso-kkt", _check_grid_lasso),
]


def run_selftest() -> bool:
    all_ok = True
    for name, check in CHECKS:
        try:
            failure = check()
        except Exception as exc:  # a crash is a failure, not an abort
            failure = f"raised {type(exc).__name__}: {exc}"
        if failure is None:
            print(f"PASS {name}")
        else:
            print(f"FAIL {name}: {failure}")
            all_ok = False
    return all_ok
