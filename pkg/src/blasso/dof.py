"""Closed-form divergence and degrees-of-freedom reports.

Around a solution with spikes at X, the fitted-value map is locally
differentiable and its divergence has a closed form driven by the matrix
Gamma = [feature columns | per-spike derivative columns] and a curvature
correction built from the certificate's Hessians at the spikes. The
divergence is at most rank(Gamma) <= (d+1)k and is generically strictly
below it, which is the whole point: counting parameters overestimates the
effective degrees of freedom of off-the-grid models.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import DiscreteMeasure
from .errors import DegenerateCertificateError, SingularMatrixError
from .models import (Certificate, ForwardModel, FourierModel, apply_forward)
from .solver import (SolverOptions, _certificate_search, _polish_batch_1d,
                     prune_to_injective)

__all__ = [
    "GammaMatrix", "MMatrix", "DofReport", "ExtendedSupport",
    "build_gamma", "build_m", "divergence_closed_form", "fourier_dof",
    "classify_extended_support", "trace_decomposition", "build_dof_report",
]

RANK_TOL = 1e-10
COND_THRESHOLD = 1e12
GAUGE_TOL = 1e-6


@dataclass
class GammaMatrix:
    """[Phi_X | derivative columns], with rank data at cutoff 1e-10*s_max."""

    matrix: np.ndarray  # (n, k*(d+1))
    k: int
    d: int
    rank: int
    sigma_min: float
    sigma_max: float


@dataclass
class MMatrix:
    """Gamma^T Gamma plus the block-diagonal curvature correction.

    q_blocks[j] = -(lam/beta_j) * hess(eta)(x_j); at a valid solution each
    block is positive semi-definite, so ``min_eigenvalue`` being clearly
    negative signals that the input was not a solution.
    """

    matrix: np.ndarray  # (P, P)
    q_blocks: np.ndarray  # (k, d, d)
    min_eigenvalue: float


def build_gamma(model: ForwardModel, positions) -> GammaMatrix:
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    k = positions.shape[0]
    d = model.domain.dim
    if k == 0:
        return GammaMatrix(np.zeros((model.n, 0)), 0, d, 0, 0.0, 0.0)
    matrix = np.hstack([model.feature_matrix(positions),
                        model.jacobian_columns(positions)])
    svals = np.linalg.svd(matrix, compute_uv=False)
    sigma_max = float(svals[0])
    rank = int(np.sum(svals > RANK_TOL * sigma_max))
    return GammaMatrix(matrix, k, d, rank, float(svals[-1]), sigma_max)


def build_m(model: ForwardModel, measure: DiscreteMeasure, y, lam) -> MMatrix:
    """Curvature matrix at (measure, y, lam); k = 0 gives a 0x0 matrix."""
    k = measure.k
    d = model.domain.dim
    if k == 0:
        return MMatrix(np.zeros((0, 0)), np.zeros((0, d, d)), 0.0)
    if np.any(measure.amplitudes == 0):
        raise ValueError("curvature matrix needs nonzero amplitudes")
    gamma = build_gamma(model, measure.positions)
    p = (np.asarray(y, dtype=float) - apply_forward(model, measure)) / lam
    hess = model.hessian_contract_batch(measure.positions, p)
    q_blocks = -(lam / measure.amplitudes)[:, None, None] * hess
    M = gamma.matrix.T @ gamma.matrix
    for j in range(k):
        rows = slice(k + j * d, k + (j + 1) * d)
        M[rows, rows] += q_blocks[j]
    min_eig = float(np.linalg.eigvalsh(M)[0])
    return MMatrix(M, q_blocks, min_eig)


def _eig_split(gamma: GammaMatrix, m_matrix: MMatrix,
               cond_threshold: float, gauge_tol: float):
    """Eigendecompose M and split directions into kept and dropped.

    A dropped direction is tolerable only when Gamma also annihilates it
    (a pure reparameterization, e.g. the radial directions of scale
    invariant features); otherwise the fitted values genuinely move along
    a direction the formula cannot resolve and the input is degenerate.
    """
    M = m_matrix.matrix
    evals, evecs = np.linalg.eigh(M)
    lam_max = float(evals[-1]) if evals.size else 0.0
    cut = lam_max / cond_threshold
    W = gamma.matrix @ evecs  # image of each eigendirection
    w_norms = np.linalg.norm(W, axis=0)
    keep = evals > cut
    dropped_moving = (~keep) & (w_norms > gauge_tol * max(gamma.sigma_max, 1e-300))
    if np.any(dropped_moving):
        cond = np.inf if evals[0] <= 0 else lam_max / float(evals[0])
        raise SingularMatrixError(
            "curvature matrix is numerically singular along a direction "
            "that moves the fitted values (condition estimate "
            f"{cond:.3e}); the observation is near the degenerate set",
            condition_estimate=cond)
    return evals, w_norms, keep


def divergence_closed_form(gamma: GammaMatrix, m_matrix: MMatrix,
                           cond_threshold: float = COND_THRESHOLD,
                           gauge_tol: float = GAUGE_TOL) -> float:
    """tr(Gamma M^{-1} Gamma^T), the local divergence of the fitted values.

    Solved through the symmetric eigendecomposition of M. Eigendirections
    below the conditioning cutoff are dropped only if they are null for
    Gamma as well (the trace is invariant to them); otherwise a
    SingularMatrixError reports the near-degeneracy.
    """
    if gamma.k == 0:
        return 0.0
    evals, w_norms, keep = _eig_split(gamma, m_matrix, cond_threshold, gauge_tol)
    return float(np.sum(w_norms[keep] ** 2 / evals[keep]))


def trace_decomposition(gamma: GammaMatrix, m_matrix: MMatrix,
                        cond_threshold: float = COND_THRESHOLD,
                        gauge_tol: float = GAUGE_TOL) -> tuple[int, float]:
    """(rank(Gamma), T) with divergence = rank - T and T >= 0.

    T = tr(proj_{rowspace(Gamma)} blockdiag(0, Q) M^{-1}) measures how much
    the certificate curvature pulls the divergence below the rank.
    """
    if gamma.k == 0:
        return 0, 0.0
    evals, w_norms, keep = _eig_split(gamma, m_matrix, cond_threshold, gauge_tol)
    div = float(np.sum(w_norms[keep] ** 2 / evals[keep]))
    return gamma.rank, gamma.rank - div


def fourier_dof(measure: DiscreteMeasure, certificate: Certificate,
                m_matrix: MMatrix, f_c: int,
                cond_threshold: float = COND_THRESHOLD) -> tuple[float, float]:
    """(divergence, nu) for the 1-D trigonometric model, discrete support.

    nu = sum_j Q_j * (M^{-1})_{k+j,k+j} with scalar curvatures
    Q_j = -(lam/beta_j) * eta''(x_j); the divergence is 2k - nu. Reading
    the diagonal entry of M^{-1} is forced by consistency with the trace
    formula, which the tests pin to 1e-10.
    """
    k = measure.k
    if k == 0:
        return 0.0, 0.0
    if measure.dim != 1:
        raise ValueError("this degrees-of-freedom form needs a 1-D model")
    M = m_matrix.matrix
    evals = np.linalg.eigvalsh(M)
    if evals[0] <= 0 or evals[-1] / evals[0] > cond_threshold:
        cond = np.inf if evals[0] <= 0 else float(evals[-1] / evals[0])
        raise SingularMatrixError(
            f"curvature matrix condition estimate {cond:.3e} exceeds the guard",
            condition_estimate=cond)
    M_inv = np.linalg.inv(M)
    q = m_matrix.q_blocks[:, 0, 0]
    nu = float(np.sum(q * np.diag(M_inv)[k:]))
    return 2.0 * k - nu, nu


@dataclass
class ExtendedSupport:
    """Where |eta| reaches 1: nowhere, everywhere, or a finite point set."""

    kind: str  # "empty", "full-domain", "discrete"
    points: np.ndarray  # (m, d); empty unless discrete
    flatness_orders: list[int] | None  # smallest l with eta^(2l)(x_i) != 0


def _flatness_orders(model: FourierModel, certificate, points, grid,
                     threshold_rel=1e-6):
    orders = []
    max_order = model.f_c + 1
    scales = {}
    for x in points:
        order = max_order
        for ell in range(1, max_order + 1):
            if ell not in scales:
                dcols = model.derivative_matrix(grid, 2 * ell)
                scales[ell] = float(np.max(np.abs(
                    dcols.T @ certificate.dual_vector))) or 1.0
            val = abs(certificate.derivative(x, 2 * ell))
            if val > threshold_rel * scales[ell]:
                order = ell
                break
        orders.append(order)
    return orders


def classify_extended_support(certificate: Certificate, model: ForwardModel,
                              tol: float = 1e-6, grid_size: int = 8192,
                              opts: SolverOptions | None = None) -> ExtendedSupport:
    """Classify the contact set of the certificate.

    1-D models get the dense-scan three-way test (empty / full domain /
    discrete with flatness orders); higher dimensions only distinguish
    empty from discrete via the multi-start search.
    """
    p = certificate.dual_vector
    if model.domain.dim != 1:
        opts = opts or SolverOptions()
        search = _certificate_search(model, p, opts, mode="abs")
        if search.sup_abs <= 1.0 - tol:
            return ExtendedSupport("empty", np.zeros((0, model.domain.dim)), None)
        return ExtendedSupport("discrete", np.atleast_2d(search.x_star), None)

    grid = model.domain.uniform_grid(grid_size)
    eta = certificate.values_at(grid)
    abs_eta = np.abs(eta)
    if np.max(abs_eta) <= 1.0 - tol:
        return ExtendedSupport("empty", np.zeros((0, 1)), None)
    if np.min(abs_eta) >= 1.0 - tol:
        return ExtendedSupport("full-domain", np.zeros((0, 1)), None)

    # polish every local maximum of |eta| that comes within tol of 1
    circular = model.domain.geometry == "torus"
    left = np.roll(abs_eta, 1)
    right = np.roll(abs_eta, -1)
    if circular:
        is_max = (abs_eta >= left) & (abs_eta >= right)
    else:
        is_max = np.zeros_like(abs_eta, dtype=bool)
        is_max[1:-1] = (abs_eta[1:-1] >= abs_eta[:-2]) & \
                       (abs_eta[1:-1] >= abs_eta[2:])
        is_max[0] = abs_eta[0] >= abs_eta[1]
        is_max[-1] = abs_eta[-1] >= abs_eta[-2]
    cand = np.flatnonzero(is_max & (abs_eta >= 1.0 - tol))
    if cand.size == 0:
        raise DegenerateCertificateError(
            "values touch 1 on the scan grid but no local maximum does")
    grid_step = 1.0 / grid_size if circular else \
        float(grid[-1, 0] - grid[0, 0]) / (grid_size - 1)
    xs, vals = _polish_batch_1d(model, p, grid[cand, 0], np.sign(eta[cand]),
                                grid_step)
    ok = np.abs(vals) >= 1.0 - tol
    xs = xs[ok]
    if xs.size == 0:
        raise DegenerateCertificateError(
            "near-contact grid values do not polish to contact points")
    # deduplicate
    points: list[float] = []
    for x in np.sort(xs):
        if not points or model.domain.distance(
                np.array([x]), np.array([points[-1]])) > 1e-6:
            points.append(float(x))
    if circular and len(points) > 1 and model.domain.distance(
            np.array([points[0]]), np.array([points[-1]])) <= 1e-6:
        points.pop()
    # isolation: every near-contact grid point must sit close to some
    # polished contact point, else the contact set is not a point set
    near = np.flatnonzero(abs_eta >= 1.0 - tol)
    pts_arr = np.array(points)
    for i in near:
        gaps = np.abs(grid[i, 0] - pts_arr)
        if circular:
            gaps = np.minimum(gaps, 1.0 - gaps)
        if np.min(gaps) > max(16 * grid_step, 1e-3):
            raise DegenerateCertificateError(
                f"contact value at x={grid[i, 0]:.6f} is not isolated "
                "around any contact point")
    points_arr = pts_arr.reshape(-1, 1)
    orders = None
    if isinstance(model, FourierModel):
        orders = _flatness_orders(model, certificate, points_arr[:, 0], grid)
    return ExtendedSupport("discrete", points_arr, orders)


@dataclass
class DofReport:
    """Everything the risk harness needs about one solved instance."""

    k: int
    d: int
    parameter_count: int  # (d+1) * k
    rank_gamma: int
    sigma_min_gamma: float
    divergence: float
    nu: float | None  # trigonometric models only
    support_class: str | None
    flatness_orders: list[int] | None


def build_dof_report(model: ForwardModel, measure: DiscreteMeasure, y, lam,
                     classify: bool = True,
                     opts: SolverOptions | None = None) -> DofReport:
    """Assemble the report for a solved instance.

    The divergence is evaluated on the injectivity-pruned support (the
    smooth path runs through that smaller solution whenever the raw
    support is rank deficient).
    """
    m = prune_to_injective(model, measure)
    d = model.domain.dim
    certificate = Certificate(
        model, (np.asarray(y, dtype=float) - apply_forward(model, m)) / lam, lam)

    support_class = None
    orders = None
    if classify:
        ext = classify_extended_support(certificate, model, opts=opts)
        support_class = ext.kind
        orders = ext.flatness_orders
        if support_class == "full-domain":
            return DofReport(m.k, d, (d + 1) * m.k, 0, 0.0, float(model.n),
                             None, support_class, None)

    if m.k == 0:
        return DofReport(0, d, 0, 0, 0.0, 0.0, None,
                         support_class or "empty", orders)

    gamma = build_gamma(model, m.positions)
    m_matrix = build_m(model, m, y, lam)
    divergence = divergence_closed_form(gamma, m_matrix)
    nu = None
    if isinstance(model, FourierModel):
        _, nu = fourier_dof(m, certificate, m_matrix, model.f_c)
    return DofReport(m.k, d, (d + 1) * m.k, gamma.rank, gamma.sigma_min,
                     divergence, nu, support_class, orders)
