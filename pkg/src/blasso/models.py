"""Measurement models: smooth feature families and their derivatives.

A forward model maps a discrete measure sum_j beta_j * delta(x_j) to the
n-vector sum_j beta_j * phi(x_j) for a feature function phi with first and
second derivatives. Two concrete families are provided: real 1-D Fourier
features on the torus, and (optionally normalized) ReLU ridge features on
a box.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .domain import DiscreteMeasure, DomainSpec
from .errors import DegenerateFeatureError, DomainError

logger = logging.getLogger(__name__)

_HINGE_NUDGE = 1e-12


class ForwardModel:
    """Base class: a feature family phi : domain -> R^n.

    Subclasses provide ``feature``, ``feature_jacobian`` and
    ``feature_hessian``; everything else is derived. Models are immutable
    after construction and safe to share across workers.
    """

    n: int
    domain: DomainSpec
    smoothness: str  # "exact" or "almost-everywhere"

    def feature(self, x: np.ndarray) -> np.ndarray:
        """phi(x), shape (n,)."""
        raise NotImplementedError

    def feature_jacobian(self, x: np.ndarray) -> np.ndarray:
        """d phi / dx, shape (n, d)."""
        raise NotImplementedError

    def feature_hessian(self, x: np.ndarray) -> np.ndarray:
        """Second derivatives, shape (n, d, d): one d-by-d block per output."""
        raise NotImplementedError

    def hessian_contract(self, x: np.ndarray, p: np.ndarray) -> np.ndarray:
        """sum_i p_i * hessian(phi_i)(x), shape (d, d)."""
        return np.einsum("i,ijk->jk", np.asarray(p, dtype=float),
                         self.feature_hessian(x))

    def feature_matrix(self, positions: np.ndarray) -> np.ndarray:
        """Columns phi(x_j) for each row x_j of positions, shape (n, k)."""
        pts = np.atleast_2d(np.asarray(positions, dtype=float))
        if pts.shape[0] == 0:
            return np.zeros((self.n, 0))
        return np.column_stack([self.feature(x) for x in pts])

    def jacobian_columns(self, positions: np.ndarray) -> np.ndarray:
        """Derivative columns grouped per spike, shape (n, k*d)."""
        pts = np.atleast_2d(np.asarray(positions, dtype=float))
        if pts.shape[0] == 0:
            return np.zeros((self.n, 0))
        return np.hstack([self.feature_jacobian(x) for x in pts])

    def hessian_contract_batch(self, positions: np.ndarray,
                               p: np.ndarray) -> np.ndarray:
        """Per-spike contracted Hessians sum_i p_i hess(phi_i)(x_j), (k, d, d)."""
        pts = np.atleast_2d(np.asarray(positions, dtype=float))
        return np.array([self.hessian_contract(x, p) for x in pts]).reshape(
            pts.shape[0], self.domain.dim, self.domain.dim)

    def scan_points(self, grid_size: int, rng: np.random.Generator | None = None,
                    n_random: int = 0) -> np.ndarray:
        """Points used to scan the certificate: a grid in 1-D, random
        directions otherwise (unit sphere for 0-homogeneous models)."""
        if self.domain.dim == 1:
            return self.domain.uniform_grid(grid_size)
        if rng is None:
            rng = np.random.default_rng(0)
        count = n_random if n_random else grid_size
        pts = rng.standard_normal((count, self.domain.dim))
        pts /= np.maximum(np.linalg.norm(pts, axis=1, keepdims=True), 1e-30)
        return pts


class FourierModel(ForwardModel):
    """Real trigonometric features on the 1-D torus up to cutoff frequency.

    phi(x) = (1, sqrt(2) sin(2 pi l x)_{l<=f_c}, sqrt(2) cos(2 pi l x)_{l<=f_c}),
    n = 2 f_c + 1, with ||phi(x)||^2 = n for every x.
    """

    def __init__(self, f_c: int):
        f_c = int(f_c)
        if f_c < 0:
            raise ValueError(f"cutoff frequency must be >= 0, got {f_c}")
        self.f_c = f_c
        self.n = 2 * f_c + 1
        self.domain = DomainSpec.torus(1)
        self.smoothness = "exact"
        self._ell = np.arange(1, f_c + 1, dtype=float)
        self._grid_cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def __repr__(self):
        return f"FourierModel(f_c={self.f_c})"

    def _blocks(self, x: np.ndarray, order: int = 0) -> np.ndarray:
        """Order-q derivative of phi at scalar positions, shape (n, m).

        Differentiating shifts the phase by q*pi/2 and scales by (2 pi l)^q.
        """
        xs = np.atleast_1d(np.asarray(x, dtype=float)).reshape(-1)
        theta = 2.0 * np.pi * np.outer(self._ell, xs)  # (f_c, m)
        scale = (2.0 * np.pi * self._ell) ** order
        phase = order * np.pi / 2.0
        sin_rows = np.sqrt(2.0) * scale[:, None] * np.sin(theta + phase)
        cos_rows = np.sqrt(2.0) * scale[:, None] * np.cos(theta + phase)
        const = np.ones((1, xs.size)) if order == 0 else np.zeros((1, xs.size))
        return np.vstack([const, sin_rows, cos_rows])

    def feature(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return self._blocks(x[0], 0)[:, 0]

    def feature_derivative(self, x, order: int) -> np.ndarray:
        """Exact order-q derivative of phi (the features are trigonometric)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return self._blocks(x[0], order)[:, 0]

    def feature_jacobian(self, x):
        return self.feature_derivative(x, 1).reshape(self.n, 1)

    def feature_hessian(self, x):
        return self.feature_derivative(x, 2).reshape(self.n, 1, 1)

    def hessian_contract(self, x, p):
        return np.array([[float(self.feature_derivative(x, 2) @ p)]])

    def feature_matrix(self, positions):
        pts = np.atleast_2d(np.asarray(positions, dtype=float))
        if pts.shape[0] == 0:
            return np.zeros((self.n, 0))
        return self._blocks(pts[:, 0], 0)

    def jacobian_columns(self, positions):
        pts = np.atleast_2d(np.asarray(positions, dtype=float))
        if pts.shape[0] == 0:
            return np.zeros((self.n, 0))
        return self._blocks(pts[:, 0], 1)

    def hessian_contract_batch(self, positions, p):
        pts = np.atleast_2d(np.asarray(positions, dtype=float))
        if pts.shape[0] == 0:
            return np.zeros((0, 1, 1))
        vals = self._blocks(pts[:, 0], 2).T @ np.asarray(p, dtype=float)
        return vals.reshape(-1, 1, 1)

    def derivative_matrix(self, positions, order: int) -> np.ndarray:
        """Columns of order-q feature derivatives at each position, (n, k)."""
        pts = np.atleast_2d(np.asarray(positions, dtype=float))
        if pts.shape[0] == 0:
            return np.zeros((self.n, 0))
        return self._blocks(pts[:, 0], order)

    def grid_features(self, grid_size: int) -> tuple[np.ndarray, np.ndarray]:
        """Cached (points, feature matrix) for a uniform scan grid."""
        cached = self._grid_cache.get(grid_size)
        if cached is None:
            pts = self.domain.uniform_grid(grid_size)
            cached = (pts, self.feature_matrix(pts))
            self._grid_cache[grid_size] = cached
        return cached


class ReluModel(ForwardModel):
    """Ridge features x -> relu(A x), optionally normalized to unit length.

    The map is smooth away from the hinge hyperplanes <a_j, x> = 0; the
    hinge derivative is taken to be 0. With normalization the features are
    invariant under positive rescaling of x, so positions matter only
    through their direction.
    """

    def __init__(self, weights: np.ndarray, normalize: bool = True,
                 box_radius: float | None = None):
        A = np.asarray(weights, dtype=float)
        if A.ndim != 2:
            raise ValueError("weights must be a 2-D array")
        row_norms = np.linalg.norm(A, axis=1)
        if np.any(row_norms == 0):
            raise ValueError("weights must have no zero rows")
        self.weights = A
        self.normalize = bool(normalize)
        self.n, d = A.shape
        if box_radius is None:
            box_radius = 10.0 * np.sqrt(d)
        self.domain = DomainSpec.cube(d, box_radius)
        self.smoothness = "almost-everywhere"

    def __repr__(self):
        return (f"ReluModel(n={self.n}, d={self.weights.shape[1]}, "
                f"normalize={self.normalize})")

    def _nudge_off_hinge(self, x: np.ndarray) -> np.ndarray:
        """Perturb x off any hinge it lands on exactly (measure-zero event)."""
        r = self.weights @ x
        hit = (r == 0.0) & (np.linalg.norm(x) > 0)
        if not np.any(hit):
            return x
        logger.warning("evaluation point on %d hinge(s); perturbing by %g",
                       int(np.sum(hit)), _HINGE_NUDGE)
        return x + _HINGE_NUDGE

    def _raw(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=float).reshape(-1)
        x = self._nudge_off_hinge(x)
        r = self.weights @ x
        return np.maximum(r, 0.0), (r > 0.0).astype(float)

    def feature(self, x):
        raw, _ = self._raw(x)
        if not self.normalize:
            return raw
        s = np.linalg.norm(raw)
        if s == 0.0:
            raise DegenerateFeatureError(
                "all ridge activations vanish; normalized feature undefined")
        return raw / s

    def feature_jacobian(self, x):
        raw, gate = self._raw(x)
        jac_raw = gate[:, None] * self.weights
        if not self.normalize:
            return jac_raw
        s = np.linalg.norm(raw)
        if s == 0.0:
            raise DegenerateFeatureError(
                "all ridge activations vanish; normalized feature undefined")
        grad_s = jac_raw.T @ raw / s
        return jac_raw / s - np.outer(raw, grad_s) / s**2

    def feature_hessian(self, x):
        d = self.weights.shape[1]
        if not self.normalize:
            return np.zeros((self.n, d, d))
        raw, gate = self._raw(x)
        s = np.linalg.norm(raw)
        if s == 0.0:
            raise DegenerateFeatureError(
                "all ridge activations vanish; normalized feature undefined")
        jac_raw = gate[:, None] * self.weights
        grad_s = jac_raw.T @ raw / s  # (d,)
        gram = jac_raw.T @ jac_raw  # (d, d); hess of s is gram/s - gg^T/s
        gg = np.outer(grad_s, grad_s)
        hess = np.empty((self.n, d, d))
        for j in range(self.n):
            aj = jac_raw[j]
            sym = np.outer(aj, grad_s)
            hess[j] = (-(sym + sym.T) / s**2
                       - raw[j] * gram / s**3 + 3.0 * raw[j] * gg / s**3)
        return hess

    def hessian_contract(self, x, p):
        p = np.asarray(p, dtype=float)
        d = self.weights.shape[1]
        if not self.normalize:
            return np.zeros((d, d))
        raw, gate = self._raw(x)
        s = np.linalg.norm(raw)
        if s == 0.0:
            raise DegenerateFeatureError(
                "all ridge activations vanish; normalized feature undefined")
        jac_raw = gate[:, None] * self.weights
        grad_s = jac_raw.T @ raw / s
        u = jac_raw.T @ p
        c = float(raw @ p)
        sym = np.outer(u, grad_s)
        return (-(sym + sym.T) / s**2
                - c * (jac_raw.T @ jac_raw) / s**3
                + 3.0 * c * np.outer(grad_s, grad_s) / s**3)

    def feature_matrix(self, positions):
        pts = np.atleast_2d(np.asarray(positions, dtype=float))
        if pts.shape[0] == 0:
            return np.zeros((self.n, 0))
        raw = np.maximum(self.weights @ pts.T, 0.0)  # (n, k)
        if not self.normalize:
            return raw
        norms = np.linalg.norm(raw, axis=0)
        if np.any(norms == 0.0):
            raise DegenerateFeatureError(
                "all ridge activations vanish; normalized feature undefined")
        return raw / norms

    def certificate_batch(self, points: np.ndarray,
                          p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Values and gradients of x -> <phi(x), p> at many points.

        points has shape (m, d); returns (values (m,), gradients (m, d)).
        Used by the multi-start certificate search in high dimension.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        r = self.weights @ pts.T  # (n, m)
        raw = np.maximum(r, 0.0)
        gate = (r > 0.0).astype(float)
        gp = gate * p[:, None]
        grads_raw = gp.T @ self.weights  # (m, d): jac_raw^T p per point
        vals_raw = raw.T @ p
        if not self.normalize:
            return vals_raw, grads_raw
        s = np.linalg.norm(raw, axis=0)
        bad = s == 0.0
        s_safe = np.where(bad, 1.0, s)
        grad_s = (gate * raw).T @ self.weights / s_safe[:, None]
        vals = vals_raw / s_safe
        grads = grads_raw / s_safe[:, None] - vals[:, None] * grad_s / s_safe[:, None]
        vals[bad] = 0.0
        grads[bad] = 0.0
        return vals, grads


def build_fourier_model(f_c: int) -> FourierModel:
    """Fourier feature model with n = 2*f_c + 1 real measurements."""
    return FourierModel(f_c)


def build_relu_model(features: np.ndarray, normalize: bool = True,
                     box_radius: float | None = None) -> ReluModel:
    """Two-layer ReLU feature model from an (n, d) weight matrix."""
    return ReluModel(features, normalize=normalize, box_radius=box_radius)


def apply_forward(model: ForwardModel, measure: DiscreteMeasure) -> np.ndarray:
    """Measurement vector sum_j beta_j * phi(x_j); linear in the amplitudes."""
    if measure.k == 0:
        return np.zeros(model.n)
    for x in measure.positions:
        if not model.domain.contains(x):
            raise DomainError(f"position {x} outside the box domain")
    return model.feature_matrix(measure.positions) @ measure.amplitudes


@dataclass
class Certificate:
    """A dual vector p and the function eta(x) = <phi(x), p>.

    At a solution of the penalized problem eta is bounded by 1 in sup norm
    and touches +-1 exactly on the support.
    """

    model: ForwardModel
    dual_vector: np.ndarray
    lam: float

    def __post_init__(self):
        self.dual_vector = np.asarray(self.dual_vector, dtype=float).reshape(-1)
        if self.dual_vector.shape[0] != self.model.n:
            raise ValueError("dual vector length does not match the model")

    def value(self, x) -> float:
        return float(self.model.feature(x) @ self.dual_vector)

    def gradient(self, x) -> np.ndarray:
        return self.model.feature_jacobian(x).T @ self.dual_vector

    def hessian(self, x) -> np.ndarray:
        return self.model.hessian_contract(x, self.dual_vector)

    def values_at(self, points: np.ndarray) -> np.ndarray:
        return self.model.feature_matrix(points).T @ self.dual_vector

    def derivative(self, x, order: int) -> float:
        """Order-q derivative of eta; exact, 1-D Fourier models only."""
        if not isinstance(self.model, FourierModel):
            raise NotImplementedError(
                "higher-order certificate derivatives need trigonometric features")
        return float(self.model.feature_derivative(x, order) @ self.dual_vector)


def certificate_eval(cert: Certificate, x) -> tuple[float, np.ndarray, np.ndarray]:
    """(value, gradient, hessian) of the certificate at x."""
    return cert.value(x), cert.gradient(x), cert.hessian(x)


def complex_real_map(f_c: int, direction: str = "to_real") -> np.ndarray:
    """Unitary matrix between complex exponential moments and real features.

    ``to_real`` maps the vector of moments (integral of exp(-2i pi l x),
    l = -f_c..f_c, ascending) of a real measure to its real feature vector
    (constant, sine block, cosine block). ``to_complex`` is the inverse.
    The map is unitary, so it preserves the Euclidean norm.
    """
    if f_c < 0:
        raise ValueError("cutoff frequency must be >= 0")
    n = 2 * f_c + 1
    U = np.zeros((n, n), dtype=complex)

    def col(ell):  # index of frequency ell in the ascending moment vector
        return ell + f_c

    U[0, col(0)] = 1.0
    for ell in range(1, f_c + 1):
        # sqrt(2) sin(2 pi l x) = (c_{-l} - c_l) / (i sqrt(2))
        U[ell, col(-ell)] = -1j / np.sqrt(2.0)
        U[ell, col(ell)] = 1j / np.sqrt(2.0)
        # sqrt(2) cos(2 pi l x) = (c_l + c_{-l}) / sqrt(2)
        U[f_c + ell, col(-ell)] = 1.0 / np.sqrt(2.0)
        U[f_c + ell, col(ell)] = 1.0 / np.sqrt(2.0)
    if direction == "to_real":
        return U
    if direction == "to_complex":
        return U.conj().T
    raise ValueError(f"unknown direction {direction!r}")


def complex_exponential_moments(measure: DiscreteMeasure, f_c: int) -> np.ndarray:
    """Moments (sum_j beta_j exp(-2i pi l x_j))_{l=-f_c..f_c} of a measure."""
    ells = np.arange(-f_c, f_c + 1)
    if measure.k == 0:
        return np.zeros(2 * f_c + 1, dtype=complex)
    phases = np.exp(-2j * np.pi * np.outer(ells, measure.positions[:, 0]))
    return phases @ measure.amplitudes
