"""Sliding Frank-Wolfe solver for sparse regression over measures.

Solves min over measures of 0.5*||Phi m - y||^2 + lam*|m|_TV by alternating
spike insertion at the certificate argmax with joint local refinement of
positions and amplitudes, plus a positivity-constrained variant where the
penalty is replaced by the constraint m >= 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .domain import POSITION_MERGE_TOL, DiscreteMeasure
from .models import Certificate, ForwardModel, FourierModel, apply_forward

__all__ = [
    "SolverOptions", "SolveResult", "solve_blasso", "solve_positive_blasso",
    "lasso_on_support", "slide_local", "primal_dual_gap",
    "prune_to_injective", "closed_form_on_extended_support",
]


@dataclass
class SolverOptions:
    """Tuning knobs for the sliding Frank-Wolfe loop.

    ``duality_gap_tolerance`` is relative: a solve stops once the gap is
    below tolerance * (||y||^2 + eps). All randomness (multi-start points)
    derives from ``seed``.
    """

    max_outer_iterations: int = 50
    certificate_grid_size: int = 4096
    multistart_points: int = 64
    local_max_steps: int = 400
    local_gradient_tolerance: float = 1e-12
    newton_polish: bool = True
    duality_gap_tolerance: float = 1e-8
    insertion_tolerance: float = 1e-10
    amplitude_prune_tolerance: float = 1e-10
    position_merge_tolerance: float = POSITION_MERGE_TOL
    merge_attempt_radius: float | None = None
    positivity_tolerance: float = 1e-8
    stagnation_window: int = 60
    seed: int = 0

    def __post_init__(self):
        for name in ("local_gradient_tolerance", "duality_gap_tolerance",
                     "insertion_tolerance", "amplitude_prune_tolerance",
                     "position_merge_tolerance", "positivity_tolerance"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.certificate_grid_size < 2:
            raise ValueError("certificate_grid_size must be >= 2")


@dataclass
class SolveResult:
    measure: DiscreteMeasure
    certificate: Certificate
    duality_gap: float
    outer_iterations: int
    converged: bool
    objective_value: float


# ---------------------------------------------------------------------------
# Certificate search (spike insertion / sup-norm estimation)

@dataclass
class _SearchResult:
    x_star: np.ndarray        # best point found
    eta_star: float           # eta at that point
    score_star: float         # search score there (|eta| or -eta)
    sup_abs: float            # best estimate of sup |eta| over all candidates


def _scan_features(model: ForwardModel, grid_size: int):
    if isinstance(model, FourierModel):
        return model.grid_features(grid_size)
    pts = model.domain.uniform_grid(grid_size)
    return pts, model.feature_matrix(pts)


def _polish_batch_1d(model, p, xs, sgn, grid_step, max_steps=20):
    """Damped Newton on eta' at many points at once (local maxima of
    sgn*eta); steps are clipped to one grid cell and only kept while the
    target value does not decrease."""
    xs = np.asarray(xs, dtype=float).reshape(-1).copy()
    sgn = np.asarray(sgn, dtype=float).reshape(-1)
    vals = model.feature_matrix(xs.reshape(-1, 1)).T @ p
    for _ in range(max_steps):
        d1 = model.jacobian_columns(xs.reshape(-1, 1)).T @ p
        d2 = model.hessian_contract_batch(xs.reshape(-1, 1), p)[:, 0, 0]
        concave = sgn * d2 < 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(concave, -d1 / d2, 0.0)
        step = np.clip(step, -grid_step, grid_step)
        if not np.any(np.abs(step) > 1e-16):
            break
        xs_new = model.domain.clip(xs.reshape(-1, 1) + step.reshape(-1, 1))[:, 0]
        vals_new = model.feature_matrix(xs_new.reshape(-1, 1)).T @ p
        improved = sgn * vals_new >= sgn * vals - 1e-15
        xs = np.where(improved, xs_new, xs)
        vals = np.where(improved, vals_new, vals)
        if np.max(np.abs(step[improved]), initial=0.0) < 1e-15:
            break
    return xs, vals


def _local_maxima_1d(score: np.ndarray, circular: bool) -> np.ndarray:
    if circular:
        left = np.roll(score, 1)
        right = np.roll(score, -1)
        mask = (score >= left) & (score >= right)
    else:
        mask = np.zeros_like(score, dtype=bool)
        mask[1:-1] = (score[1:-1] >= score[:-2]) & (score[1:-1] >= score[2:])
        mask[0] = score[0] >= score[1]
        mask[-1] = score[-1] >= score[-2]
    return np.flatnonzero(mask)


def _search_1d(model, p, opts, mode, include_points):
    pts, G = _scan_features(model, opts.certificate_grid_size)
    eta = G.T @ p
    score = np.abs(eta) if mode == "abs" else -eta
    circular = model.domain.geometry == "torus"
    cand_idx = _local_maxima_1d(score, circular)
    order = np.argsort(score[cand_idx])[::-1]
    cand_idx = cand_idx[order[:12]]
    grid_step = 1.0 / len(pts) if circular else (
        float(pts[-1, 0] - pts[0, 0]) / max(len(pts) - 1, 1))

    xs = [pts[i, 0] for i in cand_idx]
    vs = [eta[i] for i in cand_idx]
    if include_points is not None and len(include_points):
        extra = np.atleast_2d(include_points)
        xs.extend(extra[:, 0])
        vs.extend(model.feature_matrix(extra).T @ p)
    xs = np.array(xs)
    vs = np.array(vs)
    sgn = -np.ones_like(vs) if mode == "neg" else np.where(vs >= 0, 1.0, -1.0)
    xs, vals = _polish_batch_1d(model, p, xs, sgn, grid_step)
    scores = np.abs(vals) if mode == "abs" else -vals
    best = int(np.argmax(scores))
    return _SearchResult(xs[best].reshape(1), float(vals[best]),
                         float(scores[best]), float(np.max(np.abs(vals))))


def _search_multistart(model, p, opts, mode, include_points, rng):
    d = model.domain.dim
    starts = rng.standard_normal((opts.multistart_points, d))
    starts /= np.maximum(np.linalg.norm(starts, axis=1, keepdims=True), 1e-30)
    if include_points is not None and len(include_points):
        starts = np.vstack([starts, np.atleast_2d(include_points)])
    normalize = bool(getattr(model, "normalize", False))

    def evaluate(points):
        if hasattr(model, "certificate_batch"):
            return model.certificate_batch(points, p)
        vals = np.array([float(model.feature(x) @ p) for x in points])
        grads = np.array([model.feature_jacobian(x).T @ p for x in points])
        return vals, grads

    x = starts.copy()
    vals, grads = evaluate(x)
    score = np.abs(vals) if mode == "abs" else -vals
    step = np.full(x.shape[0], 0.5)
    for _ in range(80):
        sgn = np.sign(vals) if mode == "abs" else -np.ones_like(vals)
        sgn[sgn == 0] = 1.0
        direction = sgn[:, None] * grads
        gnorm = np.linalg.norm(direction, axis=1, keepdims=True)
        direction = direction / np.maximum(gnorm, 1e-30)
        moved = x + step[:, None] * direction
        if normalize:
            nrm = np.linalg.norm(moved, axis=1, keepdims=True)
            moved = moved / np.maximum(nrm, 1e-30)
        else:
            moved = np.clip(moved, model.domain.lower, model.domain.upper)
        new_vals, new_grads = evaluate(moved)
        new_score = np.abs(new_vals) if mode == "abs" else -new_vals
        better = new_score > score
        x[better] = moved[better]
        vals[better] = new_vals[better]
        grads[better] = new_grads[better]
        score[better] = new_score[better]
        step[better] *= 1.3
        step[~better] *= 0.5
        if np.all(step < 1e-12):
            break
    best = int(np.argmax(score))
    sup_abs = float(np.max(np.abs(vals)))
    return _SearchResult(x[best], float(vals[best]), float(score[best]), sup_abs)


def _certificate_search(model, p, opts, mode="abs", include_points=None,
                        rng=None) -> _SearchResult:
    """Maximize |eta| (mode "abs") or -eta (mode "neg"), eta = Phi^* p."""
    if model.domain.dim == 1:
        return _search_1d(model, p, opts, mode, include_points)
    if rng is None:
        rng = np.random.default_rng(opts.seed)
    return _search_multistart(model, p, opts, mode, include_points, rng)


# ---------------------------------------------------------------------------
# Finite-support amplitude problems (proximal gradient)

def _fista(X, y, lam, tol, max_iter, nonneg=False, beta0=None):
    """Accelerated proximal gradient for the fixed-support problem.

    Minimizes 0.5*||X b - y||^2 + lam*||b||_1 (or the nonnegative
    least-squares problem when ``nonneg``) to KKT residual <= tol.
    """
    k = X.shape[1]
    if k == 0:
        return np.zeros(0)
    G = X.T @ X
    Xty = X.T @ y
    L = float(np.linalg.eigvalsh(G)[-1]) if k > 1 else float(G[0, 0])
    L = max(L, 1e-30)
    step = 1.0 / L

    def prox(v):
        if nonneg:
            return np.maximum(v, 0.0)
        return np.sign(v) * np.maximum(np.abs(v) - lam * step, 0.0)

    def kkt_residual(b):
        g = G @ b - Xty
        if nonneg:
            active = b > 0
            res = np.where(active, np.abs(g), np.maximum(-g, 0.0))
        else:
            active = b != 0
            res = np.where(active, np.abs(g + lam * np.sign(b)),
                           np.maximum(np.abs(g) - lam, 0.0))
        return float(np.max(res)) if res.size else 0.0

    def exact_polish(b):
        # Solve the stationarity system on the detected active set; keep it
        # only when the signs and the inactive conditions check out.
        active = b != 0 if not nonneg else b > 0
        if not np.any(active):
            return b if kkt_residual(b) <= tol else None
        idx = np.flatnonzero(active)
        Gaa = G[np.ix_(idx, idx)]
        rhs = Xty[idx] - (0.0 if nonneg else lam * np.sign(b[idx]))
        try:
            sol = np.linalg.solve(Gaa, rhs)
        except np.linalg.LinAlgError:
            return None
        if not nonneg and np.any(np.sign(sol) != np.sign(b[idx])):
            return None
        if nonneg and np.any(sol <= 0):
            return None
        cand = np.zeros_like(b)
        cand[idx] = sol
        return cand if kkt_residual(cand) <= tol else None

    b = np.zeros(k) if beta0 is None else np.asarray(beta0, dtype=float).copy()
    z = b.copy()
    t = 1.0
    for it in range(max_iter):
        g = G @ z - Xty
        b_new = prox(z - step * g)
        if np.dot(z - b_new, b_new - b) > 0:  # adaptive restart
            t = 1.0
            z = b_new
        else:
            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            z = b_new + ((t - 1.0) / t_new) * (b_new - b)
            t = t_new
        b = b_new
        if it % 8 == 0 or it == max_iter - 1:
            res = kkt_residual(b)
            if res <= tol:
                return b
            if res <= 1e6 * tol:
                polished = exact_polish(b)
                if polished is not None:
                    return polished
    polished = exact_polish(b)
    return polished if polished is not None else b


def lasso_on_support(model: ForwardModel, positions, y, lam,
                     tol: float = 1e-10, max_iter: int = 50000,
                     beta0=None) -> np.ndarray:
    """Amplitudes minimizing 0.5*||Phi_X b - y||^2 + lam*||b||_1 on fixed X."""
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    if positions.shape[0] == 0:
        return np.zeros(0)
    X = model.feature_matrix(positions)
    return _fista(X, y, lam, tol, max_iter, beta0=beta0)


def nonnegative_on_support(model: ForwardModel, positions, y,
                           tol: float = 1e-10, max_iter: int = 50000,
                           beta0=None) -> np.ndarray:
    """Nonnegative least-squares amplitudes on a fixed support."""
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    if positions.shape[0] == 0:
        return np.zeros(0)
    X = model.feature_matrix(positions)
    return _fista(X, y, 0.0, tol, max_iter, nonneg=True, beta0=beta0)


# ---------------------------------------------------------------------------
# Joint local refinement (the sliding step)

def _pack(beta, X):
    return np.concatenate([beta, X.reshape(-1)])


def _objective(model, beta, X, y, lam, signs):
    r = model.feature_matrix(X) @ beta - y
    return 0.5 * float(r @ r) + lam * float(signs @ beta)


def _gradients(model, beta, X, y, lam, signs):
    k, d = X.shape
    Phi = model.feature_matrix(X)
    jcols = model.jacobian_columns(X)  # (n, k*d), grouped per spike
    r = Phi @ beta - y
    g_beta = Phi.T @ r + lam * signs
    jr = (jcols.T @ r).reshape(k, d)
    g_pos = beta[:, None] * jr
    return g_beta, g_pos, r, Phi, jcols, jr


def _hessian(model, beta, X, r, Phi, jcols, jr):
    """Exact Hessian of the smooth-orthant objective F(beta, X)."""
    k, d = X.shape
    Jw = jcols * np.repeat(beta, d)[None, :]
    cols = np.hstack([Phi, Jw])
    H = cols.T @ cols
    zb = model.hessian_contract_batch(X, r)
    for j in range(k):
        rows = slice(k + j * d, k + (j + 1) * d)
        H[j, rows] += jr[j]
        H[rows, j] += jr[j]
        H[rows, rows] += beta[j] * zb[j]
    return H


def _cross_step(beta, direction, positive):
    """Largest step t with sign(beta + t*direction) in {sign(beta), 0}."""
    if positive:
        shrinking = (direction < 0) & (beta > 0)
    else:
        shrinking = (direction != 0) & (np.sign(beta) == -np.sign(direction))
    with np.errstate(divide="ignore", invalid="ignore"):
        steps = np.where(shrinking, -beta / direction, np.inf)
    steps = np.where(np.isfinite(steps) & (steps > 0), steps, np.inf)
    t = float(np.min(steps)) if steps.size else np.inf
    zeroed = np.isclose(steps, t) if np.isfinite(t) else np.zeros_like(beta, bool)
    return t, zeroed


def _slide(model, measure, y, lam, opts, positive=False):
    """Refine (beta, X) inside the current sign orthant.

    A short backtracking gradient-descent phase followed by adaptively
    damped Newton steps on the same objective (the damping interpolates
    back to gradient descent when the Hessian is ill conditioned). Stops
    at the first sign boundary. Returns (measure, hit_boundary,
    gradient_norm); the objective never increases.
    """
    k = measure.k
    if k == 0:
        return measure, False, 0.0
    beta = measure.amplitudes.copy()
    X = measure.positions.copy()
    signs = np.zeros(k) if positive else np.sign(beta)
    obj = _objective(model, beta, X, y, lam, signs)
    scale = 1.0 + abs(obj)
    grad_tol = opts.local_gradient_tolerance * scale
    u_prev = None
    g_prev = None
    step = None
    g_norm = np.inf

    gd_steps = min(opts.local_max_steps,
                   25 if opts.newton_polish else opts.local_max_steps)
    if opts.newton_polish:
        g_beta0, g_pos0, *_ = _gradients(model, beta, X, y, lam, signs)
        g0 = float(np.linalg.norm(
            np.concatenate([g_beta0, g_pos0.reshape(-1)])))
        if g0 <= 1e-3 * scale:
            gd_steps = 0  # near-stationary start: go straight to Newton
    for _ in range(gd_steps):
        g_beta, g_pos, r, Phi, jcols, jr = _gradients(model, beta, X, y, lam, signs)
        g = np.concatenate([g_beta, g_pos.reshape(-1)])
        g_norm = float(np.linalg.norm(g))
        if g_norm <= grad_tol:
            return DiscreteMeasure(X, beta), False, g_norm
        u = _pack(beta, X)
        if u_prev is not None:
            du = u - u_prev
            dg = g - g_prev
            denom = float(du @ dg)
            step = float(du @ du) / denom if denom > 0 else None
        if step is None or not np.isfinite(step) or step <= 0:
            step = 1.0 / (1.0 + g_norm)
        u_prev, g_prev = u, g

        t_cross, zeroed = _cross_step(beta, -g_beta, positive)
        t = step
        accepted = False
        for _bt in range(40):
            if t >= t_cross:
                beta_b = beta - t_cross * g_beta
                beta_b[zeroed] = 0.0
                X_b = model.domain.clip(X - t_cross * g_pos)
                obj_b = _objective(model, beta_b, X_b, y, lam, signs)
                if obj_b <= obj:
                    return DiscreteMeasure(X_b, beta_b), True, g_norm
                t = 0.5 * t_cross
                continue
            beta_t = beta - t * g_beta
            X_t = model.domain.clip(X - t * g_pos)
            obj_t = _objective(model, beta_t, X_t, y, lam, signs)
            if obj_t <= obj - 1e-4 * t * g_norm**2:
                beta, X, obj = beta_t, X_t, obj_t
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break  # no descent at this scale; hand over to damped Newton

    if not opts.newton_polish:
        return DiscreteMeasure(X, beta), False, g_norm

    # Damped Newton on the same objective; the Marquardt parameter mu is
    # driven by the gain ratio (actual vs. model decrease), so the step
    # interpolates between gradient descent and Newton as needed. The
    # gradient and Hessian are reused across rejected dampings. On
    # near-singular landscapes (spikes about to merge) Newton can orbit
    # the valley floor, so the best-gradient iterate is kept and the loop
    # exits once it stops improving.
    d = X.shape[1]
    mu = 0.0
    nu = 2.0
    eye = np.eye(k * (d + 1))
    evals = 0
    best = None
    stale = 0
    while evals < opts.local_max_steps:
        g_beta, g_pos, r, Phi, jcols, jr = _gradients(model, beta, X, y, lam, signs)
        g = np.concatenate([g_beta, g_pos.reshape(-1)])
        g_norm = float(np.linalg.norm(g))
        if best is None or g_norm < 0.7 * best[0]:
            best = (g_norm, beta.copy(), X.copy())
            stale = 0
        else:
            stale += 1
            if g_norm < best[0]:
                best = (g_norm, beta.copy(), X.copy())
        if g_norm <= grad_tol or stale > opts.stagnation_window:
            break
        H = _hessian(model, beta, X, r, Phi, jcols, jr)
        diag_scale = max(float(np.max(np.abs(np.diag(H)))), 1e-12)
        if mu == 0.0:
            mu = 1e-10 * diag_scale
        accepted = False
        for _reject in range(16):
            evals += 1
            try:
                delta = np.linalg.solve(H + mu * eye, -g)
            except np.linalg.LinAlgError:
                mu *= nu
                nu *= 2.0
                continue
            t_cross, zeroed = _cross_step(beta, delta[:k], positive)
            if t_cross <= 1.0:
                beta_b = beta + t_cross * delta[:k]
                beta_b[zeroed] = 0.0
                X_b = model.domain.clip(X + t_cross * delta[k:].reshape(k, d))
                obj_b = _objective(model, beta_b, X_b, y, lam, signs)
                if obj_b <= obj:
                    return DiscreteMeasure(X_b, beta_b), True, g_norm
                mu *= nu
                nu *= 2.0
                continue
            beta_t = beta + delta[:k]
            X_t = model.domain.clip(X + delta[k:].reshape(k, d))
            obj_t = _objective(model, beta_t, X_t, y, lam, signs)
            predicted = -(float(g @ delta) + 0.5 * float(delta @ (H @ delta)))
            actual = obj - obj_t
            if obj_t <= obj + 1e-15 * scale:
                beta, X, obj = beta_t, X_t, obj_t
                rho = actual / predicted if predicted > 0 else 1.0
                mu *= max(1.0 / 3.0, 1.0 - (2.0 * rho - 1.0) ** 3)
                nu = 2.0
                accepted = True
                break
            mu *= nu
            nu *= 2.0
        if not accepted:
            break  # plateau: no acceptable step at any damping

    if best is not None and best[0] < g_norm:
        g_norm, beta, X = best[0], best[1], best[2]
    return DiscreteMeasure(X, beta), False, g_norm


def slide_local(model: ForwardModel, measure: DiscreteMeasure, y, lam,
                opts: SolverOptions | None = None) -> DiscreteMeasure:
    """Local joint refinement of a measure; stops at sign boundaries."""
    opts = opts or SolverOptions()
    return _slide(model, measure, y, lam, opts)[0]


# ---------------------------------------------------------------------------
# Duality gap

def _gap_from_sup(model, measure, y, lam, sup_abs):
    residual = y - apply_forward(model, measure)
    p = residual / lam
    p_feas = p / max(1.0, sup_abs)
    primal = 0.5 * float(residual @ residual) + lam * measure.total_variation
    dual = lam * float(p_feas @ y) - 0.5 * lam**2 * float(p_feas @ p_feas)
    return primal - dual


def primal_dual_gap(model: ForwardModel, measure: DiscreteMeasure, y, lam,
                    opts: SolverOptions | None = None) -> float:
    """Primal value minus the best feasible-rescaled dual value (>= 0)."""
    opts = opts or SolverOptions()
    residual = y - apply_forward(model, measure)
    p = residual / lam
    search = _certificate_search(model, p, opts, mode="abs",
                                 include_points=measure.positions)
    return _gap_from_sup(model, measure, y, lam, search.sup_abs)


# ---------------------------------------------------------------------------
# Support surgery

def prune_to_injective(model: ForwardModel, measure: DiscreteMeasure,
                       rank_tol: float = 1e-10) -> DiscreteMeasure:
    """Reduce the support until the feature columns are injective.

    Moves along kernel directions of Phi_X until amplitudes hit zero, which
    preserves Phi m exactly and the total-variation norm of solutions;
    strictly decreases k whenever Phi_X is rank deficient.
    """
    m = measure.copy()
    while m.k > 0:
        X = model.feature_matrix(m.positions)
        svals = np.linalg.svd(X, compute_uv=False)
        if svals[-1] > rank_tol * svals[0]:
            break
        _, _, Vt = np.linalg.svd(X)
        b = Vt[-1]
        s = np.sign(m.amplitudes)
        s[s == 0] = 1.0
        best = None
        for direction in (b, -b):
            opposing = s * direction < 0
            if not np.any(opposing):
                continue
            steps = np.abs(m.amplitudes[opposing]) / np.abs(direction[opposing])
            t = float(np.min(steps))
            if best is None or t < best[0]:
                best = (t, direction)
        if best is None:
            break  # kernel direction never opposes any sign; cannot shrink
        t, direction = best
        amp = m.amplitudes + t * direction
        amp[np.abs(amp) <= 1e-12 * max(1.0, np.max(np.abs(amp)))] = 0.0
        keep = amp != 0.0
        m = DiscreteMeasure(m.positions[keep], amp[keep])
    return m


def closed_form_on_extended_support(model: ForwardModel, positions, y, lam,
                                    signs) -> np.ndarray:
    """Pseudo-inverse amplitudes on a fixed extended support.

    b = pinv(Phi_E) @ (y - pinv(Phi_E^T) @ (lam * signs)); with lam = 0 this
    reduces to the least-squares amplitudes.
    """
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    if positions.shape[0] == 0:
        return np.zeros(0)
    signs = np.asarray(signs, dtype=float).reshape(-1)
    if signs.shape[0] != positions.shape[0]:
        raise ValueError("one sign per support point is required")
    X = model.feature_matrix(positions)
    X_pinv = np.linalg.pinv(X, rcond=1e-10)
    return X_pinv @ (np.asarray(y, dtype=float) - X_pinv.T @ (lam * signs))


# ---------------------------------------------------------------------------
# Main solvers

def _value(model, measure, y, lam):
    r = apply_forward(model, measure) - np.asarray(y, dtype=float)
    return 0.5 * float(r @ r) + lam * measure.total_variation


def _fit_and_slide(model, measure, y, lam, opts, positive):
    """Amplitude solve + slide, looping when a sign boundary is hit.

    Returns (measure, stuck) where ``stuck`` means the slide exhausted its
    budget away from both stationarity and the orthant boundary.
    """
    m = measure
    stuck = False
    for _ in range(2 * max(m.k, 1) + 2):
        if m.k == 0:
            return m, False
        if positive:
            amp = nonnegative_on_support(model, m.positions, y,
                                         beta0=m.amplitudes)
        else:
            amp = lasso_on_support(model, m.positions, y, lam,
                                   beta0=m.amplitudes)
        m = DiscreteMeasure(m.positions, amp)
        m = m.prune(opts.amplitude_prune_tolerance)
        if m.k == 0:
            return m, False
        m, hit_boundary, g_norm = _slide(model, m, y, lam, opts,
                                         positive=positive)
        m = m.prune(opts.amplitude_prune_tolerance)
        m = m.merge_close(model.domain, opts.position_merge_tolerance)
        if not hit_boundary:
            obj = _value(model, m, y, lam if not positive else 0.0)
            stuck = g_norm > opts.local_gradient_tolerance * (1.0 + abs(obj))
            return m, stuck
    return m, stuck


def _merge_radius(model, opts):
    if opts.merge_attempt_radius is not None:
        return opts.merge_attempt_radius
    if model.domain.dim == 1:
        return 32.0 / opts.certificate_grid_size
    return 1e-3


def _consolidate(model, measure, y, lam, opts, positive):
    """Try merging or dropping one spike of each close pair.

    Split spikes make the refinement landscape a narrow valley where
    descent crawls; a merge candidate is accepted only when the refitted
    objective does not increase, so optimality is never traded away.
    """
    radius = _merge_radius(model, opts)
    m = measure
    value = _value(model, m, y, lam)
    while m.k >= 2:
        diffs = m.positions[:, None, :] - m.positions[None, :, :]
        if model.domain.geometry == "torus":
            diffs = diffs - np.round(diffs)
        dist = np.sqrt(np.sum(diffs**2, axis=-1))
        iu = np.triu_indices(m.k, k=1)
        close = [(dist[i, j], i, j) for i, j in zip(*iu) if dist[i, j] <= radius]
        if not close:
            break
        _, i, j = min(close)
        heavy, light = (i, j) if abs(m.amplitudes[i]) >= abs(m.amplitudes[j]) else (j, i)
        keep = np.ones(m.k, dtype=bool)
        keep[light] = False
        merged_amp = m.amplitudes.copy()
        merged_amp[heavy] += m.amplitudes[light]
        candidates = [
            DiscreteMeasure(m.positions[keep], merged_amp[keep]),
            DiscreteMeasure(m.positions[keep], m.amplitudes[keep]),
        ]
        improved = False
        cand_opts = replace(opts, local_max_steps=min(40, opts.local_max_steps))
        for cand in candidates:
            cand, _ = _fit_and_slide(model, cand, y, lam, cand_opts, positive)
            cand_value = _value(model, cand, y, lam)
            if cand_value <= value + 1e-12 * (1.0 + abs(value)):
                m, value, improved = cand, cand_value, True
                break
        if not improved:
            break
    return m


def _refine_support(model, measure, y, lam, opts, positive):
    m, stuck = _fit_and_slide(model, measure, y, lam, opts, positive)
    if stuck and m.k >= 2:
        m = _consolidate(model, m, y, lam, opts, positive)
        m, _ = _fit_and_slide(model, m, y, lam, opts, positive)
    return m


def solve_blasso(model: ForwardModel, y, lam: float,
                 opts: SolverOptions | None = None,
                 warm_start: DiscreteMeasure | None = None) -> SolveResult:
    """Sliding Frank-Wolfe solve of the penalized problem.

    Each outer iteration inserts a spike at the argmax of the certificate
    |eta|, re-solves the amplitudes, slides positions and amplitudes
    jointly, and prunes. Stops when the duality gap falls below the
    relative tolerance; non-convergence is reported on the result, not
    raised. The returned measure has at most n spikes.
    """
    if lam <= 0:
        raise ValueError(f"lambda must be > 0, got {lam}")
    opts = opts or SolverOptions()
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.shape[0] != model.n:
        raise ValueError(f"y has length {y.shape[0]}, model expects {model.n}")
    rng = np.random.default_rng(opts.seed)
    gap_tol = opts.duality_gap_tolerance * (1e-30 + float(y @ y))

    # During support growth a capped refinement is enough; full precision
    # only matters once the certificate is nearly feasible.
    loose_opts = replace(opts, local_max_steps=min(40, opts.local_max_steps))

    m = warm_start.copy() if warm_start is not None else \
        DiscreteMeasure.zero(model.domain.dim)
    if warm_start is not None and m.k:
        m = _refine_support(model, m, y, lam, opts, positive=False)

    gap = np.inf
    converged = False
    iterations = 0
    tight = warm_start is not None
    for _outer in range(opts.max_outer_iterations):
        iterations += 1
        residual = y - apply_forward(model, m)
        p = residual / lam
        search = _certificate_search(model, p, opts, mode="abs",
                                     include_points=m.positions, rng=rng)
        gap = _gap_from_sup(model, m, y, lam, search.sup_abs)
        if gap <= gap_tol:
            converged = True
            break
        if not tight and search.sup_abs <= 1.05:
            tight = True
            m = _refine_support(model, m, y, lam, opts, positive=False)
            residual = y - apply_forward(model, m)
            p = residual / lam
            search = _certificate_search(model, p, opts, mode="abs",
                                         include_points=m.positions, rng=rng)
            gap = _gap_from_sup(model, m, y, lam, search.sup_abs)
            if gap <= gap_tol:
                converged = True
                break
        if search.sup_abs <= 1.0 + opts.insertion_tolerance:
            break  # certificate feasible but gap not met: locally stuck
        x_new = search.x_star
        near = m.k and min(model.domain.distance(x_new, x) for x in m.positions) \
            <= opts.position_merge_tolerance
        if near:
            break  # argmax sits on an existing spike; inserting cannot help
        m = DiscreteMeasure(
            np.vstack([m.positions, x_new.reshape(1, -1)]) if m.k
            else x_new.reshape(1, -1),
            np.append(m.amplitudes, 0.0))
        m = _refine_support(model, m, y, lam,
                            opts if tight else loose_opts, positive=False)

    if m.k > model.n:
        m = prune_to_injective(model, m)
    residual = y - apply_forward(model, m)
    certificate = Certificate(model, residual / lam, lam)
    objective = 0.5 * float(residual @ residual) + lam * m.total_variation
    return SolveResult(measure=m, certificate=certificate, duality_gap=float(gap),
                       outer_iterations=iterations, converged=converged,
                       objective_value=objective)


def solve_positive_blasso(model: ForwardModel, y,
                          opts: SolverOptions | None = None,
                          warm_start: DiscreteMeasure | None = None) -> SolveResult:
    """Frank-Wolfe solve of nonnegative regression over measures.

    Minimizes 0.5*||Phi m - y||^2 subject to m >= 0. Insertion happens at
    the minimizer of eta = Phi^*(Phi m - y) while it is significantly
    negative; at convergence eta >= -tol everywhere and vanishes on the
    support. The returned certificate stores p = Phi m - y (with lam = 1),
    so its eta is exactly that function.
    """
    opts = opts or SolverOptions()
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.shape[0] != model.n:
        raise ValueError(f"y has length {y.shape[0]}, model expects {model.n}")
    rng = np.random.default_rng(opts.seed)
    tol = opts.positivity_tolerance

    m = warm_start.copy() if warm_start is not None else \
        DiscreteMeasure.zero(model.domain.dim)
    converged = False
    iterations = 0
    min_eta = -np.inf
    for _outer in range(opts.max_outer_iterations):
        iterations += 1
        p = apply_forward(model, m) - y
        search = _certificate_search(model, p, opts, mode="neg",
                                     include_points=m.positions, rng=rng)
        min_eta = -search.score_star  # score is -eta
        if min_eta >= -tol:
            converged = True
            break
        x_new = search.x_star
        near = m.k and min(model.domain.distance(x_new, x) for x in m.positions) \
            <= opts.position_merge_tolerance
        if not near:
            m = DiscreteMeasure(
                np.vstack([m.positions, x_new.reshape(1, -1)]) if m.k
                else x_new.reshape(1, -1),
                np.append(m.amplitudes, 0.0))
        m = _refine_support(model, m, y, 0.0, opts, positive=True)
        if near:
            break

    p = apply_forward(model, m) - y
    certificate = Certificate(model, p, 1.0)
    primal = 0.5 * float(p @ p)
    dual = 0.5 * float(y @ y) - 0.5 * float((p + y) @ (p + y))
    return SolveResult(measure=m, certificate=certificate,
                       duality_gap=primal - dual,
                       outer_iterations=iterations, converged=converged,
                       objective_value=primal)
