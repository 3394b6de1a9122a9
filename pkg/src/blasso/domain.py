"""Parameter domains and discrete (finitely supported) measures."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

#: Positions closer than this (wrapped distance) are considered one spike.
POSITION_MERGE_TOL = 1e-7


@dataclass(frozen=True)
class DomainSpec:
    """Parameter domain: a flat torus or an axis-aligned box in R^d.

    On the torus every coordinate lives in [0, 1) and distances wrap;
    on a box the bounds are inclusive and nothing wraps.
    """

    dim: int
    geometry: str  # "torus" or "box"
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"domain dimension must be >= 1, got {self.dim}")
        if self.geometry not in ("torus", "box"):
            raise ValueError(f"unknown geometry {self.geometry!r}")
        if self.geometry == "box":
            lower = np.asarray(self.lower, dtype=float).reshape(self.dim)
            upper = np.asarray(self.upper, dtype=float).reshape(self.dim)
            if not np.all(lower < upper):
                raise ValueError("box bounds must satisfy lower < upper")
            object.__setattr__(self, "lower", lower)
            object.__setattr__(self, "upper", upper)

    @staticmethod
    def torus(dim: int = 1) -> "DomainSpec":
        return DomainSpec(dim=dim, geometry="torus")

    @staticmethod
    def box(lower, upper) -> "DomainSpec":
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        return DomainSpec(dim=lower.size, geometry="box", lower=lower, upper=upper)

    @staticmethod
    def cube(dim: int, radius: float) -> "DomainSpec":
        r = float(radius)
        return DomainSpec.box(-r * np.ones(dim), r * np.ones(dim))

    def wrap(self, x: np.ndarray) -> np.ndarray:
        """Map points to the canonical fundamental domain (torus only)."""
        x = np.asarray(x, dtype=float)
        if self.geometry == "torus":
            return np.mod(x, 1.0)
        return x

    def clip(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.geometry == "torus":
            return np.mod(x, 1.0)
        return np.clip(x, self.lower, self.upper)

    def contains(self, x: np.ndarray, atol: float = 0.0) -> bool:
        if self.geometry == "torus":
            return True
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - atol) and np.all(x <= self.upper + atol))

    def difference(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Shortest displacement a - b, wrapped per coordinate on the torus."""
        d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
        if self.geometry == "torus":
            d = d - np.round(d)
        return d

    def distance(self, a: np.ndarray, b: np.ndarray) -> float:
        return float(np.linalg.norm(self.difference(a, b)))

    def pairwise_min_distance(self, points: np.ndarray) -> float:
        """Smallest wrapped distance between distinct rows; inf for k < 2."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        k = pts.shape[0]
        if k < 2:
            return np.inf
        diff = pts[:, None, :] - pts[None, :, :]
        if self.geometry == "torus":
            diff = diff - np.round(diff)
        dist = np.sqrt(np.sum(diff**2, axis=-1))
        iu = np.triu_indices(k, k=1)
        return float(dist[iu].min())

    def uniform_grid(self, size: int) -> np.ndarray:
        """Uniform scan grid, shape (size, dim). Only meaningful for dim=1."""
        if self.dim != 1:
            raise ValueError("uniform_grid is only defined for 1-D domains")
        if self.geometry == "torus":
            g = np.arange(size) / size
        else:
            g = np.linspace(self.lower[0], self.upper[0], size)
        return g.reshape(-1, 1)


@dataclass
class DiscreteMeasure:
    """A measure made of k weighted point masses.

    positions has shape (k, d) and amplitudes shape (k,); k = 0 is the
    zero measure. Positions are expected to be pairwise distinct (wrapped
    distance above the merge tolerance); solver routines maintain this.
    """

    positions: np.ndarray = field(default_factory=lambda: np.zeros((0, 1)))
    amplitudes: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim == 1:
            pos = pos.reshape(-1, 1)
        amp = np.asarray(self.amplitudes, dtype=float).reshape(-1)
        if pos.shape[0] != amp.shape[0]:
            raise ValueError(
                f"{pos.shape[0]} positions but {amp.shape[0]} amplitudes"
            )
        if pos.size and not np.all(np.isfinite(pos)):
            raise ValueError("positions must be finite")
        if amp.size and not np.all(np.isfinite(amp)):
            raise ValueError("amplitudes must be finite")
        self.positions = pos
        self.amplitudes = amp

    @staticmethod
    def zero(dim: int = 1) -> "DiscreteMeasure":
        return DiscreteMeasure(np.zeros((0, dim)), np.zeros(0))

    @property
    def k(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    @property
    def total_variation(self) -> float:
        """Total mass |m|(domain) = l1 norm of the amplitudes."""
        return float(np.sum(np.abs(self.amplitudes)))

    def copy(self) -> "DiscreteMeasure":
        return DiscreteMeasure(self.positions.copy(), self.amplitudes.copy())

    def prune(self, tol: float) -> "DiscreteMeasure":
        """Drop spikes with |amplitude| <= tol."""
        keep = np.abs(self.amplitudes) > tol
        return DiscreteMeasure(self.positions[keep], self.amplitudes[keep])

    def merge_close(self, domain: DomainSpec,
                    tol: float = POSITION_MERGE_TOL) -> "DiscreteMeasure":
        """Merge spikes closer than tol; the heavier spike keeps its position."""
        if self.k < 2:
            return self
        order = np.argsort(-np.abs(self.amplitudes), kind="stable")
        kept_pos: list[np.ndarray] = []
        kept_amp: list[float] = []
        for i in order:
            x, a = self.positions[i], self.amplitudes[i]
            for j, xk in enumerate(kept_pos):
                if domain.distance(x, xk) <= tol:
                    kept_amp[j] += a
                    break
            else:
                kept_pos.append(x)
                kept_amp.append(a)
        return DiscreteMeasure(np.array(kept_pos), np.array(kept_amp))

    def min_separation(self, domain: DomainSpec) -> float:
        return domain.pairwise_min_distance(self.positions)

    def require_in_domain(self, domain: DomainSpec) -> None:
        for x in self.positions:
            if not domain.contains(x):
                raise DomainError(f"position {x} outside the box domain")
