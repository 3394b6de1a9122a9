"""Input validation helpers shared by the estimators and the CLI."""

from __future__ import annotations

import numpy as np

from .models import ForwardModel


def as_float_vector(value, name: str, length: int | None = None) -> np.ndarray:
    arr = np.asarray(value, dtype=float).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    if length is not None and arr.shape[0] != length:
        raise ValueError(f"{name} must have length {length}, got {arr.shape[0]}")
    return arr


def check_observation(model: ForwardModel, y) -> np.ndarray:
    """Validate an observation vector against a model."""
    if model is None:
        raise ValueError("a forward model is required before fitting")
    return as_float_vector(y, "y", model.n)


def check_positive(name: str, value: float) -> float:
    value = float(value)
    if not value > 0:
        raise ValueError(f"{name} must be > 0, got {value}")
    return value
