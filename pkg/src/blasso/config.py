"""Run configuration: schema validation and object construction.

A run is described by one TOML file. Unknown keys are rejected by name so
typos cannot silently change an experiment.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import _toml
from .domain import DiscreteMeasure
from .errors import ConfigError
from .models import ForwardModel, build_fourier_model, build_relu_model
from .solver import SolverOptions

_TOP_KEYS = {"seed", "workers", "model", "truth", "noise", "sweep", "solve",
             "solver", "grid", "output"}
_MODEL_KEYS = {"kind", "f_c", "n", "d", "weight_seed", "normalize", "box_radius"}
_TRUTH_KEYS = {"amplitudes", "positions", "mu", "spikes", "position_scale",
               "amplitude_scale", "truth_seed", "nonnegative"}
_NOISE_KEYS = {"sigma"}
_SWEEP_KEYS = {"lambdas", "replicates"}
_SOLVE_KEYS = {"lambda"}
_SOLVER_KEYS = {"max_outer_iterations", "certificate_grid_size",
                "multistart_points", "duality_gap_tolerance",
                "amplitude_prune_tolerance", "position_merge_tolerance",
                "positivity_tolerance", "local_max_steps", "seed"}
_GRID_KEYS = {"sizes"}
_OUTPUT_KEYS = {"dir"}


@dataclass
class RunConfig:
    """Validated run description; build_* methods create the objects."""

    raw: dict[str, Any]
    seed: int
    workers: int
    sigma: float
    lambdas: list[float]
    replicates: int
    solve_lambda: float | None
    grid_sizes: list[int]
    output_dir: str
    solver: SolverOptions = field(default_factory=SolverOptions)

    def build_model(self) -> ForwardModel:
        section = self.raw["model"]
        kind = section["kind"]
        if kind == "fourier":
            return build_fourier_model(int(section["f_c"]))
        rng = np.random.default_rng(int(section.get("weight_seed", 0)))
        weights = rng.standard_normal((int(section["n"]), int(section["d"])))
        return build_relu_model(weights,
                                normalize=bool(section.get("normalize", True)),
                                box_radius=section.get("box_radius"))

    def build_truth(self, model: ForwardModel):
        """(true_measure, mu) with exactly one of the two set."""
        section = self.raw["truth"]
        if "mu" in section:
            mu = np.asarray(section["mu"], dtype=float).reshape(-1)
            if mu.shape[0] != model.n:
                raise ConfigError(
                    f"truth.mu has length {mu.shape[0]}, model expects {model.n}")
            return None, mu
        if "positions" in section:
            positions = np.asarray(section["positions"], dtype=float)
            if positions.ndim == 1:
                positions = positions.reshape(-1, 1)
            amplitudes = np.asarray(section["amplitudes"], dtype=float)
            return DiscreteMeasure(positions, amplitudes), None
        spikes = int(section["spikes"])
        rng = np.random.default_rng(int(section.get("truth_seed", 1)))
        scale = float(section.get("position_scale", 1.0))
        amp_scale = float(section.get("amplitude_scale", 1.0))
        positions = scale * rng.standard_normal((spikes, model.domain.dim))
        amplitudes = amp_scale * rng.standard_normal(spikes)
        if section.get("nonnegative", False):
            amplitudes = np.abs(amplitudes)
        return DiscreteMeasure(positions, amplitudes), None


def _require(section: dict, key: str, where: str):
    if key not in section:
        raise ConfigError(f"missing required key '{key}' in [{where}]")
    return section[key]


def _check_keys(section: dict, allowed: set, where: str):
    for key in section:
        if key not in allowed:
            raise ConfigError(f"unknown key '{key}' in [{where}]")


def _positive(value, name) -> float:
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"'{name}' must be a number") from None
    if not value > 0:
        raise ConfigError(f"'{name}' must be > 0, got {value}")
    return value


def load_config(path: str) -> RunConfig:
    raw = _toml.load(path)
    return validate_config(raw)


def validate_config(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("configuration root must be a table")
    _check_keys(raw, _TOP_KEYS, "top level")

    model_sec = _require(raw, "model", "top level")
    _check_keys(model_sec, _MODEL_KEYS, "model")
    kind = _require(model_sec, "kind", "model")
    if kind == "fourier":
        f_c = _require(model_sec, "f_c", "model")
        if int(f_c) < 0:
            raise ConfigError("'f_c' must be >= 0")
    elif kind == "relu":
        for key in ("n", "d"):
            if int(_require(model_sec, key, "model")) < 1:
                raise ConfigError(f"'{key}' must be >= 1")
    else:
        raise ConfigError(f"unknown model kind {kind!r} (use fourier or relu)")

    truth_sec = raw.get("truth", {})
    _check_keys(truth_sec, _TRUTH_KEYS, "truth")
    if truth_sec:
        has_mu = "mu" in truth_sec
        has_explicit = "positions" in truth_sec or "amplitudes" in truth_sec
        has_random = "spikes" in truth_sec
        if has_explicit and ("positions" not in truth_sec
                             or "amplitudes" not in truth_sec):
            raise ConfigError(
                "truth needs both 'positions' and 'amplitudes'")
        if sum([has_mu, has_explicit, has_random]) != 1:
            raise ConfigError(
                "truth must define exactly one of mu, positions/amplitudes, "
                "or spikes")
        if has_explicit and len(truth_sec["positions"]) != len(
                truth_sec["amplitudes"]):
            raise ConfigError(
                "truth 'positions' and 'amplitudes' lengths differ")

    noise_sec = _require(raw, "noise", "top level")
    _check_keys(noise_sec, _NOISE_KEYS, "noise")
    sigma = _positive(_require(noise_sec, "sigma", "noise"), "sigma")

    sweep_sec = raw.get("sweep", {})
    _check_keys(sweep_sec, _SWEEP_KEYS, "sweep")
    lambdas = [
        _positive(l, "sweep.lambdas") for l in sweep_sec.get("lambdas", [])]
    replicates = int(sweep_sec.get("replicates", 1))
    if replicates < 1:
        raise ConfigError("'replicates' must be >= 1")

    solve_sec = raw.get("solve", {})
    _check_keys(solve_sec, _SOLVE_KEYS, "solve")
    solve_lambda = None
    if "lambda" in solve_sec:
        solve_lambda = _positive(solve_sec["lambda"], "solve.lambda")

    solver_sec = raw.get("solver", {})
    _check_keys(solver_sec, _SOLVER_KEYS, "solver")
    try:
        solver = SolverOptions(**{k: v for k, v in solver_sec.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid [solver] options: {exc}") from None

    grid_sec = raw.get("grid", {})
    _check_keys(grid_sec, _GRID_KEYS, "grid")
    grid_sizes = [int(p) for p in grid_sec.get("sizes", [])]
    if any(p < 1 for p in grid_sizes):
        raise ConfigError("'grid.sizes' entries must be >= 1")

    output_sec = raw.get("output", {})
    _check_keys(output_sec, _OUTPUT_KEYS, "output")

    return RunConfig(
        raw=raw,
        seed=int(raw.get("seed", 0)),
        workers=int(raw.get("workers", 1)),
        sigma=sigma,
        lambdas=lambdas,
        replicates=replicates,
        solve_lambda=solve_lambda,
        grid_sizes=grid_sizes,
        output_dir=str(output_sec.get("dir", ".")),
        solver=solver,
    )
