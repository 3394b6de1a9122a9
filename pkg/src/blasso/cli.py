"""Command-line front end.

Subcommands: solve, dof, sweep, grid-compare, selftest. Outputs are CSV
tables (UTF-8, LF, shortest round-trip float formatting) and static SVG
plots; identical (config, seed) pairs produce byte-identical CSV files.

Exit codes: 0 success, 1 configuration error, 2 solver non-convergence,
3 degenerate observation (singular curvature matrix or unclassifiable
certificate).
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from ._svg import LogXPlot
from .config import RunConfig, load_config
from .dof import build_dof_report
from .errors import (ConfigError, DegenerateCertificateError,
                     SingularMatrixError)
from .gridlasso import compare_grid_vs_continuous
from .models import apply_forward
from .risk import SweepConfig, run_sweep
from .solver import prune_to_injective, solve_blasso

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NOT_CONVERGED = 2
EXIT_DEGENERATE = 3


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def write_csv(path: str, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def read_y_csv(path: str, n: int) -> np.ndarray:
    """Read an observation vector: one value per line (optional 'y' header)
    or a single comma-separated line."""
    with open(path, "r", encoding="utf-8") as fh:
        tokens = []
        for line in fh:
            line = line.strip()
            if not line or line.lower() == "y":
                continue
            tokens.extend(t for t in line.split(",") if t)
    try:
        y = np.array([float(t) for t in tokens])
    except ValueError as exc:
        raise ConfigError(f"cannot parse y file {path!r}: {exc}") from None
    if y.shape[0] != n:
        raise ConfigError(
            f"y file has {y.shape[0]} values, the model expects {n}")
    return y


def _synthesize_y(config: RunConfig, model, seed: int) -> np.ndarray:
    true_measure, mu = config.build_truth(model)
    if mu is None:
        mu = apply_forward(model, true_measure)
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])
    return mu + config.sigma * rng.standard_normal(model.n)


def _observation(args, config: RunConfig, model) -> np.ndarray:
    if args.y is not None:
        return read_y_csv(args.y, model.n)
    if "truth" not in config.raw or not config.raw["truth"]:
        raise ConfigError("no 'truth' section and no --y file: nothing to solve")
    return _synthesize_y(config, model, args.seed if args.seed is not None
                         else config.seed)


def _pick_lambda(args, config: RunConfig) -> float:
    if args.lam is not None:
        if args.lam <= 0:
            raise ConfigError("'--lambda' must be > 0")
        return args.lam
    if config.solve_lambda is not None:
        return config.solve_lambda
    if config.lambdas:
        return config.lambdas[0]
    raise ConfigError("no lambda given: set [solve] lambda or pass --lambda")


def cmd_solve(args) -> int:
    config = load_config(args.config)
    model = config.build_model()
    lam = _pick_lambda(args, config)
    y = _observation(args, config, model)
    out = _out_dir(args, config)

    result = solve_blasso(model, y, lam, config.solver)
    measure = result.measure
    d = model.domain.dim
    header = ["index"] + [f"x{i}" for i in range(d)] + ["amplitude"]
    rows = [[j, *measure.positions[j], measure.amplitudes[j]]
            for j in range(measure.k)]
    write_csv(os.path.join(out, "solution.csv"), header, rows)

    if d == 1:
        grid = model.domain.uniform_grid(config.solver.certificate_grid_size)
        eta = result.certificate.values_at(grid)
        write_csv(os.path.join(out, "certificate.csv"), ["x", "eta"],
                  zip(grid[:, 0], eta))
    else:
        eta = result.certificate.values_at(measure.positions) if measure.k \
            else np.zeros(0)
        write_csv(os.path.join(out, "certificate.csv"),
                  ["index"] + [f"x{i}" for i in range(d)] + ["eta"],
                  [[j, *measure.positions[j], eta[j]] for j in range(measure.k)])

    print(f"k={measure.k} gap={result.duality_gap!r} "
          f"objective={result.objective_value!r}")
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def cmd_dof(args) -> int:
    config = load_config(args.config)
    model = config.build_model()
    lam = _pick_lambda(args, config)
    y = _observation(args, config, model)
    out = _out_dir(args, config)

    result = solve_blasso(model, y, lam, config.solver)
    if not result.converged:
        print("solver did not converge; no report written", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    measure = prune_to_injective(model, result.measure)
    report = build_dof_report(model, measure, y, lam, opts=config.solver)
    write_csv(os.path.join(out, "dof_report.csv"),
              ["k", "P", "rank_gamma", "sigma_min_gamma", "divergence", "nu",
               "support_class"],
              [[report.k, report.parameter_count, report.rank_gamma,
                report.sigma_min_gamma, report.divergence,
                "" if report.nu is None else report.nu,
                report.support_class or ""]])
    print(f"k={report.k} P={report.parameter_count} "
          f"divergence={report.divergence!r} class={report.support_class}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    config = load_config(args.config)
    model = config.build_model()
    if not config.lambdas:
        raise ConfigError("missing 'lambdas' in [sweep]")
    out = _out_dir(args, config)
    true_measure, mu = config.build_truth(model)
    seed = args.seed if args.seed is not None else config.seed
    workers = args.workers if args.workers is not None else config.workers

    sweep_config = SweepConfig(
        model=model, lambdas=config.lambdas, sigma=config.sigma,
        replicates=config.replicates, true_measure=true_measure, mu=mu,
        seed=seed, solver=config.solver)
    result = run_sweep(sweep_config, workers=workers)

    write_csv(os.path.join(out, "sweep.csv"),
              ["lambda", "replicate", "mse", "sure", "sure_param", "k",
               "divergence", "P", "converged"],
              [[r.lam, r.replicate, r.mse, r.sure, r.sure_param, r.k,
                r.divergence, r.parameter_count, r.converged]
               for r in result.records])

    agg_header = ["lambda", "n_converged", "n_failed"]
    for name in ("mse", "sure", "sure_param", "divergence", "k", "P"):
        agg_header += [f"{name}_mean", f"{name}_std"]
    agg_rows = []
    for agg in result.aggregates:
        row = [agg.lam, agg.n_converged, agg.n_failed]
        for name in ("mse", "sure", "sure_param", "divergence", "k",
                     "parameter_count"):
            row += [agg.mean[name], agg.std[name]]
        agg_rows.append(row)
    write_csv(os.path.join(out, "aggregates.csv"), agg_header, agg_rows)

    lams = [a.lam for a in result.aggregates]
    risk_plot = LogXPlot("Risk estimates across the penalty grid",
                         "lambda", "squared error")
    for name, label in (("mse", "MSE"), ("sure", "SURE"),
                        ("sure_param", "SURE (parameter count)")):
        risk_plot.add_series(label, lams,
                             [a.mean[name] for a in result.aggregates],
                             [a.std[name] for a in result.aggregates])
    with open(os.path.join(out, "sweep_risk.svg"), "w", encoding="utf-8") as fh:
        fh.write(risk_plot.render())

    dof_plot = LogXPlot("Divergence versus parameter count",
                        "lambda", "degrees of freedom")
    dof_plot.add_series("divergence", lams,
                        [a.mean["divergence"] for a in result.aggregates],
                        [a.std["divergence"] for a in result.aggregates])
    dof_plot.add_series("parameter count P", lams,
                        [a.mean["parameter_count"] for a in result.aggregates],
                        [a.std["parameter_count"] for a in result.aggregates])
    with open(os.path.join(out, "sweep_dof.svg"), "w", encoding="utf-8") as fh:
        fh.write(dof_plot.render())

    print(f"records={len(result.records)} failures={result.failures}")
    return EXIT_OK


def cmd_grid_compare(args) -> int:
    config = load_config(args.config)
    model = config.build_model()
    if model.domain.dim != 1:
        raise ConfigError("grid-compare needs a 1-D model")
    if not config.grid_sizes:
        raise ConfigError("missing 'sizes' in [grid]")
    if not config.lambdas:
        raise ConfigError("missing 'lambdas' in [sweep]")
    out = _out_dir(args, config)
    y = _observation(args, config, model)
    true_measure, mu = config.build_truth(model)
    if mu is None and true_measure is not None:
        mu = apply_forward(model, true_measure)

    rows = compare_grid_vs_continuous(model, y, config.lambdas,
                                      config.grid_sizes, config.sigma,
                                      mu=mu, opts=config.solver)
    write_csv(os.path.join(out, "grid_compare.csv"),
              ["grid_size", "lambda", "grid_dof", "grid_sure",
               "blasso_divergence", "blasso_sure", "mse"],
              [[r.grid_size, r.lam, r.grid_dof, r.grid_sure,
                r.blasso_divergence, r.blasso_sure, r.mse] for r in rows])

    plot = LogXPlot("Grid-lasso support size versus continuous divergence",
                    "lambda", "degrees of freedom")
    for p in config.grid_sizes:
        sub = [r for r in rows if r.grid_size == p]
        plot.add_series(f"grid dof (p={p})", [r.lam for r in sub],
                        [r.grid_dof for r in sub])
    first = [r for r in rows if r.grid_size == config.grid_sizes[0]]
    plot.add_series("continuous divergence", [r.lam for r in first],
                    [r.blasso_divergence for r in first])
    with open(os.path.join(out, "grid_compare.svg"), "w",
              encoding="utf-8") as fh:
        fh.write(plot.render())
    print(f"rows={len(rows)}")
    return EXIT_OK


def cmd_selftest(args) -> int:
    from .selftest import run_selftest
    return EXIT_OK if run_selftest() else 1


def _out_dir(args, config: RunConfig) -> str:
    out = args.out if args.out is not None else config.output_dir
    os.makedirs(out, exist_ok=True)
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blasso",
        description="Off-the-grid sparse regression, degrees of freedom "
                    "and SURE risk estimation")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="TOML run config")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--workers", type=int, default=None,
                       help="parallel replicate workers")

    p_solve = sub.add_parser("solve", help="solve one instance")
    common(p_solve)
    p_solve.add_argument("--y", default=None, help="CSV observation vector")
    p_solve.add_argument("--lambda", dest="lam", type=float, default=None)
    p_solve.set_defaults(func=cmd_solve)

    p_dof = sub.add_parser("dof", help="divergence / degrees-of-freedom report")
    common(p_dof)
    p_dof.add_argument("--y", default=None, help="CSV observation vector")
    p_dof.add_argument("--lambda", dest="lam", type=float, default=None)
    p_dof.set_defaults(func=cmd_dof)

    p_sweep = sub.add_parser("sweep", help="Monte-Carlo risk sweep over lambda")
    common(p_sweep)
    p_sweep.set_defaults(func=cmd_sweep)

    p_grid = sub.add_parser("grid-compare",
                            help="grid-lasso dof versus continuous divergence")
    common(p_grid)
    p_grid.add_argument("--y", default=None, help="CSV observation vector")
    p_grid.set_defaults(func=cmd_grid_compare)

    p_self = sub.add_parser("selftest", help="fast invariant suite")
    p_self.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SingularMatrixError, DegenerateCertificateError) as exc:
        print(f"degenerate observation: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE


if __name__ == "__main__":
    sys.exit(main())
