"""Command-line harness: simulation, fitting, and the packaged studies.

Exit codes: 0 on success, 2 for configuration problems (bad JSON, unknown
keys, invalid values, unreadable paths), 3 for numerical failures raised by
the library (instability, truncation, divergence).
"""

import functools
import json
import math
import sys

import click
import numpy as np

from . import __version__
from .dependence import LinearProcessSpec, dependence_factor
from .estimators import LambdaRule, coeffs_to_csv, fit_var
from .exceptions import (
    DimensionError,
    NumericalError,
    ParameterError,
    StabilityError,
    TruncationError,
)
from .experiments import (
    CONCENTRATION_HEADER,
    FIGSW_HEADER,
    LS_TABLES_HEADER,
    ExperimentConfig,
    emit_results,
    run_concentration,
    run_figsw,
    run_ls_tables,
)
from .model import Trajectory, VarModel
from .penalties import penalty_from_config
from .sampling import NoiseSpec, TransitionGenSpec, gen_sparse_transition, simulate_var
from .solvers import SolverConfig

_NUMERIC_ERRORS = (StabilityError, TruncationError, NumericalError)
_CONFIG_ERRORS = (ParameterError, DimensionError, ValueError, KeyError,
                  TypeError, OSError)


def _guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except _NUMERIC_ERRORS as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(3)
        except _CONFIG_ERRORS as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(2)
    return wrapper


def _load_config(path) -> dict:
    with open(path) as fh:
        payload = json.load(fh)
    if not isinstance(payload, dict):
        raise ParameterError("config file must hold a JSON object")
    return payload


def _reject_unknown(payload: dict, allowed, what: str) -> None:
    unknown = set(payload) - set(allowed)
    if unknown:
        raise ParameterError(f"unknown {what} config keys: {sorted(unknown)}")


@click.group()
@click.version_option(__version__, prog_name="heavyvar")
def main():
    """Heavy-tailed vector autoregression toolkit."""


@main.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="JSON file describing the process to simulate.")
@click.option("--seed", type=int, default=None,
              help="Overrides the seed in the config file.")
@click.option("--out", "out_path", required=True,
              type=click.Path(dir_okay=False, writable=True),
              help="Trajectory CSV destination.")
@_guarded
def simulate(config_path, seed, out_path):
    """Simulate a trajectory and write it as CSV.

    The config either names explicit lag matrices under "coeffs" or asks
    for a generated sparse transition via "p" (with optional "s" and
    "rho_target").  Innovation tails are set by "gamma2" and "scale".
    """
    payload = _load_config(config_path)
    _reject_unknown(payload, ("T", "p", "coeffs", "s", "rho_target", "gamma2",
                              "scale", "burn_in", "seed"), "simulate")
    if "T" not in payload:
        raise ParameterError("simulate config requires the trajectory length T")
    T = payload["T"]
    rng = np.random.default_rng(seed if seed is not None
                                else payload.get("seed", 0))
    if "coeffs" in payload:
        coeffs = tuple(np.asarray(c, dtype=float) for c in payload["coeffs"])
        model = VarModel(coeffs=coeffs)
        p = coeffs[0].shape[0]
    else:
        if "p" not in payload:
            raise ParameterError("simulate config requires p or explicit coeffs")
        p = int(payload["p"])
        spec = TransitionGenSpec(
            p=p,
            s=int(payload.get("s", max(1, round(math.sqrt(p))))),
            target_rho=float(payload.get("rho_target", 0.5)))
        model = VarModel(coeffs=(gen_sparse_transition(spec, rng),))
    noise = NoiseSpec(gamma2=float(payload.get("gamma2", 2.0)),
                      scale=float(payload.get("scale", 1.0)), p=p)
    traj = simulate_var(model, noise, T=T,
                        burn_in=int(payload.get("burn_in", 500)), rng=rng)
    traj.to_csv(out_path)
    click.echo(out_path)


def _lambda_rule_from(payload) -> LambdaRule:
    if isinstance(payload, (int, float)):
        return LambdaRule.fixed(float(payload))
    if isinstance(payload, dict):
        return LambdaRule(**payload)
    raise ParameterError("lambda must be a number or a rule object")


@main.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="JSON file naming the data file, lag order, and penalty.")
@click.option("--out", "out_path", required=True,
              type=click.Path(dir_okay=False, writable=True),
              help="Destination for the fitted coefficients.")
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]),
              default="csv", show_default=True,
              help="csv writes the stacked coefficient matrix; json the full fit.")
@click.option("--threads", type=int, default=1, show_default=True,
              help="Parallel row fits for separable penalties.")
@_guarded
def fit(config_path, out_path, fmt, threads):
    """Fit a penalized VAR to a trajectory file.

    The config needs "data" (trajectory CSV) and "d"; optional keys are
    "penalty" (a penalty object, default l1), "lambda" (a number or a
    selection-rule object), and "solver" (iteration settings).
    """
    payload = _load_config(config_path)
    _reject_unknown(payload, ("data", "d", "penalty", "lambda", "solver"),
                    "fit")
    for key in ("data", "d"):
        if key not in payload:
            raise ParameterError(f"fit config requires {key!r}")
    traj = Trajectory.from_csv(payload["data"])
    penalty = (penalty_from_config(payload["penalty"])
               if "penalty" in payload else None)
    rule = _lambda_rule_from(payload.get("lambda", 0.0))
    solver = SolverConfig(**payload.get("solver", {}))
    result = fit_var(traj, payload["d"], penalty, rule, solver,
                     n_jobs=threads)
    if fmt == "csv":
        coeffs_to_csv(result, out_path)
    else:
        with open(out_path, "w") as fh:
            fh.write(result.to_json() + "\n")
    click.echo(out_path)


@main.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="JSON file with the lag-1 transition matrix.")
@click.option("--out", "out_path", default=None,
              type=click.Path(dir_okay=False, writable=True),
              help="Report destination; stdout when omitted.")
@_guarded
def dependence(config_path, out_path):
    """Report the temporal dependence factor of an autoregression.

    The config holds "transition" (a square matrix) and optionally
    "sigma_eta" (innovation covariance, identity by default).
    """
    payload = _load_config(config_path)
    _reject_unknown(payload, ("transition", "sigma_eta"), "dependence")
    if "transition" not in payload:
        raise ParameterError("dependence config requires a transition matrix")
    A = np.asarray(payload["transition"], dtype=float)
    sigma = (np.asarray(payload["sigma_eta"], dtype=float)
             if "sigma_eta" in payload else np.eye(A.shape[0]))
    report = dependence_factor(LinearProcessSpec.var1(A, sigma))
    blob = json.dumps(report.to_json(), indent=2, sort_keys=True)
    if out_path is None:
        click.echo(blob)
    else:
        with open(out_path, "w") as fh:
            fh.write(blob + "\n")
        click.echo(out_path)


@main.group()
def experiment():
    """Run one of the packaged studies."""


def _experiment_options(fn):
    fn = click.option("--config", "config_path", default=None,
                      type=click.Path(exists=True, dir_okay=False),
                      help="JSON overrides for the study defaults.")(fn)
    fn = click.option("--seed", type=int, default=None,
                      help="Overrides base_seed.")(fn)
    fn = click.option("--out", "out_path", default=None,
                      type=click.Path(dir_okay=False, writable=True),
                      help="Results destination.")(fn)
    fn = click.option("--format", "fmt", type=click.Choice(["csv", "json"]),
                      default="csv", show_default=True)(fn)
    fn = click.option("--threads", type=int, default=None,
                      help="Replication parallelism; output is unaffected.")(fn)
    return fn


def _run_experiment(name, runner, header, config_path, seed, out_path, fmt,
                    threads):
    payload = _load_config(config_path) if config_path else {}
    stated = payload.get("experiment")
    if stated is not None and stated != name:
        raise ParameterError(
            f"config names experiment {stated!r} but the subcommand is {name!r}")
    payload["experiment"] = name
    if seed is not None:
        payload["base_seed"] = seed
    if threads is not None:
        payload["threads"] = threads
    cfg = ExperimentConfig.from_dict(payload)
    rows = runner(cfg)
    target = out_path or cfg.output_path or f"{name}.csv"
    written = emit_results(rows, target, fmt, header=header, config=cfg)
    click.echo(written)


@experiment.command("figsw")
@_experiment_options
@_guarded
def experiment_figsw(config_path, seed, out_path, fmt, threads):
    """Estimation error versus sample-size multiplier for sparse fits."""
    _run_experiment("figsw", run_figsw, FIGSW_HEADER, config_path, seed,
                    out_path, fmt, threads)


@experiment.command("ls-tables")
@_experiment_options
@_guarded
def experiment_ls_tables(config_path, seed, out_path, fmt, threads):
    """Method comparison on low-rank plus sparse truths."""
    _run_experiment("ls_tables", run_ls_tables, LS_TABLES_HEADER, config_path,
                    seed, out_path, fmt, threads)


@experiment.command("concentration")
@_experiment_options
@_guarded
def experiment_concentration(config_path, seed, out_path, fmt, threads):
    """Tail probabilities of design deviations against their bound."""
    _run_experiment("concentration", run_concentration, CONCENTRATION_HEADER,
                    config_path, seed, out_path, fmt, threads)


if __name__ == "__main__":
    main()
