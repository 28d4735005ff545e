"""Reproducible simulation studies and their tabular output.

Three studies: an l1-consistency sweep over sample-size multipliers, a
three-method comparison on low-rank plus sparse transitions, and a
Monte-Carlo check of the deviation-bound shape.  Replication seeds are
derived from (base_seed, cell index, replication index), so results are
byte-identical across thread counts.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from . import __version__
from ._validation import check_nonnegative_int, check_positive_int
from .dependence import LinearProcessSpec, dependence_factor, solve_lyapunov
from .estimators import LambdaRule, eval_errors, fit_var
from .exceptions import DimensionError, ParameterError
from .model import Trajectory, VarModel, build_design, stack_coeffs
from .penalties import L1Penalty, lambda_theory, theory_bounds
from .sampling import (
    NoiseSpec,
    TransitionGenSpec,
    gen_lowrank_sparse_transition,
    gen_sparse_transition,
    simulate_var,
)
from .solvers import lowrank_sparse_fit, ols_fit

__all__ = [
    "ExperimentConfig",
    "ConcentrationReport",
    "run_figsw",
    "run_ls_tables",
    "run_concentration",
    "emit_results",
    "read_results",
    "FIGSW_HEADER",
    "LS_TABLES_HEADER",
    "CONCENTRATION_HEADER",
]

FIGSW_HEADER = ("p", "gamma2", "m", "n", "mean_err", "std_err")
LS_TABLES_HEADER = ("p", "n", "gamma2", "method", "rel_err", "pred_err")
CONCENTRATION_HEADER = ("p", "gamma2", "n", "quantity", "t",
                        "empirical_tail_prob", "bound_value", "c_factor",
                        "c_calibrated")

# sample sizes paired with each dimension in the method-comparison study
LS_CELLS = {10: (30, 50), 30: (80, 100)}

_EXPERIMENTS = ("figsw", "ls_tables", "concentration")

_DEFAULTS = {
    "figsw": dict(p_list=(30, 50, 100), gamma2_list=(0.5, 1.0, 2.0),
                  m_list=(1, 3, 5, 7, 9, 13, 15, 17, 19),
                  replications=30, rho_target=0.5),
    "ls_tables": dict(p_list=(10, 30), gamma2_list=(2.0, 1.0, 0.5),
                      m_list=(), replications=20, rho_target=0.7),
    "concentration": dict(p_list=(10,), gamma2_list=(1.0, 2.0),
                          m_list=(200, 800), replications=1000,
                          rho_target=0.5),
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Grid and execution settings for one study.

    Unset grid fields take study-specific defaults.  For the concentration
    study ``m_list`` holds sample sizes directly rather than multipliers.
    ``threads`` and ``output_path`` do not affect results, so they are left
    out of the provenance hash.
    """

    experiment: str
    p_list: tuple[int, ...] = ()
    gamma2_list: tuple[float, ...] = ()
    m_list: tuple[int, ...] = ()
    replications: int = 0
    base_seed: int = 0
    rho_target: float = 0.0
    output_path: str | None = None
    include_p150: bool = False
    threads: int = 1

    def __post_init__(self):
        if self.experiment not in _EXPERIMENTS:
            raise ParameterError(
                f"experiment must be one of {_EXPERIMENTS}, got {self.experiment!r}")
        d = _DEFAULTS[self.experiment]
        if not self.p_list:
            p_list = d["p_list"]
            if self.experiment == "figsw" and self.include_p150:
                p_list = p_list + (150,)
            object.__setattr__(self, "p_list", tuple(p_list))
        else:
            object.__setattr__(self, "p_list", tuple(int(p) for p in self.p_list))
        for p in self.p_list:
            if p < 2:
                raise ParameterError(f"all p must be at least 2, got {p}")
        if not self.gamma2_list:
            object.__setattr__(self, "gamma2_list", tuple(d["gamma2_list"]))
        else:
            object.__setattr__(self, "gamma2_list",
                               tuple(float(g) for g in self.gamma2_list))
        if not self.m_list:
            object.__setattr__(self, "m_list", tuple(d["m_list"]))
        else:
            object.__setattr__(self, "m_list", tuple(int(m) for m in self.m_list))
        if self.replications == 0:
            object.__setattr__(self, "replications", d["replications"])
        check_positive_int(self.replications, "replications")
        check_nonnegative_int(self.base_seed, "base_seed")
        if self.rho_target == 0.0:
            object.__setattr__(self, "rho_target", d["rho_target"])
        if not 0.0 < self.rho_target < 1.0:
            raise ParameterError(
                f"rho_target must lie in (0, 1), got {self.rho_target}")
        check_positive_int(self.threads, "threads")

    @classmethod
    def from_dict(cls, payload: dict) -> "ExperimentConfig":
        if "experiment" not in payload:
            raise ParameterError("config must name the experiment")
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(payload) - known
        if unknown:
            raise ParameterError(f"unknown config keys: {sorted(unknown)}")
        norm = dict(payload)
        for key in ("p_list", "gamma2_list", "m_list"):
            if key in norm and norm[key] is not None:
                norm[key] = tuple(norm[key])
        return cls(**norm)

    def to_dict(self) -> dict:
        # execution-only knobs excluded: two runs differing only in thread
        # count or target file describe the same experiment
        return {
            "experiment": self.experiment,
            "p_list": list(self.p_list),
            "gamma2_list": list(self.gamma2_list),
            "m_list": list(self.m_list),
            "replications": self.replications,
            "base_seed": self.base_seed,
            "rho_target": self.rho_target,
            "include_p150": self.include_p150,
        }

    def config_hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class ConcentrationReport:
    """Monte-Carlo tail of one quadratic-form deviation against its bound.

    ``bound_value`` evaluates the exponential bound with unit constant;
    ``bound_calibrated`` rescales the exponent by the largest constant that
    keeps the bound above every empirical point, reported as
    ``c_calibrated``.  ``c_factor`` is the temporal dependence factor of the
    generating process.
    """

    t_grid: np.ndarray
    empirical_tail_prob: np.ndarray
    bound_value: np.ndarray
    n: int
    p: int
    gamma2: float
    c_factor: float
    quantity: str = "gram"
    c_calibrated: float = 1.0
    bound_calibrated: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        probs = np.asarray(self.empirical_tail_prob, dtype=float)
        if probs.size != np.asarray(self.t_grid).size:
            raise DimensionError("tail probabilities must match the t grid")
        if np.any(probs < 0) or np.any(probs > 1):
            raise ParameterError("tail probabilities must lie in [0, 1]")
        if np.any(np.diff(probs) > 0):
            raise ParameterError("tail probabilities must be nonincreasing in t")

    def rows(self) -> list[dict]:
        out = []
        for i, t in enumerate(self.t_grid):
            out.append({
                "p": self.p,
                "gamma2": self.gamma2,
                "n": self.n,
                "quantity": self.quantity,
                "t": float(t),
                "empirical_tail_prob": float(self.empirical_tail_prob[i]),
                "bound_value": float(self.bound_value[i]),
                "c_factor": self.c_factor,
                "c_calibrated": self.c_calibrated,
            })
        return out


def _rng(*entropy: int) -> np.random.Generator:
    return np.random.default_rng(list(entropy))


def _gamma_key(gamma2: float) -> int:
    return int(round(gamma2 * 1000))


def _figsw_cell(cfg: ExperimentConfig, p: int, gamma2: float, m: int) -> dict:
    s = max(1, round(math.sqrt(p)))
    n = max(2, round(m * s * math.log(p)))
    noise = NoiseSpec(gamma2=gamma2, scale=1.0, p=p)
    spec = TransitionGenSpec(p=p, s=s, target_rho=cfg.rho_target)

    def one_rep(rep: int) -> float:
        # the truth draw depends only on (p, rep): cells differing in m or
        # gamma2 see the same transition, so cross-cell comparisons are
        # paired rather than confounded by the draw-to-draw spread
        B = gen_sparse_transition(spec, _rng(cfg.base_seed, p, rep))
        model = VarModel(coeffs=(B,))
        rng = _rng(cfg.base_seed, p, _gamma_key(gamma2), m, rep)
        traj = simulate_var(model, noise, T=n, burn_in=300, rng=rng)
        c_factor = dependence_factor(
            LinearProcessSpec.var1(B, np.eye(p))).c_factor
        rule = LambdaRule.validation(s=min(s, p - 1), K=noise.subweibull_norm,
                                     c_factor=c_factor)
        fit = fit_var(traj, 1, L1Penalty(), rule)
        return float(np.linalg.norm(fit.coeffs - stack_coeffs(model)))

    if cfg.threads == 1:
        errs = [one_rep(r) for r in range(cfg.replications)]
    else:
        errs = Parallel(n_jobs=cfg.threads, prefer="threads")(
            delayed(one_rep)(r) for r in range(cfg.replications))
    errs = np.asarray(errs)
    return {"p": p, "gamma2": gamma2, "m": m, "n": n,
            "mean_err": float(np.mean(errs)),
            "std_err": float(np.std(errs, ddof=1)) if errs.size > 1 else 0.0}


def run_figsw(cfg: ExperimentConfig) -> list[dict]:
    """Mean l1-estimation error per (p, gamma2, m) cell.

    Each replication draws a fresh sparse transition with s = round(sqrt p)
    nonzeros at the target spectral radius, simulates n = round(m s log p)
    usable rows, and fits an l1-penalized model at a holdout-selected
    penalty level.
    """
    if cfg.experiment != "figsw":
        raise ParameterError(f"config is for {cfg.experiment!r}, not 'figsw'")
    rows = []
    for p in cfg.p_list:
        for gamma2 in cfg.gamma2_list:
            for m in cfg.m_list:
                rows.append(_figsw_cell(cfg, p, gamma2, m))
    return rows


def _one_step_score(coeffs: np.ndarray, data: np.ndarray, start: int) -> float:
    err = 0.0
    for t in range(start, data.shape[0]):
        err += float(np.linalg.norm(data[t - 1] @ coeffs - data[t]))
    return err


def _tune_ls(reg_train, data, val_start, nuc_grid, mu_grid, alpha):
    best = None
    for lam_nuc in nuc_grid:
        for mu in mu_grid:
            fit = lowrank_sparse_fit(reg_train.X, reg_train.Y, lam_nuc, mu, alpha)
            score = _one_step_score(fit.coeffs, data, val_start)
            key = (score, lam_nuc, mu)
            if best is None or key < best:
                best = key
    return best[1], best[2]


def _ls_rep(cfg: ExperimentConfig, p: int, cells: tuple[int, ...],
            gamma2: float, rep: int) -> dict:
    spec = TransitionGenSpec(p=p, s=1, target_rho=cfg.rho_target,
                             lowrank_rank=3, lowrank_density=(0.02, 0.04))
    # truth shared across (n, gamma2) cells at fixed rep, as in _figsw_cell
    L0, S0 = gen_lowrank_sparse_transition(spec, _rng(cfg.base_seed, p, rep))
    B = L0 + S0
    model = VarModel(coeffs=(B,))
    noise = NoiseSpec(gamma2=gamma2, scale=1.0, p=p)
    holdout_len = 10
    # one trajectory per rep; every sample-size cell fits a window that ends
    # just before the same holdout rows, so cross-cell scores are paired
    rng = _rng(cfg.base_seed, p, _gamma_key(gamma2), rep)
    traj = simulate_var(model, noise, T=max(cells) + holdout_len,
                        burn_in=300, rng=rng)
    hold_seed = traj.data.shape[0] - holdout_len - 1
    holdout = traj.data[hold_seed:]
    s_center = max(1, round(math.sqrt(p)))

    out = {}
    for n_obs in cells:
        fit_traj = Trajectory(data=traj.data[hold_seed - n_obs:hold_seed + 1])
        fit_rows = fit_traj.data.shape[0]

        reg_fit = build_design(fit_traj, 1)
        ols = ols_fit(reg_fit.X, reg_fit.Y)
        out[n_obs, "ols"] = eval_errors(ols.coeffs, B, holdout)

        rule = LambdaRule.validation(s=s_center, grid_points=10,
                                     grid_decades=1.0)
        lasso = fit_var(fit_traj, 1, L1Penalty(), rule)
        out[n_obs, "lasso"] = eval_errors(lasso.coeffs, B, holdout)

        # the 2-D grid needs a steadier score than the 10 percent split gives
        val_rows = max(1, round(0.2 * fit_rows))
        train_traj = Trajectory(data=fit_traj.data[:fit_rows - val_rows])
        reg_train = build_design(train_traj, 1)
        grid = np.geomspace(0.01, 0.6, 5)
        lam_nuc, mu = _tune_ls(reg_train, fit_traj.data, fit_rows - val_rows,
                               grid, grid, float(p))
        ls = lowrank_sparse_fit(reg_fit.X, reg_fit.Y, lam_nuc, mu, float(p))
        out[n_obs, "ls"] = eval_errors(ls.coeffs, B, holdout)
    return {key: (m.rel_err, m.pred_err) for key, m in out.items()}


def run_ls_tables(cfg: ExperimentConfig) -> list[dict]:
    """Compare plain, l1, and low-rank plus sparse fits per (p, n, gamma2).

    Truth transitions are rank 3 plus a 2 to 4 percent dense sparse part at
    the target radius; reported errors are replication means, with ten
    out-of-sample points scored one step ahead.
    """
    if cfg.experiment != "ls_tables":
        raise ParameterError(f"config is for {cfg.experiment!r}, not 'ls_tables'")
    rows = []
    for p in cfg.p_list:
        if p not in LS_CELLS:
            raise ParameterError(
                f"no sample-size cells defined for p={p}; available: {sorted(LS_CELLS)}")
        cells = LS_CELLS[p]
        means = {}
        for gamma2 in cfg.gamma2_list:
            def one(rep):
                return _ls_rep(cfg, p, cells, gamma2, rep)

            if cfg.threads == 1:
                reps = [one(r) for r in range(cfg.replications)]
            else:
                reps = Parallel(n_jobs=cfg.threads, prefer="threads")(
                    delayed(one)(r) for r in range(cfg.replications))
            for n_obs in cells:
                for method in ("ols", "lasso", "ls"):
                    pair = [r[n_obs, method] for r in reps]
                    means[n_obs, gamma2, method] = (
                        float(np.mean([e[0] for e in pair])),
                        float(np.mean([e[1] for e in pair])))
        for n_obs in cells:
            for gamma2 in cfg.gamma2_list:
                for method in ("ols", "lasso", "ls"):
                    rel, pred = means[n_obs, gamma2, method]
                    rows.append({"p": p, "n": n_obs, "gamma2": gamma2,
                                 "method": method, "rel_err": rel,
                                 "pred_err": pred})
    return rows


def _concentration_combo(cfg: ExperimentConfig, p: int, gamma2: float,
                         n: int) -> list[ConcentrationReport]:
    noise = NoiseSpec(gamma2=gamma2, scale=1.0, p=p)
    # direction and process depend only on p, so tails at different (n,
    # gamma2) measure the same quadratic forms under the same threshold
    master = _rng(cfg.base_seed, p)
    u = master.standard_normal(p)
    u /= np.linalg.norm(u)
    s = max(1, round(math.sqrt(p)))
    B = gen_sparse_transition(
        TransitionGenSpec(p=p, s=s, target_rho=cfg.rho_target), master)
    model = VarModel(coeffs=(B,))
    sigma_x = solve_lyapunov(B, np.eye(p))
    c_factor = dependence_factor(LinearProcessSpec.var1(B, np.eye(p))).c_factor
    K = noise.subweibull_norm
    scale = K * K * c_factor
    t_grid = np.concatenate(([0.0], np.geomspace(1e-3, 1.0, 24)))

    def one_rep(rep: int) -> tuple[float, float]:
        rng = _rng(cfg.base_seed, p, _gamma_key(gamma2), n, rep)
        traj, eps = simulate_var(model, noise, T=n, burn_in=300, rng=rng,
                                 return_innovations=True)
        reg = build_design(traj, 1)
        eta = eps[1:]
        gram_dev = reg.X.T @ reg.X / n - sigma_x
        cross = reg.X.T @ eta / n
        return (abs(float(u @ gram_dev @ u)), abs(float(u @ cross @ u)))

    if cfg.threads == 1:
        draws = [one_rep(r) for r in range(cfg.replications)]
    else:
        draws = Parallel(n_jobs=cfg.threads, prefer="threads")(
            delayed(one_rep)(r) for r in range(cfg.replications))
    gram = np.asarray([d[0] for d in draws])
    cross = np.asarray([d[1] for d in draws])

    exponent = np.minimum((n * t_grid) ** (gamma2 / 2.0), n * t_grid**2)

    def build(values: np.ndarray, name: str) -> ConcentrationReport:
        emp = np.asarray([float(np.mean(values > scale * t)) for t in t_grid])
        usable = (emp > 0) & (exponent > 0)
        if np.any(usable):
            c_cal = float(np.min(np.log(6.0 / emp[usable]) / exponent[usable]))
            # shave a hair so the bound clears the binding point in floats
            c_cal *= 1.0 - 1e-12
        else:
            c_cal = 1e6
        return ConcentrationReport(
            t_grid=t_grid,
            empirical_tail_prob=emp,
            bound_value=6.0 * np.exp(-exponent),
            n=n, p=p, gamma2=gamma2, c_factor=c_factor, quantity=name,
            c_calibrated=c_cal,
            bound_calibrated=6.0 * np.exp(-c_cal * exponent),
        )

    return [build(gram, "gram"), build(cross, "cross")]


def run_concentration(cfg: ExperimentConfig) -> list[ConcentrationReport]:
    """Tail probabilities of the design deviations against their bound.

    For each p a single process and unit direction are fixed; replications
    resimulate the trajectory per (gamma2, n).  Requires enough replications
    for the tails to be meaningful, and an exactly solvable stationary
    covariance (p <= 20).
    """
    if cfg.experiment != "concentration":
        raise ParameterError(
            f"config is for {cfg.experiment!r}, not 'concentration'")
    if cfg.replications < 1000:
        raise ParameterError(
            f"concentration study needs at least 1000 replications, got {cfg.replications}")
    for p in cfg.p_list:
        if p > 20:
            raise ParameterError(f"p must be at most 20, got {p}")
    reports = []
    for p in cfg.p_list:
        for gamma2 in cfg.gamma2_list:
            for n in cfg.m_list:
                reports.extend(_concentration_combo(cfg, p, gamma2, n))
    return reports


def _format_value(v) -> str:
    if isinstance(v, bool):
        return str(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _parse_value(text: str):
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def emit_results(rows, path, fmt: str = "csv", header=None,
                 config: ExperimentConfig | None = None) -> str:
    """Write result rows as CSV plus a JSON mirror, or as JSON alone.

    The CSV header is the exact column tuple for the experiment; floats are
    written with full round-trip precision so output is byte-stable.  The
    JSON mirror carries the config echo, the software version, and the
    config hash on every row.
    """
    if fmt not in ("csv", "json"):
        raise ParameterError(f"format must be 'csv' or 'json', got {fmt!r}")
    rows = [r.rows() if isinstance(r, ConcentrationReport) else [r] for r in rows]
    rows = [r for group in rows for r in group]
    if not rows:
        raise ParameterError("no result rows to emit")
    header = tuple(header) if header is not None else tuple(rows[0].keys())
    chash = config.config_hash() if config is not None else None
    path = str(path)

    payload = {
        "version": __version__,
        "config": config.to_dict() if config is not None else None,
        "config_hash": chash,
        "columns": list(header),
        "rows": [dict(r, config_hash=chash) if chash else dict(r) for r in rows],
    }
    blob = json.dumps(payload, sort_keys=True, indent=1)

    if fmt == "json":
        with open(path, "w") as fh:
            fh.write(blob + "\n")
        return path

    lines = [",".join(header)]
    for r in rows:
        lines.append(",".join(_format_value(r[k]) for k in header))
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")
    mirror = path + ".json" if not path.endswith(".csv") else path[:-4] + ".json"
    with open(mirror, "w") as fh:
        fh.write(blob + "\n")
    return path


def read_results(path) -> list[dict]:
    """Parse a results file back into typed row dictionaries."""
    path = str(path)
    with open(path) as fh:
        text = fh.read()
    if path.endswith(".json"):
        return json.loads(text)["rows"]
    lines = [ln for ln in text.splitlines() if ln]
    header = lines[0].split(",")
    return [{k: _parse_value(v) for k, v in zip(header, ln.split(","))}
            for ln in lines[1:]]
