"""End-to-end VAR and VAR-X estimation.

Builds the lagged design once, fits every response with the same penalty
level, and reports the error metrics used by the simulation studies.  Row
regressions are independent given the shared design, so fitting them in any
order (or in parallel) produces bit-identical coefficients.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import (
    check_array_2d,
    check_nonnegative_float,
    check_nonnegative_int,
    check_positive_int,
)
from .exceptions import DimensionError, ParameterError
from .model import (
    RegressionData,
    Trajectory,
    VarModel,
    build_design,
    build_varx_design,
    stack_coeffs,
)
from .penalties import (
    L1Penalty,
    NuclearPenalty,
    OwnOtherPenalty,
    Penalty,
    lambda_theory,
    theory_bounds,
)
from .solvers import FitResult, SolverConfig, fista_fit, ols_fit, lowrank_sparse_fit

__all__ = [
    "ErrorMetrics",
    "LambdaRule",
    "fit_var",
    "fit_varx",
    "fit_var_lowrank_sparse",
    "predict",
    "eval_errors",
    "validation_lambda",
    "coeffs_to_csv",
    "SparseVAR",
    "SparseVARX",
    "LowRankSparseVAR",
]

MIN_EXTRA_OBS = 10       # fits require T >= d + this margin
PRED_HORIZON = 10        # held-out steps scored by eval_errors


@dataclass(frozen=True)
class ErrorMetrics:
    """Estimation and prediction errors for one fitted coefficient matrix.

    ``max_row_l2`` is the largest per-response coefficient error; responses
    are columns of the stacked (dp, p) matrix.
    """

    frob_err: float
    rel_err: float
    pred_err: float
    max_row_l2: float

    def __post_init__(self):
        for name in ("frob_err", "rel_err", "pred_err", "max_row_l2"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be nonnegative")

    def to_json(self) -> str:
        return json.dumps({
            "frob_err": self.frob_err,
            "rel_err": self.rel_err,
            "pred_err": self.pred_err,
            "max_row_l2": self.max_row_l2,
        })


@dataclass(frozen=True)
class LambdaRule:
    """How the shared penalty level is chosen.

    ``fixed`` uses ``value`` as is.  ``theory`` evaluates the closed-form
    level from the penalty's complexity bundle, which needs the target
    sparsity ``s`` plus the noise scale ``K`` and temporal dependence factor
    ``c_factor``.  ``validation`` searches a logarithmic grid centered at the
    theory value, scoring one-step-ahead errors on the last tenth of the
    trajectory, then refits on everything.
    """

    rule: str = "fixed"
    value: float = 0.0
    s: int | None = None
    K: float = 1.0
    c_factor: float = 1.0
    c_abs: float = 1.0
    grid_points: int = 30
    grid_decades: float = 2.0

    def __post_init__(self):
        if self.rule not in ("fixed", "theory", "validation"):
            raise ParameterError(
                f"rule must be 'fixed', 'theory', or 'validation', got {self.rule!r}")
        check_nonnegative_float(self.value, "value")
        if self.rule in ("theory", "validation") and self.s is None:
            raise ParameterError(f"rule {self.rule!r} requires the sparsity s")
        check_positive_int(self.grid_points, "grid_points")

    @classmethod
    def fixed(cls, value: float) -> "LambdaRule":
        return cls(rule="fixed", value=value)

    @classmethod
    def theory(cls, s: int, K: float = 1.0, c_factor: float = 1.0,
               c_abs: float = 1.0) -> "LambdaRule":
        return cls(rule="theory", s=s, K=K, c_factor=c_factor, c_abs=c_abs)

    @classmethod
    def validation(cls, s: int, K: float = 1.0, c_factor: float = 1.0,
                   c_abs: float = 1.0, grid_points: int = 30,
                   grid_decades: float = 2.0) -> "LambdaRule":
        return cls(rule="validation", s=s, K=K, c_factor=c_factor,
                   c_abs=c_abs, grid_points=grid_points,
                   grid_decades=grid_decades)


def _coerce_rule(lambda_rule) -> LambdaRule:
    if isinstance(lambda_rule, LambdaRule):
        return lambda_rule
    return LambdaRule.fixed(float(lambda_rule))


def _is_matrix_penalty(penalty: Penalty, row_dim: int, p: int) -> bool:
    # penalties whose groups or spectrum span all responses must be fit
    # jointly on the stacked matrix; separable or per-response penalties
    # go through independent row regressions
    if isinstance(penalty, NuclearPenalty):
        return True
    dim = getattr(penalty, "dim", None)
    return dim is not None and dim == row_dim * p and dim != row_dim


def _theory_lambda_for(penalty: Penalty, row_dim: int, n: int,
                       rule: LambdaRule) -> float:
    if isinstance(penalty, OwnOtherPenalty):
        bundle = theory_bounds(penalty, s=rule.s)
    else:
        bundle = theory_bounds(penalty, p=row_dim, s=rule.s)
    return lambda_theory(bundle.width_unit_ball, n, rule.K, rule.c_factor,
                         phi_bar=bundle.phi_bar, c_abs=rule.c_abs)


def _fit_design(reg: RegressionData, penalty: Penalty, lam: float,
                cfg: SolverConfig | None, n_jobs: int = 1) -> FitResult:
    """Fit all responses at one penalty level and stack the coefficients."""
    X, Y = reg.X, reg.Y
    row_dim, p = X.shape[1], Y.shape[1]
    if lam == 0.0:
        return ols_fit(X, Y)
    if _is_matrix_penalty(penalty, row_dim, p):
        return fista_fit(X, Y, penalty, lam, cfg)

    def one(j):
        return fista_fit(X, Y[:, j], penalty, lam, cfg)

    if n_jobs == 1:
        fits = [one(j) for j in range(p)]
    else:
        fits = Parallel(n_jobs=n_jobs, prefer="threads")(
            delayed(one)(j) for j in range(p))
    coeffs = np.column_stack([f.coeffs for f in fits])
    total_obj = float(sum(f.objective_trace[-1] for f in fits))
    return FitResult(coeffs=coeffs, objective_trace=np.asarray([total_obj]),
                     iters=max(f.iters for f in fits),
                     converged=all(f.converged for f in fits),
                     lambda_used=lam)


def _one_step_errors(coeffs: np.ndarray, data: np.ndarray, start: int
                     ) -> tuple[float, float]:
    """Sums of l2 errors and l2 magnitudes of one-step predictions for rows
    start..end, each predicted from the realized preceding lags."""
    row_dim, p = coeffs.shape
    d = row_dim // p
    err = 0.0
    mag = 0.0
    for t in range(start, data.shape[0]):
        lags = np.concatenate([data[t - 1 - k] for k in range(d)])
        pred = lags @ coeffs
        err += float(np.linalg.norm(pred - data[t]))
        mag += float(np.linalg.norm(data[t]))
    return err, mag


def validation_lambda(traj: Trajectory, d: int, penalty: Penalty,
                      rule: LambdaRule, cfg: SolverConfig | None = None,
                      n_jobs: int = 1
                      ) -> tuple[float, np.ndarray, np.ndarray]:
    """Grid-search the penalty level on a held-out tail of the trajectory.

    Returns (chosen lambda, grid, held-out errors); the choice is the grid
    argmin, ties broken toward the smaller level.
    """
    d = check_positive_int(d, "d")
    T = traj.horizon
    n_rows = T + 1
    val_count = max(1, round(0.1 * n_rows))
    train_rows = n_rows - val_count
    if train_rows - 1 < d + MIN_EXTRA_OBS:
        raise DimensionError(
            f"trajectory too short to hold out {val_count} rows for validation")
    train = Trajectory(data=traj.data[:train_rows])
    reg = build_design(train, d)
    center = _theory_lambda_for(penalty, reg.X.shape[1], reg.n, rule)
    grid = np.geomspace(center * 10.0 ** (-rule.grid_decades),
                        center * 10.0 ** rule.grid_decades,
                        rule.grid_points)

    def score(lam):
        fit = _fit_design(reg, penalty, float(lam), cfg)
        err, _ = _one_step_errors(fit.coeffs, traj.data, train_rows)
        return err

    if n_jobs == 1:
        errors = np.asarray([score(lam) for lam in grid])
    else:
        errors = np.asarray(Parallel(n_jobs=n_jobs, prefer="threads")(
            delayed(score)(lam) for lam in grid))
    return float(grid[int(np.argmin(errors))]), grid, errors


def fit_var(traj: Trajectory, d: int, penalty: Penalty | None = None,
            lambda_rule: LambdaRule | float = 0.0,
            cfg: SolverConfig | None = None, n_jobs: int = 1) -> FitResult:
    """Fit a VAR(d) by p simultaneous penalized regressions sharing one level.

    The design is built once; every response column is fit against it with
    the same penalty and the same lambda, chosen by ``lambda_rule``.  The
    returned coefficients are stacked (dp, p), newest lag block first.
    """
    d = check_positive_int(d, "d")
    penalty = penalty if penalty is not None else L1Penalty()
    rule = _coerce_rule(lambda_rule)
    if traj.horizon < d + MIN_EXTRA_OBS:
        raise DimensionError(
            f"need T >= d + {MIN_EXTRA_OBS} observations, got T = {traj.horizon}")
    reg = build_design(traj, d)
    if rule.rule == "fixed":
        lam = rule.value
    elif rule.rule == "theory":
        lam = _theory_lambda_for(penalty, reg.X.shape[1], reg.n, rule)
    else:
        lam, _, _ = validation_lambda(traj, d, penalty, rule, cfg, n_jobs)
    return _fit_design(reg, penalty, lam, cfg, n_jobs)


def fit_varx(traj: Trajectory, d_endo: int, d_exo: int,
             lambda_rule: LambdaRule | float = 0.0,
             cfg: SolverConfig | None = None,
             exo_weight_scale: float = 1.0) -> FitResult:
    """Fit a VAR-X with the own/other weighted group penalty.

    The own-lag diagonals, the off-diagonal blocks, and the per-response
    exogenous rows form separate groups, so the fit is a single joint
    regression over the stacked ((d_endo + d_exo) p, p) coefficient.  With
    ``d_exo = 0`` this degenerates to a VAR fit under the same penalty.
    """
    d_endo = check_positive_int(d_endo, "d_endo")
    d_exo = check_nonnegative_int(d_exo, "d_exo")
    p = traj.p
    rule = _coerce_rule(lambda_rule)
    if traj.horizon < max(d_endo, d_exo) + MIN_EXTRA_OBS:
        raise DimensionError(
            f"need T >= lag + {MIN_EXTRA_OBS} observations, got T = {traj.horizon}")
    if d_exo == 0:
        reg = build_design(traj, d_endo)
    else:
        if traj.exo is None:
            raise ParameterError("VAR-X fit requires exogenous data on the trajectory")
        if traj.exo.shape[1] != p:
            raise DimensionError(
                f"exogenous series has {traj.exo.shape[1]} coordinates, expected {p}")
        reg = build_varx_design(traj, d_endo, d_exo)
    penalty = OwnOtherPenalty(p, d_endo, d_exo, exo_weight_scale=exo_weight_scale)
    if rule.rule == "fixed":
        lam = rule.value
    elif rule.rule == "theory":
        lam = _theory_lambda_for(penalty, reg.X.shape[1], reg.n, rule)
    else:
        raise ParameterError("validation rule is not supported for VAR-X fits")
    return _fit_design(reg, penalty, lam, cfg)


def fit_var_lowrank_sparse(traj: Trajectory, lambda_nuc: float, mu: float,
                           alpha: float, cfg: SolverConfig | None = None,
                           d: int = 1) -> FitResult:
    """Fit a VAR(1) whose transition splits into low-rank plus sparse parts.

    Only first-order models are supported; the result carries the two parts
    separately with their sum in ``coeffs``.
    """
    if d != 1:
        raise ParameterError(f"low-rank plus sparse fitting requires d = 1, got {d}")
    if traj.horizon < 1 + MIN_EXTRA_OBS:
        raise DimensionError(
            f"need T >= {1 + MIN_EXTRA_OBS} observations, got T = {traj.horizon}")
    reg = build_design(traj, 1)
    return lowrank_sparse_fit(reg.X, reg.Y, lambda_nuc, mu, alpha, cfg)


def _coeffs_of(fit) -> np.ndarray:
    if isinstance(fit, FitResult):
        arr = np.asarray(fit.coeffs, dtype=float)
    elif isinstance(fit, VarModel):
        arr = stack_coeffs(fit)
    else:
        arr = np.asarray(fit, dtype=float)
    if arr.ndim != 2:
        raise DimensionError("coefficients must be a stacked (dp, p) matrix")
    if arr.shape[0] % arr.shape[1] != 0:
        raise DimensionError(
            f"stacked coefficient shape {arr.shape} is not (d*p, p)")
    return arr


def predict(fit, history, horizon: int) -> np.ndarray:
    """Iterate one-step forecasts ``horizon`` steps past the given history.

    ``fit`` may be a fit result, a model, or a stacked (dp, p) coefficient
    matrix; forecasts past the first step feed on previous forecasts.
    """
    horizon = check_positive_int(horizon, "horizon")
    coeffs = _coeffs_of(fit)
    row_dim, p = coeffs.shape
    d = row_dim // p
    hist = check_array_2d(history, "history")
    if hist.shape[1] != p:
        raise DimensionError(
            f"history has {hist.shape[1]} coordinates, model has {p}")
    if hist.shape[0] < d:
        raise DimensionError(
            f"history must contain at least d = {d} observations, got {hist.shape[0]}")
    buf = hist[-d:].copy()
    out = np.empty((horizon, p))
    for k in range(horizon):
        lags = np.concatenate([buf[-1 - j] for j in range(d)])
        out[k] = lags @ coeffs
        buf = np.vstack([buf[1:], out[k]]) if d > 1 else out[k][None, :]
    return out


def eval_errors(fit, truth, holdout, horizon: int = PRED_HORIZON) -> ErrorMetrics:
    """Coefficient errors against the truth plus held-out prediction error.

    ``holdout`` must supply d context rows followed by at least ``horizon``
    scored rows; each scored row is predicted one step ahead from realized
    (not forecast) lags.  The prediction error is the ratio of summed l2
    errors to summed l2 magnitudes, so the zero predictor scores 1.
    """
    est = _coeffs_of(fit)
    true = _coeffs_of(truth)
    if est.shape != true.shape:
        raise DimensionError(
            f"estimate shape {est.shape} does not match truth shape {true.shape}")
    row_dim, p = est.shape
    d = row_dim // p
    hold = holdout.data if isinstance(holdout, Trajectory) else check_array_2d(
        holdout, "holdout")
    if hold.shape[1] != p:
        raise DimensionError(
            f"holdout has {hold.shape[1]} coordinates, model has {p}")
    if hold.shape[0] < d + horizon:
        raise DimensionError(
            f"holdout must contain d + horizon = {d + horizon} rows, got {hold.shape[0]}")
    hold = hold[:d + horizon]

    diff = est - true
    frob = float(np.linalg.norm(diff))
    truth_norm = float(np.linalg.norm(true))
    if truth_norm > 0:
        rel = frob / truth_norm
    else:
        rel = 0.0 if frob == 0 else float("inf")
    max_row = float(np.max(np.linalg.norm(diff, axis=0)))
    err, mag = _one_step_errors(est, hold, d)
    pred = err / mag if mag > 0 else 0.0
    return ErrorMetrics(frob_err=frob, rel_err=rel, pred_err=pred,
                        max_row_l2=max_row)


def coeffs_to_csv(fit, path) -> None:
    """Write a stacked coefficient matrix as plain CSV, one row per line."""
    arr = _coeffs_of(fit)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"b{j + 1}" for j in range(arr.shape[1])])
        for row in arr:
            writer.writerow([repr(float(v)) for v in row])


class _EstimatorBase(BaseEstimator):
    """Shared plumbing for the estimator wrappers."""

    def _check_fitted(self):
        check_is_fitted(self, "coeffs_")


class SparseVAR(_EstimatorBase):
    """Penalized VAR estimator with a shared penalty level across responses.

    Parameters mirror ``fit_var``; after fitting, ``coeffs_`` holds the
    stacked (dp, p) coefficient matrix and ``fit_result_`` the full record.
    """

    def __init__(self, d: int = 1, penalty: Penalty | None = None,
                 lambda_rule: LambdaRule | float = 0.0,
                 max_iters: int = 50_000, rel_tol: float = 1e-8,
                 n_jobs: int = 1):
        self.d = d
        self.penalty = penalty
        self.lambda_rule = lambda_rule
        self.max_iters = max_iters
        self.rel_tol = rel_tol
        self.n_jobs = n_jobs

    def _cfg(self) -> SolverConfig:
        return SolverConfig(max_iters=self.max_iters, rel_tol=self.rel_tol)

    def fit(self, X, y=None):
        traj = X if isinstance(X, Trajectory) else Trajectory(data=np.asarray(X, dtype=float))
        self.fit_result_ = fit_var(traj, self.d, self.penalty,
                                   self.lambda_rule, self._cfg(), self.n_jobs)
        self.coeffs_ = self.fit_result_.coeffs
        return self

    def predict(self, history, horizon: int = 1) -> np.ndarray:
        self._check_fitted()
        return predict(self.coeffs_, history, horizon)

    def score(self, truth, holdout) -> float:
        """Negated relative coefficient error, so larger is better."""
        self._check_fitted()
        return -eval_errors(self.coeffs_, truth, holdout).rel_err


class SparseVARX(_EstimatorBase):
    """VAR-X estimator under the own/other group penalty."""

    def __init__(self, d_endo: int = 1, d_exo: int = 1,
                 lambda_rule: LambdaRule | float = 0.0,
                 exo_weight_scale: float = 1.0,
                 max_iters: int = 50_000, rel_tol: float = 1e-8):
        self.d_endo = d_endo
        self.d_exo = d_exo
        self.lambda_rule = lambda_rule
        self.exo_weight_scale = exo_weight_scale
        self.max_iters = max_iters
        self.rel_tol = rel_tol

    def fit(self, X, exo=None):
        if isinstance(X, Trajectory):
            traj = X
        else:
            traj = Trajectory(data=np.asarray(X, dtype=float),
                              exo=None if exo is None else np.asarray(exo, dtype=float))
        cfg = SolverConfig(max_iters=self.max_iters, rel_tol=self.rel_tol)
        self.fit_result_ = fit_varx(traj, self.d_endo, self.d_exo,
                                    self.lambda_rule, cfg,
                                    self.exo_weight_scale)
        self.coeffs_ = self.fit_result_.coeffs
        return self


class LowRankSparseVAR(_EstimatorBase):
    """VAR(1) estimator splitting the transition into low-rank plus sparse."""

    def __init__(self, lambda_nuc: float = 0.1, mu_sparse: float = 0.1,
                 alpha_box: float = 1.0, max_iters: int = 50_000,
                 rel_tol: float = 1e-8):
        self.lambda_nuc = lambda_nuc
        self.mu_sparse = mu_sparse
        self.alpha_box = alpha_box
        self.max_iters = max_iters
        self.rel_tol = rel_tol

    def fit(self, X, y=None):
        traj = X if isinstance(X, Trajectory) else Trajectory(data=np.asarray(X, dtype=float))
        cfg = SolverConfig(max_iters=self.max_iters, rel_tol=self.rel_tol)
        self.fit_result_ = fit_var_lowrank_sparse(traj, self.lambda_nuc,
                                                  self.mu_sparse,
                                                  self.alpha_box, cfg)
        self.coeffs_ = self.fit_result_.coeffs
        self.lowrank_ = self.fit_result_.lowrank
        self.sparse_ = self.fit_result_.sparse
        return self

    def predict(self, history, horizon: int = 1) -> np.ndarray:
        self._check_fitted()
        return predict(self.coeffs_, history, horizon)
