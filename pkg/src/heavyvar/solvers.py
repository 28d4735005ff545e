"""First-order solvers for penalized multi-response regression.

All fits minimize (1/n)||Y - X beta||_F^2 plus a penalty term; traces of
accepted objective values are nonincreasing by construction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ._validation import (
    check_array_2d,
    check_nonnegative_float,
    check_positive_float,
    check_positive_int,
)
from .exceptions import DimensionError, ParameterError
from .penalties import Penalty

__all__ = [
    "SolverConfig",
    "FitResult",
    "fista_fit",
    "ols_fit",
    "dantzig_l1",
    "lowrank_sparse_fit",
    "lambda_zero_threshold",
    "sample_size_theory",
]


@dataclass(frozen=True)
class SolverConfig:
    """Iteration budget and tolerances shared by the iterative solvers."""

    max_iters: int = 50_000
    rel_tol: float = 1e-8
    step_rule: str = "fixed"      # "fixed" seeds 1/L from 50 power iterations
    restart: bool = True          # momentum reset whenever the objective rises

    def __post_init__(self):
        check_positive_int(self.max_iters, "max_iters")
        check_positive_float(self.rel_tol, "rel_tol")
        if self.step_rule not in ("fixed", "backtracking"):
            raise ParameterError(
                f"step_rule must be 'fixed' or 'backtracking', got {self.step_rule!r}")


@dataclass
class FitResult:
    """Solver output: coefficients plus convergence diagnostics.

    ``lowrank`` and ``sparse`` are populated only by the decomposition
    solver, in which case ``coeffs`` is their sum.
    """

    coeffs: np.ndarray
    objective_trace: np.ndarray
    iters: int
    converged: bool
    lambda_used: float
    lowrank: np.ndarray | None = None
    sparse: np.ndarray | None = None

    def to_json(self, include_trace: bool = False) -> str:
        payload = {
            "coeffs": np.asarray(self.coeffs).tolist(),
            "iters": int(self.iters),
            "converged": bool(self.converged),
            "lambda_used": float(self.lambda_used),
        }
        if include_trace:
            payload["objective_trace"] = np.asarray(self.objective_trace).tolist()
        if self.lowrank is not None:
            payload["lowrank"] = np.asarray(self.lowrank).tolist()
        if self.sparse is not None:
            payload["sparse"] = np.asarray(self.sparse).tolist()
        return json.dumps(payload)


def _as_design(X, Y):
    X = check_array_2d(X, "X")
    Y = np.asarray(Y, dtype=float)
    squeeze = Y.ndim == 1
    if squeeze:
        Y = Y[:, None]
    Y = check_array_2d(Y, "Y")
    if Y.shape[0] != X.shape[0]:
        raise DimensionError(
            f"X has {X.shape[0]} rows but Y has {Y.shape[0]}")
    return X, Y, squeeze


def _gram_top_eig(Q: np.ndarray, iters: int = 50, rng_seed: int = 0) -> float:
    # power iteration on a symmetric PSD matrix; may underestimate slightly,
    # which the descent checks absorb by doubling
    rng = np.random.default_rng(rng_seed)
    v = rng.standard_normal(Q.shape[0])
    v /= np.linalg.norm(v)
    for _ in range(iters):
        w = Q @ v
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        v = w / nw
    return float(v @ Q @ v)


def lambda_zero_threshold(X, Y, penalty: Penalty) -> float:
    """Smallest penalty level at which the zero solution is optimal.

    Equals the dual norm of the gradient of the smooth part at zero.
    """
    X, Y, _ = _as_design(X, Y)
    n = X.shape[0]
    return penalty.dual(2.0 * (X.T @ Y) / n)


def fista_fit(X, Y, penalty: Penalty, lam: float, cfg: SolverConfig | None = None
              ) -> FitResult:
    """Accelerated proximal gradient for (1/n)||Y - X b||_F^2 + lam * R(b).

    A failed descent check first resets the momentum, then doubles the
    inverse step, so the recorded objective trace never increases.
    Termination requires three consecutive tiny relative objective changes
    together with a small proximal fixed-point residual.
    """
    cfg = cfg or SolverConfig()
    lam = check_nonnegative_float(lam, "lam")
    X, Y, squeeze = _as_design(X, Y)
    n, d = X.shape
    q = Y.shape[1]

    Q = (X.T @ X) / n
    C = (X.T @ Y) / n
    lip = 2.0 * _gram_top_eig(Q) if cfg.step_rule == "fixed" else 1.0
    if lip <= 0:
        lip = 1.0

    def objective(b):
        R = X @ b - Y
        return float(np.sum(R * R)) / n + (lam * penalty.value(b) if lam > 0 else 0.0)

    def grad(b):
        return 2.0 * (Q @ b - C)

    def prox_step(b, step):
        cand = b - step * grad(b)
        return penalty.prox(cand, step * lam) if lam > 0 else cand

    beta = np.zeros((d, q))
    momentum = beta.copy()
    t_mom = 1.0
    f_curr = objective(beta)
    trace = [f_curr]
    streak = 0
    converged = False
    iters = 0

    for iters in range(1, cfg.max_iters + 1):
        accepted = False
        stalled = False
        for _ in range(80):
            step = 1.0 / lip
            cand = prox_step(momentum, step)
            f_cand = objective(cand)
            if f_cand <= f_curr:
                accepted = True
                break
            if cfg.restart and not np.array_equal(momentum, beta):
                momentum = beta.copy()
                t_mom = 1.0
                continue
            lip *= 2.0
        if not accepted:
            # no measurable descent left at machine precision
            stalled = True
            cand, f_cand = beta, f_curr

        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_mom * t_mom))
        momentum = cand + ((t_mom - 1.0) / t_next) * (cand - beta)
        t_mom = t_next
        beta = cand

        rel_change = abs(trace[-1] - f_cand) / max(1.0, abs(trace[-1]))
        f_curr = f_cand
        trace.append(f_curr)
        streak = streak + 1 if rel_change < cfg.rel_tol else 0
        if streak >= 3 or stalled:
            # confirm stationarity through the proximal fixed-point residual
            step = 1.0 / lip
            resid = np.linalg.norm(beta - prox_step(beta, step))
            if resid / max(1.0, np.linalg.norm(beta)) < cfg.rel_tol:
                converged = True
                break
            streak = 0
            if stalled:
                break

    coeffs = beta[:, 0] if squeeze else beta
    return FitResult(coeffs=coeffs, objective_trace=np.asarray(trace),
                     iters=iters, converged=converged, lambda_used=lam)


def ols_fit(X, Y) -> FitResult:
    """Minimum-norm least squares via the pseudoinverse path."""
    X, Y, squeeze = _as_design(X, Y)
    n = X.shape[0]
    beta, *_ = np.linalg.lstsq(X, Y, rcond=None)
    resid = X @ beta - Y
    obj = float(np.sum(resid * resid)) / n
    coeffs = beta[:, 0] if squeeze else beta
    return FitResult(coeffs=coeffs, objective_trace=np.asarray([obj]),
                     iters=1, converged=True, lambda_used=0.0)


def dantzig_l1(X, y, lam: float, cfg: SolverConfig | None = None) -> FitResult:
    """l1-minimal coefficients subject to a sup-norm cap on the correlation
    of the residual with the design.

    Operator splitting on the pair (b, z), where z tracks the correlation
    vector: a linearized l1 shrink on b, a box clip on z, and a dual update.
    The trace holds only the l1 value of the returned point; intermediate
    iterates of a splitting scheme carry no monotone objective.
    """
    cfg = cfg or SolverConfig()
    lam = check_positive_float(lam, "lam")
    X = check_array_2d(X, "X")
    y = np.asarray(y, dtype=float).ravel()
    if y.size != X.shape[0]:
        raise DimensionError(f"y length {y.size} does not match X rows {X.shape[0]}")
    n, d = X.shape
    Q = (X.T @ X) / n
    c = (X.T @ y) / n

    if lam >= float(np.max(np.abs(c))):
        return FitResult(coeffs=np.zeros(d), objective_trace=np.asarray([0.0]),
                         iters=0, converged=True, lambda_used=lam)

    rho = 1.0
    # the linearization constant must dominate rho * ||Q||^2
    mu = rho * max(_gram_top_eig(Q @ Q), 1e-12) * 1.05
    beta = np.zeros(d)
    z = np.clip(c, -lam, lam)
    u = np.zeros(d)
    converged = False
    iters = 0
    scale = max(1.0, float(np.max(np.abs(c))))

    for iters in range(1, cfg.max_iters + 1):
        resid = Q @ beta + z - c + u
        beta = beta - (rho / mu) * (Q @ resid)
        thr = 1.0 / mu
        beta = np.sign(beta) * np.maximum(np.abs(beta) - thr, 0.0)
        z_new = np.clip(c - Q @ beta - u, -lam, lam)
        primal = Q @ beta + z_new - c
        dual_shift = rho * np.linalg.norm(Q @ (z_new - z))
        z = z_new
        u = u + primal
        if (float(np.max(np.abs(primal))) < 1e-10 * scale
                and dual_shift < 1e-10 * scale):
            converged = True
            break

    slack = float(np.max(np.abs(c - Q @ beta)))
    if converged and slack > lam * (1 + 1e-6) + 1e-6:
        converged = False
    return FitResult(coeffs=beta,
                     objective_trace=np.asarray([float(np.sum(np.abs(beta)))]),
                     iters=iters, converged=converged, lambda_used=lam)


def _svt(M: np.ndarray, tau: float) -> np.ndarray:
    left, sing, right = np.linalg.svd(M, full_matrices=False)
    shrunk = np.maximum(sing - tau, 0.0)
    return (left * shrunk) @ right


def lowrank_sparse_fit(X, Y, lambda_nuc: float, mu_sparse: float,
                       alpha_box: float, cfg: SolverConfig | None = None
                       ) -> FitResult:
    """Split the coefficient matrix into a box-bounded low-rank part plus a
    sparse part by alternating proximal gradient steps.

    The low-rank update applies singular-value shrinkage and then clips
    entries to the box; that composition is an inexact proximal step for the
    constrained nuclear term, so each step is accepted only under a monotone
    line search on the true objective.
    """
    cfg = cfg or SolverConfig()
    lambda_nuc = check_nonnegative_float(lambda_nuc, "lambda_nuc")
    mu_sparse = check_nonnegative_float(mu_sparse, "mu_sparse")
    X, Y, _ = _as_design(X, Y)
    n, d = X.shape
    q = Y.shape[1]
    alpha_box = check_positive_float(alpha_box, "alpha_box")
    if not 1.0 <= alpha_box <= q:
        raise ParameterError(
            f"alpha_box must lie in [1, {q}], got {alpha_box}")
    box = alpha_box / q

    Q = (X.T @ X) / n
    C = (X.T @ Y) / n

    def objective(L, S):
        R = X @ (L + S) - Y
        return (float(np.sum(R * R)) / n
                + lambda_nuc * float(np.sum(np.linalg.svd(L, compute_uv=False)))
                + mu_sparse * float(np.sum(np.abs(S))))

    L = np.zeros((d, q))
    S = np.zeros((d, q))
    lip = 4.0 * max(_gram_top_eig(Q), 1e-12)
    f_curr = objective(L, S)
    trace = [f_curr]
    streak = 0
    converged = False
    iters = 0

    for iters in range(1, cfg.max_iters + 1):
        G = 2.0 * (Q @ (L + S) - C)
        accepted = False
        step = 1.0 / lip
        for _ in range(60):
            L_new = np.clip(_svt(L - step * G, step * lambda_nuc), -box, box)
            S_new = np.sign(S - step * G) * np.maximum(
                np.abs(S - step * G) - step * mu_sparse, 0.0)
            f_new = objective(L_new, S_new)
            if f_new <= f_curr:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            # no direction of measurable decrease: treat as stationary
            converged = True
            break
        L, S = L_new, S_new
        rel_change = abs(f_curr - f_new) / max(1.0, abs(f_curr))
        f_curr = f_new
        trace.append(f_curr)
        streak = streak + 1 if rel_change < cfg.rel_tol else 0
        if streak >= 3:
            converged = True
            break

    np.clip(L, -box, box, out=L)
    return FitResult(coeffs=L + S, objective_trace=np.asarray(trace),
                     iters=iters, converged=converged, lambda_used=lambda_nuc,
                     lowrank=L, sparse=S)


def sample_size_theory(width_unit_ball_sq: float, width_cone_sq: float,
                       gamma2: float, K: float, c_factor: float,
                       lambda_min_sigma: float, phi_bar: float = 1.0,
                       c_abs: float = 1.0) -> tuple[float, float]:
    """Sample-size thresholds for the deviation and curvature guarantees.

    Returns (n_dev, n_re): beyond n_dev the noise-correlation bound holds,
    beyond n_re the restricted-curvature bound does.  ``c_abs`` plays the
    role of both unspecified absolute constants.
    """
    gamma2 = check_positive_float(gamma2, "gamma2")
    if gamma2 > 2.0:
        raise ParameterError(f"gamma2 must lie in (0, 2], got {gamma2}")
    width_unit_ball_sq = check_positive_float(width_unit_ball_sq,
                                              "width_unit_ball_sq")
    width_cone_sq = check_positive_float(width_cone_sq, "width_cone_sq")
    K = check_positive_float(K, "K")
    c_factor = check_positive_float(c_factor, "c_factor")
    lambda_min_sigma = check_positive_float(lambda_min_sigma, "lambda_min_sigma")
    phi_bar = check_positive_float(phi_bar, "phi_bar")
    c_abs = check_positive_float(c_abs, "c_abs")

    n_dev = (c_abs * width_unit_ball_sq) ** (4.0 / gamma2 - 1.0)
    bracket = max(1.0, 16.0 * phi_bar**2 * K**4 * c_factor**2
                  / lambda_min_sigma**2)
    n_re = (c_abs * bracket * width_cone_sq) ** (2.0 / gamma2)
    return float(n_dev), float(n_re)
