"""Temporal-dependence diagnostics for linear processes.

A stationary process X_t = sum_{j>=0} Psi_j eta_{t-j} is described by a
`LinearProcessSpec` (rule for the filter coefficients plus the innovation
covariance).  This module computes the scalar dependence factor

    C = sum_{i>=0} sum_{j>=0} ||Psi_{i+j}||_2 ||Psi_j||_2,

the stationary covariance, the spectral density f(theta), its extreme
eigenvalue envelope over frequencies, and the transfer-function envelope
mu_min/mu_max, with certified series truncation throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import solve_discrete_lyapunov

from ._validation import check_array_2d, check_square
from .exceptions import DimensionError, ParameterError, StabilityError, TruncationError

_RATIO_WINDOW = 5
_RATIO_MARGIN = 0.01


def spectral_radius(A) -> float:
    """Largest eigenvalue magnitude of a square matrix."""
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"spectral radius needs a square matrix, got shape {A.shape}")
    if A.shape[0] == 0:
        return 0.0
    if not np.all(np.isfinite(A)):
        raise ParameterError("matrix contains non-finite entries")
    return float(np.max(np.abs(np.linalg.eigvals(A))))


def op_norm(A) -> float:
    """Operator 2-norm (largest singular value)."""
    A = np.asarray(A)
    if A.ndim != 2:
        raise DimensionError(f"operator norm needs a 2-d array, got ndim {A.ndim}")
    if A.size == 0:
        return 0.0
    if not np.all(np.isfinite(A)):
        raise ParameterError("matrix contains non-finite entries")
    return float(np.linalg.norm(A, 2))


@dataclass(frozen=True)
class TruncationRule:
    tol: float = 1e-8
    max_terms: int = 20_000

    def __post_init__(self):
        if not (self.tol > 0):
            raise ParameterError(f"truncation tol must be positive, got {self.tol}")
        if self.max_terms < 2:
            raise ParameterError(f"max_terms must be at least 2, got {self.max_terms}")


@dataclass(frozen=True)
class LinearProcessSpec:
    """Filter rule Psi_j, innovation covariance, and truncation budget.

    `transition` optionally records the lag-1 generator A when the process is
    an autoregression with Psi_j = A^j; it enables the stability precondition
    check and fills the spectral-radius field of reports.
    """

    coeff_fn: Callable[[int], np.ndarray]
    sigma_eta: np.ndarray
    truncation: TruncationRule = field(default_factory=TruncationRule)
    transition: np.ndarray | None = None

    def __post_init__(self):
        S = check_square(self.sigma_eta, "sigma_eta")
        if not np.allclose(S, S.T, atol=1e-12):
            raise ParameterError("sigma_eta must be symmetric")
        if np.min(np.linalg.eigvalsh(S)) < -1e-10:
            raise ParameterError("sigma_eta must be positive semidefinite")
        object.__setattr__(self, "sigma_eta", S)
        if self.transition is not None:
            object.__setattr__(self, "transition", check_square(self.transition, "transition"))

    @property
    def p(self) -> int:
        return self.sigma_eta.shape[0]

    @classmethod
    def var1(cls, A, sigma_eta, truncation: TruncationRule | None = None) -> "LinearProcessSpec":
        """Process x_t = A x_{t-1} + eta_t, so Psi_j = A^j."""
        A = check_square(A, "A")

        def coeff_fn(j: int) -> np.ndarray:
            return np.linalg.matrix_power(A, j)

        return cls(
            coeff_fn=coeff_fn,
            sigma_eta=sigma_eta,
            truncation=truncation or TruncationRule(),
            transition=A,
        )

    @classmethod
    def white_noise(cls, sigma_eta) -> "LinearProcessSpec":
        sigma_eta = check_square(sigma_eta, "sigma_eta")
        p = sigma_eta.shape[0]
        return cls.var1(np.zeros((p, p)), sigma_eta)


@dataclass
class DependenceReport:
    c_factor: float
    rho: float | None = None
    op_norm: float | None = None
    m_upper: float | None = None
    m_lower: float | None = None
    truncation_terms: int = 0
    tail_bound: float = 0.0

    def to_json(self) -> dict:
        return {
            "c_factor": self.c_factor,
            "rho": self.rho,
            "op_norm": self.op_norm,
            "m_upper": self.m_upper,
            "m_lower": self.m_lower,
            "truncation_terms": self.truncation_terms,
            "tail_bound": self.tail_bound,
        }


def _check_stable(spec: LinearProcessSpec) -> None:
    if spec.transition is not None:
        rho = spectral_radius(spec.transition)
        if rho >= 1.0:
            raise StabilityError(f"generator spectral radius {rho:.6f} >= 1; series diverges")


def _tail_ratio(norms: list[float], rho: float | None) -> float | None:
    """Geometric decay ratio estimated from the trailing norms.

    Uses the max of the last few consecutive ratios; when the generator's
    spectral radius is known the estimate is floored at rho plus a safety
    margin, since the ratios approach rho only in the limit.  Returns None
    while no ratio < 1 can be certified.
    """
    if len(norms) < _RATIO_WINDOW + 1:
        return None
    tail = norms[-(_RATIO_WINDOW + 1):]
    ratios = [tail[i + 1] / tail[i] for i in range(len(tail) - 1) if tail[i] > 0]
    r = max(ratios) if ratios else 0.0
    if rho is not None and rho > 0:
        r = max(r, min(rho + _RATIO_MARGIN, 0.999999))
    return r if r < 1.0 else None


def _series_norms(spec: LinearProcessSpec) -> tuple[list[np.ndarray], list[float], float]:
    """Accumulate Psi_j until the geometric tail certificate drops below tol.

    Returns (coefficients, their 2-norms, tail bound on sum of omitted norms).
    """
    rule = spec.truncation
    rho = spectral_radius(spec.transition) if spec.transition is not None else None
    coeffs: list[np.ndarray] = []
    norms: list[float] = []
    for j in range(rule.max_terms):
        Psi = np.asarray(spec.coeff_fn(j), dtype=float)
        coeffs.append(Psi)
        norms.append(op_norm(Psi))
        r = _tail_ratio(norms, rho)
        if r is None:
            continue
        recent = norms[-_RATIO_WINDOW:]
        level = max(b * r**k for k, b in enumerate(reversed(recent)))
        tail = level * r / (1.0 - r)
        if tail < rule.tol:
            return coeffs, norms, tail
    raise TruncationError(
        f"series tail not certified below {rule.tol} within {rule.max_terms} terms",
        partial=float(sum(norms)),
    )


def dependence_factor(spec: LinearProcessSpec) -> DependenceReport:
    """Evaluate the double-sum dependence factor with a certified tail bound."""
    _check_stable(spec)
    rule = spec.truncation
    rho = spectral_radius(spec.transition) if spec.transition is not None else None
    norms: list[float] = []
    for j in range(rule.max_terms):
        norms.append(op_norm(np.asarray(spec.coeff_fn(j), dtype=float)))
        r = _tail_ratio(norms, rho)
        if r is None:
            continue
        recent = norms[-_RATIO_WINDOW:]
        level = max(b * r**k for k, b in enumerate(reversed(recent)))
        tau = level * r / (1.0 - r)
        partial_sum = float(sum(norms))
        tail_bound = tau * (partial_sum + tau)
        if tail_bound < rule.tol:
            a = np.asarray(norms)
            suffix = np.cumsum(a[::-1])[::-1]
            value = float(np.dot(a, suffix))
            return DependenceReport(
                c_factor=value,
                rho=rho,
                op_norm=op_norm(spec.transition) if spec.transition is not None else None,
                truncation_terms=len(norms),
                tail_bound=tail_bound,
            )
    a = np.asarray(norms)
    suffix = np.cumsum(a[::-1])[::-1]
    raise TruncationError(
        f"dependence factor tail not certified below {rule.tol} within {rule.max_terms} terms",
        partial=float(np.dot(a, suffix)),
    )


def solve_lyapunov(B, sigma_eta) -> np.ndarray:
    """Stationary covariance of x_t = B^T x_{t-1} + eta_t.

    Solves Sigma = B^T Sigma B + Sigma_eta; the result is symmetrized and the
    defining-equation residual is verified below 1e-10 in Frobenius norm
    (fixed-point refinement kicks in if the direct solve falls short).
    """
    B = check_square(B, "B")
    S = check_square(sigma_eta, "sigma_eta")
    if B.shape != S.shape:
        raise DimensionError(f"B has shape {B.shape} but sigma_eta has shape {S.shape}")
    rho = spectral_radius(B)
    if rho >= 1.0:
        raise StabilityError(f"transition spectral radius {rho:.6f} >= 1; no stationary covariance")
    Sigma = solve_discrete_lyapunov(B.T, S)
    Sigma = (Sigma + Sigma.T) / 2.0
    scale = max(1.0, float(np.linalg.norm(S)))
    for _ in range(100):
        residual = Sigma - B.T @ Sigma @ B - S
        if np.linalg.norm(residual) < 1e-10 * scale:
            return Sigma
        Sigma = B.T @ Sigma @ B + S
        Sigma = (Sigma + Sigma.T) / 2.0
    raise TruncationError("Lyapunov residual did not reach 1e-10", partial=float(np.linalg.norm(residual)))


def _transfer(coeffs: list[np.ndarray], theta: float) -> np.ndarray:
    phases = np.exp(-1j * theta * np.arange(len(coeffs)))
    return np.tensordot(phases, np.asarray(coeffs), axes=(0, 0))


def spectral_density(spec: LinearProcessSpec, theta: float) -> np.ndarray:
    """Spectral density f(theta) = A(e^{-i theta}) Sigma_eta A*(e^{-i theta}) / 2pi."""
    _check_stable(spec)
    theta = float(theta)
    if not -np.pi <= theta <= np.pi:
        raise ParameterError(f"theta must lie in [-pi, pi], got {theta}")
    coeffs, _, _ = _series_norms(spec)
    A = _transfer(coeffs, theta)
    f = A @ spec.sigma_eta @ A.conj().T / (2.0 * np.pi)
    return (f + f.conj().T) / 2.0


def _theta_grid(grid_size: int) -> np.ndarray:
    if grid_size < 8:
        raise ParameterError(f"grid_size must be at least 8, got {grid_size}")
    return -np.pi + 2.0 * np.pi * np.arange(grid_size) / grid_size


def stability_factors(spec: LinearProcessSpec, grid_size: int = 512) -> tuple[float, float]:
    """Grid envelope of the spectral density's extreme eigenvalues.

    Returns (m_upper, m_lower): the max over the theta grid of the largest
    eigenvalue of f(theta) and the min of the smallest.  Grid approximations:
    m_upper lower-bounds the essential sup, m_lower upper-bounds the
    essential inf.
    """
    _check_stable(spec)
    coeffs, _, _ = _series_norms(spec)
    stack = np.asarray(coeffs)
    thetas = _theta_grid(grid_size)
    phases = np.exp(-1j * np.outer(thetas, np.arange(len(coeffs))))
    transfers = np.tensordot(phases, stack, axes=(1, 0))
    f = transfers @ spec.sigma_eta @ transfers.conj().transpose(0, 2, 1) / (2.0 * np.pi)
    f = (f + f.conj().transpose(0, 2, 1)) / 2.0
    eig = np.linalg.eigvalsh(f)
    return float(eig[:, -1].max()), float(eig[:, 0].min())


def mu_bounds(spec: LinearProcessSpec, grid_size: int = 512) -> tuple[float, float]:
    """Extremes of the squared transfer-function singular values on |z| = 1.

    Returns (mu_min, mu_max) estimated on a uniform grid of the unit circle.
    """
    _check_stable(spec)
    coeffs, _, _ = _series_norms(spec)
    stack = np.asarray(coeffs)
    thetas = _theta_grid(grid_size)
    phases = np.exp(-1j * np.outer(thetas, np.arange(len(coeffs))))
    transfers = np.tensordot(phases, stack, axes=(1, 0))
    svals = np.linalg.svd(transfers, compute_uv=False)
    return float((svals[:, -1] ** 2).min()), float((svals[:, 0] ** 2).max())
