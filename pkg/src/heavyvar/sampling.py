"""Heavy-tailed innovation sampling and random transition-matrix generators.

Innovations are symmetrized Weibull draws: an independent random sign times
Weibull(shape=gamma2, scale=1), standardized to unit variance, then scaled.
Symmetrization gives exact mean zero and preserves the tail index gamma2,
so gamma2=2 is (sub)Gaussian-like weight and gamma2<1 is heavier than
exponential.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import dependence
from ._validation import check_positive_int, check_rng
from .exceptions import NumericalError, ParameterError, StabilityError
from .model import Trajectory, VarModel, VarxModel, build_companion, build_varx_companion

_MAX_RESAMPLE = 50


@dataclass(frozen=True)
class NoiseSpec:
    gamma2: float
    scale: float = 1.0
    p: int = 1

    def __post_init__(self):
        if not (0 < self.gamma2 <= 2):
            raise ParameterError(f"gamma2 must lie in (0, 2], got {self.gamma2}")
        if not (self.scale > 0):
            raise ParameterError(f"scale must be positive, got {self.scale}")
        check_positive_int(self.p, "p")

    @property
    def subweibull_norm(self) -> float:
        """Orlicz psi_{gamma2} norm of one scaled coordinate.

        For W ~ Weibull(gamma2), W^gamma2 is Exp(1), so E exp(W^g / c^g) =
        (1 - c^{-g})^{-1} <= 2 exactly at c = 2^{1/g}; standardization and
        scaling act multiplicatively.
        """
        g = self.gamma2
        return self.scale * 2.0 ** (1.0 / g) / math.sqrt(math.gamma(1.0 + 2.0 / g))


@dataclass(frozen=True)
class TransitionGenSpec:
    p: int
    s: int
    target_rho: float
    lowrank_rank: int | None = None
    lowrank_density: float | tuple[float, float] | None = None
    seed: int | None = None

    def __post_init__(self):
        check_positive_int(self.p, "p")
        check_positive_int(self.s, "s")
        if self.s > self.p * self.p:
            raise ParameterError(f"s={self.s} exceeds p^2={self.p * self.p}")
        if not (0 < self.target_rho < 1):
            raise ParameterError(f"target_rho must lie in (0, 1), got {self.target_rho}")
        if self.lowrank_rank is not None:
            check_positive_int(self.lowrank_rank, "lowrank_rank")
            if self.lowrank_rank >= self.p:
                raise ParameterError(
                    f"low-rank part must have rank < p, got rank {self.lowrank_rank} with p {self.p}"
                )
            lo, hi = self._density_range()
            if not (0 < lo <= hi <= 1):
                raise ParameterError(f"lowrank_density must lie in (0, 1], got {self.lowrank_density}")

    def _density_range(self) -> tuple[float, float]:
        d = self.lowrank_density
        if d is None:
            raise ParameterError("lowrank_density required when lowrank_rank is set")
        if isinstance(d, tuple):
            return float(d[0]), float(d[1])
        return float(d), float(d)


def sample_subweibull(spec: NoiseSpec, n: int, rng=None) -> np.ndarray:
    """n x p matrix of iid standardized symmetrized Weibull(gamma2) draws."""
    n = check_positive_int(n, "n")
    rng = check_rng(rng)
    w = rng.weibull(spec.gamma2, size=(n, spec.p))
    signs = rng.integers(0, 2, size=(n, spec.p)) * 2 - 1
    std = math.sqrt(math.gamma(1.0 + 2.0 / spec.gamma2))
    return spec.scale * signs * w / std


def _rescale_to_radius(B: np.ndarray, target_rho: float) -> np.ndarray:
    rho = dependence.spectral_radius(B)
    if rho == 0.0:
        raise NumericalError("matrix has zero spectral radius; cannot rescale")
    return B * (target_rho / rho)


def gen_sparse_transition(spec: TransitionGenSpec, rng=None) -> np.ndarray:
    """Random s-sparse p x p transition with spectral radius target_rho.

    Support positions are uniform without replacement, values Uniform(0,1),
    then the whole matrix is rescaled; a draw whose pattern is nilpotent
    (zero spectral radius) is resampled a bounded number of times.
    """
    rng = check_rng(rng if rng is not None else spec.seed)
    p, s = spec.p, spec.s
    for _ in range(_MAX_RESAMPLE):
        B = np.zeros(p * p)
        idx = rng.choice(p * p, size=s, replace=False)
        B[idx] = rng.uniform(size=s)
        B = B.reshape(p, p)
        if dependence.spectral_radius(B) > 0.0:
            return _rescale_to_radius(B, spec.target_rho)
    raise NumericalError(
        f"sampled {_MAX_RESAMPLE} nilpotent sparsity patterns in a row (p={p}, s={s})"
    )


def gen_lowrank_sparse_transition(spec: TransitionGenSpec, rng=None) -> tuple[np.ndarray, np.ndarray]:
    """Random transition decomposed as exact-rank-r L plus sparse S.

    L is a product of independent Gaussian p x r and r x p factors; S draws
    its density uniformly from the requested range with Uniform(0,1) values.
    Both parts are rescaled by one common scalar so the spectral radius of
    L + S hits target_rho, which preserves rank(L) and the support of S.
    """
    if spec.lowrank_rank is None:
        raise ParameterError("spec has no low-rank block")
    rng = check_rng(rng if rng is not None else spec.seed)
    p, r = spec.p, spec.lowrank_rank
    lo, hi = spec._density_range()
    for _ in range(_MAX_RESAMPLE):
        density = rng.uniform(lo, hi)
        nnz = max(1, int(round(density * p * p)))
        L = (rng.standard_normal((p, r)) @ rng.standard_normal((r, p))) / p
        S = np.zeros(p * p)
        idx = rng.choice(p * p, size=nnz, replace=False)
        S[idx] = rng.uniform(size=nnz)
        S = S.reshape(p, p)
        rho = dependence.spectral_radius(L + S)
        if rho > 0.0 and np.linalg.matrix_rank(L, tol=1e-10) == r:
            c = spec.target_rho / rho
            return c * L, c * S
    raise NumericalError(f"failed to draw a usable low-rank plus sparse transition (p={p}, r={r})")


def rescale_model_to_radius(model: VarModel, target_rho: float, tol: float = 1e-8) -> VarModel:
    """Scale all lag matrices by one scalar so the companion radius hits target.

    For d = 1 the scalar is exact; for d > 1 it is found by bisection on the
    companion spectral radius, keeping the relative lag structure intact.
    """
    if not (0 < target_rho < 1):
        raise ParameterError(f"target_rho must lie in (0, 1), got {target_rho}")
    if model.d == 1:
        return VarModel(coeffs=(_rescale_to_radius(model.coeffs[0], target_rho),))

    def radius_at(c: float) -> float:
        scaled = VarModel(coeffs=tuple(c * B for B in model.coeffs))
        return dependence.spectral_radius(build_companion(scaled))

    if radius_at(1.0) == 0.0:
        raise NumericalError("companion has zero spectral radius; cannot rescale")
    hi = 1.0
    while radius_at(hi) < target_rho:
        hi *= 2.0
        if hi > 1e12:
            raise NumericalError("bisection bracket for spectral rescale diverged")
    lo = 0.0
    while hi - lo > 1e-15:
        mid = (lo + hi) / 2.0
        if radius_at(mid) < target_rho:
            lo = mid
        else:
            hi = mid
        if abs(radius_at(mid) - target_rho) < tol:
            return VarModel(coeffs=tuple(mid * B for B in model.coeffs))
    raise NumericalError("spectral rescale bisection did not converge")


def _check_model_stability(comp: np.ndarray, allow_unstable: bool) -> None:
    rho = dependence.spectral_radius(comp)
    if rho >= 1.0:
        if not allow_unstable:
            raise StabilityError(
                f"companion spectral radius {rho:.6f} >= 1; pass allow_unstable=True to simulate anyway"
            )
        warnings.warn(f"simulating an unstable model (spectral radius {rho:.6f})", RuntimeWarning)


def simulate_var(
    model: VarModel | VarxModel,
    noise: NoiseSpec,
    T: int,
    burn_in: int = 500,
    rng=None,
    allow_unstable: bool = False,
    return_innovations: bool = False,
    exo_noise: NoiseSpec | None = None,
    innovations: np.ndarray | None = None,
    exo_innovations: np.ndarray | None = None,
):
    """Simulate T+1 post-burn-in observations Z_0..Z_T from zero initial state.

    For a VarxModel the exogenous process is white noise (drawn from
    `exo_noise`, defaulting to `noise`) and the returned trajectory carries it
    alongside the endogenous data.  With return_innovations=True the
    endogenous innovation matrix aligned with the returned observations is
    returned as a second value, so `Y - X @ B_stacked` reconstructs it
    exactly on the design rows.  A pre-drawn innovation matrix of shape
    (burn_in + T + 1, p) can be injected via `innovations` for replay.
    """
    T = check_positive_int(T, "T")
    if burn_in < 0:
        raise ParameterError(f"burn_in must be nonnegative, got {burn_in}")
    if noise.p != model.p:
        raise ParameterError(f"noise dimension {noise.p} does not match model dimension {model.p}")
    rng = check_rng(rng)
    total = burn_in + T + 1

    def draw_or_check(spec: NoiseSpec, given: np.ndarray | None, name: str) -> np.ndarray:
        if given is None:
            return sample_subweibull(spec, total, rng)
        given = np.asarray(given, dtype=float)
        if given.shape != (total, model.p):
            raise ParameterError(
                f"{name} must have shape (burn_in + T + 1, p) = {(total, model.p)}, got {given.shape}"
            )
        return given

    if isinstance(model, VarxModel):
        _check_model_stability(build_varx_companion(model), allow_unstable)
        eps = draw_or_check(noise, innovations, "innovations")
        exo_spec = exo_noise or NoiseSpec(gamma2=noise.gamma2, scale=noise.scale, p=model.p)
        if exo_spec.p != model.p:
            raise ParameterError("exogenous noise dimension does not match model")
        eta = draw_or_check(exo_spec, exo_innovations, "exo_innovations")
        x = np.zeros((total, model.p))
        da, db = model.d_endo, model.d_exo
        for t in range(total):
            acc = eps[t].copy()
            for i, A in enumerate(model.base.coeffs, start=1):
                if t - i >= 0:
                    acc += A.T @ x[t - i]
            for j, B in enumerate(model.exo_coeffs, start=1):
                if t - j >= 0:
                    acc += B.T @ eta[t - j]
            x[t] = acc
        traj = Trajectory(data=x[burn_in:], exo=eta[burn_in:])
        if return_innovations:
            return traj, eps[burn_in:]
        return traj
    _check_model_stability(build_companion(model), allow_unstable)
    eps = draw_or_check(noise, innovations, "innovations")
    z = np.zeros((total, model.p))
    for t in range(total):
        acc = eps[t].copy()
        for k, B in enumerate(model.coeffs, start=1):
            if t - k >= 0:
                acc += B.T @ z[t - k]
        z[t] = acc
    traj = Trajectory(data=z[burn_in:])
    if return_innovations:
        return traj, eps[burn_in:]
    return traj
