"""Structured penalties: values, dual norms, proximal operators, and the
closed-form width/compatibility constants that drive tuning.

Every penalty is a norm.  Vector penalties treat any input array as a flat
vector in C order and preserve the caller's shape through ``prox``; the
nuclear norm instead fixes a matrix shape at construction.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from ._validation import check_positive_float, check_positive_int, check_rng
from .exceptions import DimensionError, NumericalError, ParameterError

__all__ = [
    "Penalty",
    "L1Penalty",
    "GroupL21Penalty",
    "OwlPenalty",
    "KSupportPenalty",
    "NuclearPenalty",
    "OwnOtherPenalty",
    "penalty_value",
    "penalty_dual",
    "penalty_prox",
    "penalty_from_config",
    "gaussian_width_unit_ball",
    "BoundBundle",
    "theory_bounds",
    "lambda_theory",
]


def _as_flat(v) -> np.ndarray:
    arr = np.asarray(v, dtype=float)
    if arr.size == 0:
        raise DimensionError("penalty input must be non-empty")
    return arr.ravel()


class Penalty(ABC):
    """A norm together with its dual norm and proximal operator."""

    @abstractmethod
    def value(self, v) -> float:
        """Norm of ``v``."""

    @abstractmethod
    def dual(self, u) -> float:
        """Dual norm of ``u``: sup of <u, v> over the unit ball of ``value``."""

    @abstractmethod
    def prox(self, u, tau: float):
        """argmin_x 0.5*||x - u||^2 + tau*value(x), same shape as ``u``."""

    def _check_tau(self, tau: float) -> float:
        tau = float(tau)
        if tau < 0:
            raise ParameterError(f"prox step must be >= 0, got {tau}")
        return tau


class L1Penalty(Penalty):
    """Entrywise absolute-value sum."""

    def value(self, v) -> float:
        return float(np.sum(np.abs(_as_flat(v))))

    def dual(self, u) -> float:
        return float(np.max(np.abs(_as_flat(u))))

    def prox(self, u, tau: float):
        tau = self._check_tau(tau)
        arr = np.asarray(u, dtype=float)
        return np.sign(arr) * np.maximum(np.abs(arr) - tau, 0.0)

    def dual_ball_project(self, u, radius: float = 1.0):
        return np.clip(np.asarray(u, dtype=float), -radius, radius)


class GroupL21Penalty(Penalty):
    """Weighted sum of group Euclidean norms over a disjoint partition.

    ``groups`` are flat-index sets (C order for matrix inputs) that must
    partition ``0..dim-1``; weights are strictly positive.
    """

    def __init__(self, groups, weights=None):
        if not groups:
            raise ParameterError("at least one group required")
        self.groups = [np.asarray(g, dtype=np.intp).ravel() for g in groups]
        for g in self.groups:
            if g.size == 0:
                raise ParameterError("empty group not allowed")
        cover = np.concatenate(self.groups)
        self.dim = int(cover.size)
        if not np.array_equal(np.sort(cover), np.arange(self.dim)):
            raise ParameterError("groups must partition the index set")
        if weights is None:
            self.weights = np.ones(len(self.groups))
        else:
            self.weights = np.asarray(weights, dtype=float).ravel()
        if self.weights.size != len(self.groups):
            raise ParameterError("one weight per group required")
        if np.any(self.weights <= 0):
            raise ParameterError("group weights must be positive")

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    @property
    def max_group_size(self) -> int:
        return max(g.size for g in self.groups)

    def _flat(self, v) -> np.ndarray:
        x = _as_flat(v)
        if x.size != self.dim:
            raise DimensionError(f"expected {self.dim} entries, got {x.size}")
        return x

    def value(self, v) -> float:
        x = self._flat(v)
        return float(sum(w * np.linalg.norm(x[g])
                         for g, w in zip(self.groups, self.weights)))

    def dual(self, u) -> float:
        x = self._flat(u)
        return float(max(np.linalg.norm(x[g]) / w
                         for g, w in zip(self.groups, self.weights)))

    def prox(self, u, tau: float):
        tau = self._check_tau(tau)
        arr = np.asarray(u, dtype=float)
        x = self._flat(arr)
        out = np.empty_like(x)
        for g, w in zip(self.groups, self.weights):
            ng = np.linalg.norm(x[g])
            scale = max(0.0, 1.0 - tau * w / ng) if ng > 0 else 0.0
            out[g] = scale * x[g]
        return out.reshape(arr.shape)

    def dual_ball_project(self, u, radius: float = 1.0):
        arr = np.asarray(u, dtype=float)
        x = self._flat(arr)
        out = np.empty_like(x)
        for g, w in zip(self.groups, self.weights):
            ng = np.linalg.norm(x[g])
            cap = radius * w
            out[g] = x[g] * (cap / ng) if ng > cap else x[g]
        return out.reshape(arr.shape)


def _isotonic_decreasing(y: np.ndarray) -> np.ndarray:
    # Pool-adjacent-violators for a nonincreasing least-squares fit.
    # Blocks kept as (total, count); merge while averages fail to decrease.
    totals: list[float] = []
    counts: list[int] = []
    for val in y:
        t, c = float(val), 1
        while totals and totals[-1] * c <= t * counts[-1]:
            t += totals.pop()
            c += counts.pop()
        totals.append(t)
        counts.append(c)
    out = np.empty(y.size)
    pos = 0
    for t, c in zip(totals, counts):
        out[pos:pos + c] = t / c
        pos += c
    return out


class OwlPenalty(Penalty):
    """Sorted-magnitude weighted l1: sum_i w_i * |v|_(i) with w nonincreasing."""

    def __init__(self, weights):
        w = np.asarray(weights, dtype=float).ravel()
        if w.size == 0:
            raise ParameterError("weights must be non-empty")
        if np.any(np.diff(w) > 0):
            raise ParameterError("weights must be nonincreasing")
        if np.any(w < 0) or w[0] <= 0:
            raise ParameterError("weights must be nonnegative with w[0] > 0")
        self.weights = w
        self.dim = int(w.size)

    def _flat(self, v) -> np.ndarray:
        x = _as_flat(v)
        if x.size != self.dim:
            raise DimensionError(f"expected {self.dim} entries, got {x.size}")
        return x

    def value(self, v) -> float:
        z = np.sort(np.abs(self._flat(v)))[::-1]
        return float(z @ self.weights)

    def dual(self, u) -> float:
        z = np.sort(np.abs(self._flat(u)))[::-1]
        return float(np.max(np.cumsum(z) / np.cumsum(self.weights)))

    def prox(self, u, tau: float):
        tau = self._check_tau(tau)
        arr = np.asarray(u, dtype=float)
        x = self._flat(arr)
        a = np.abs(x)
        # stable sort keeps tied magnitudes in input order so unsorting is exact
        order = np.argsort(-a, kind="stable")
        fitted = _isotonic_decreasing(a[order] - tau * self.weights)
        np.maximum(fitted, 0.0, out=fitted)
        out = np.empty_like(x)
        out[order] = fitted
        out *= np.sign(x)
        return out.reshape(arr.shape)


def _project_topk(w: np.ndarray, k: int, radius: float) -> np.ndarray:
    """Project sorted nonnegative ``w`` onto {z : sum of k largest z_i^2 <= radius^2}.

    The constraint function is permutation and sign invariant, so projecting
    the decreasing magnitude profile and undoing the sort afterwards is exact.
    KKT stationarity gives z_i = w_i/(1+2*mu) strictly above the pooled level,
    a shared level c on the tie class of the k-th largest entry, and z_i = w_i
    below it; for each candidate split the multiplier solves the active
    constraint by bisection.
    """
    p = w.size
    if radius <= 0:
        return np.zeros_like(w)
    r2 = radius * radius
    if float(np.sum(w[:k] ** 2)) <= r2 * (1.0 + 1e-14):
        return w.copy()
    tol = 1e-9 * max(1.0, float(w[0]))
    cumsq = np.concatenate(([0.0], np.cumsum(w * w)))
    cums = np.concatenate(([0.0], np.cumsum(w)))
    for m in range(k):
        headsq = cumsq[m]
        for ell in range(k, p + 1):
            pool_total = cums[ell] - cums[m]
            pool_n = ell - m
            k_eff = k - m

            def gap(mu, _P=pool_total, _n=pool_n, _k=k_eff, _h=headsq):
                c = _P / (_n + 2.0 * mu * _k)
                return _h / (1.0 + 2.0 * mu) ** 2 + _k * c * c - r2

            if gap(0.0) <= 0.0:
                continue
            hi = 1.0
            while gap(hi) > 0.0:
                hi *= 2.0
                if hi > 1e18:
                    break
            if hi > 1e18:
                continue
            mu = brentq(gap, 0.0, hi, xtol=1e-15, rtol=8.9e-16, maxiter=300)
            c = pool_total / (pool_n + 2.0 * mu * k_eff)
            if m >= 1 and w[m - 1] / (1.0 + 2.0 * mu) < c - tol:
                continue
            if w[m] > c * (1.0 + 2.0 * mu) + tol:
                continue
            if w[ell - 1] < c - tol:
                continue
            if ell < p and w[ell] > c + tol:
                continue
            z = np.empty_like(w)
            z[:m] = w[:m] / (1.0 + 2.0 * mu)
            z[m:ell] = c
            z[ell:] = w[ell:]
            return z
    raise NumericalError("top-k ball projection: no consistent split found")


class KSupportPenalty(Penalty):
    """Tightest convex envelope of the l2 norm on k-sparse vectors.

    Equals l1 at k=1 and l2 at k=dim; between those it trades off both.
    """

    def __init__(self, k: int):
        self.k = check_positive_int(k, "k")

    def _flat(self, v) -> np.ndarray:
        x = _as_flat(v)
        if self.k > x.size:
            raise DimensionError(f"k={self.k} exceeds dimension {x.size}")
        return x

    def value(self, v) -> float:
        x = np.abs(self._flat(v))
        p, k = x.size, self.k
        if k == p:
            return float(np.linalg.norm(x))
        z = np.sort(x)[::-1]
        # unique split: r trailing entries past position k-r-1 get averaged
        for r in range(k):
            start = k - r - 1
            avg_tail = float(np.sum(z[start:])) / (r + 1.0)
            upper = np.inf if start == 0 else z[start - 1]
            if upper > avg_tail - 1e-12 and avg_tail >= z[start] - 1e-12:
                headsq = float(np.sum(z[:start] ** 2))
                return math.sqrt(headsq + avg_tail * avg_tail * (r + 1.0))
        raise NumericalError("no valid split found evaluating the norm")

    def dual(self, u) -> float:
        x = np.abs(self._flat(u))
        top = np.partition(x, x.size - self.k)[x.size - self.k:]
        return float(np.linalg.norm(top))

    def dual_ball_project(self, u, radius: float = 1.0):
        arr = np.asarray(u, dtype=float)
        x = self._flat(arr)
        a = np.abs(x)
        order = np.argsort(-a, kind="stable")
        z = _project_topk(a[order], self.k, radius)
        out = np.empty_like(x)
        out[order] = z
        out *= np.sign(x)
        return out.reshape(arr.shape)

    def prox(self, u, tau: float):
        # Moreau: prox of tau*norm = identity minus projection on the
        # tau-scaled dual ball.
        tau = self._check_tau(tau)
        arr = np.asarray(u, dtype=float)
        if tau == 0:
            self._flat(arr)
            return arr.copy()
        return arr - self.dual_ball_project(arr, radius=tau)


class NuclearPenalty(Penalty):
    """Singular-value sum on matrices of a fixed shape."""

    def __init__(self, shape):
        nr, nc = (int(s) for s in shape)
        if nr < 1 or nc < 1:
            raise ParameterError(f"invalid matrix shape {shape}")
        self.shape = (nr, nc)

    def _as_matrix(self, v) -> np.ndarray:
        arr = np.asarray(v, dtype=float)
        if arr.size != self.shape[0] * self.shape[1]:
            raise DimensionError(
                f"expected {self.shape[0]}x{self.shape[1]} entries, got size {arr.size}")
        return arr.reshape(self.shape)

    def value(self, v) -> float:
        return float(np.sum(np.linalg.svd(self._as_matrix(v), compute_uv=False)))

    def dual(self, u) -> float:
        return float(np.max(np.linalg.svd(self._as_matrix(u), compute_uv=False)))

    def prox(self, u, tau: float):
        tau = self._check_tau(tau)
        arr = np.asarray(u, dtype=float)
        mat = self._as_matrix(arr)
        left, sing, right = np.linalg.svd(mat, full_matrices=False)
        shrunk = np.maximum(sing - tau, 0.0)
        out = (left * shrunk) @ right
        return out.reshape(arr.shape)


class OwnOtherPenalty(GroupL21Penalty):
    """Lag-structured group norm for stacked transition coefficients.

    Acts on the flattened (d_a + d_b)*p by p stacked matrix whose first d_a
    row blocks hold the endogenous lag matrices and remaining d_b blocks the
    exogenous ones.  Each endogenous lag contributes a diagonal group (own
    effects, weight sqrt(p)) and an off-diagonal group (cross effects, weight
    sqrt(p*(p-1))); each exogenous predictor row is its own group with weight
    sqrt(p), optionally inflated by ``exo_weight_scale``.
    """

    def __init__(self, p: int, d_a: int, d_b: int = 0, exo_weight_scale: float = 1.0):
        p = check_positive_int(p, "p")
        d_a = check_positive_int(d_a, "d_a")
        if d_b < 0:
            raise ParameterError(f"d_b must be >= 0, got {d_b}")
        exo_weight_scale = check_positive_float(exo_weight_scale, "exo_weight_scale")
        groups: list[list[int]] = []
        weights: list[float] = []
        for i in range(d_a):
            base = i * p
            groups.append([(base + r) * p + r for r in range(p)])
            weights.append(math.sqrt(p))
            if p > 1:
                groups.append([(base + r) * p + c
                               for r in range(p) for c in range(p) if c != r])
                weights.append(math.sqrt(p * (p - 1)))
        for j in range(d_b):
            for row in range(p):
                base = ((d_a + j) * p + row) * p
                groups.append(list(range(base, base + p)))
                weights.append(math.sqrt(p) * exo_weight_scale)
        super().__init__(groups, weights)
        self.p = p
        self.d_a = d_a
        self.d_b = int(d_b)


def penalty_value(penalty: Penalty, v) -> float:
    return penalty.value(v)


def penalty_dual(penalty: Penalty, u) -> float:
    return penalty.dual(u)


def penalty_prox(penalty: Penalty, u, tau: float):
    if float(tau) <= 0:
        raise ParameterError(f"prox step must be > 0, got {tau}")
    return penalty.prox(u, tau)


_CONFIG_BUILDERS = {
    "l1": lambda cfg: L1Penalty(),
    "group": lambda cfg: GroupL21Penalty(cfg["groups"], cfg.get("weights")),
    "owl": lambda cfg: OwlPenalty(cfg["weights"]),
    "ksupport": lambda cfg: KSupportPenalty(cfg["k"]),
    "nuclear": lambda cfg: NuclearPenalty(cfg["shape"]),
    "own_other": lambda cfg: OwnOtherPenalty(
        cfg["p"], cfg["d_a"], cfg.get("d_b", 0), cfg.get("exo_weight_scale", 1.0)),
}


def penalty_from_config(cfg: dict) -> Penalty:
    """Build a penalty from a plain config mapping with a ``type`` key."""
    try:
        kind = cfg["type"]
    except (KeyError, TypeError) as exc:
        raise ParameterError("penalty config requires a 'type' key") from exc
    try:
        builder = _CONFIG_BUILDERS[kind]
    except KeyError as exc:
        raise ParameterError(
            f"unknown penalty type {kind!r}; expected one of {sorted(_CONFIG_BUILDERS)}"
        ) from exc
    try:
        return builder(cfg)
    except KeyError as exc:
        raise ParameterError(f"penalty config missing key {exc.args[0]!r}") from exc


def gaussian_width_unit_ball(penalty: Penalty, dim: int, mc_samples: int = 2000,
                             rng=None) -> tuple[float, float]:
    """Monte-Carlo mean of the dual norm of a standard Gaussian vector.

    The supremum of <g, v> over the unit ball of a norm is its dual norm at g,
    so the width of the ball is E[dual(g)].  Returns (estimate, std error).
    """
    dim = check_positive_int(dim, "dim")
    mc_samples = check_positive_int(mc_samples, "mc_samples")
    if mc_samples < 100:
        raise ParameterError(f"mc_samples must be >= 100, got {mc_samples}")
    rng = check_rng(rng)
    draws = rng.standard_normal((mc_samples, dim))
    vals = np.fromiter((penalty.dual(g) for g in draws), dtype=float,
                       count=mc_samples)
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(mc_samples))


@dataclass(frozen=True)
class BoundBundle:
    """Closed-form rate constants for one penalty at a given sparsity level.

    width_unit_ball bounds the Gaussian width of the unit norm ball;
    width_cone_sq bounds the squared width of the descent cone intersected
    with the Euclidean ball; phi and phi_bar are the norm compatibility
    constants in the two directions.  ``caveat`` flags entries taken verbatim
    from a closed form whose shape is inconsistent with the others.
    """

    width_unit_ball: float
    width_cone_sq: float
    phi: float
    phi_bar: float
    caveat: str | None = None


def _l1_bundle(p: int, s: int, weight_scale: float = 1.0) -> BoundBundle:
    # weight_scale c rescales the norm to c*l1: ball widths divide by c,
    # the cone is scale free, phi picks up c, phi_bar its inverse.
    return BoundBundle(
        width_unit_ball=2.0 * math.sqrt(math.log(2.0 * p)) / weight_scale,
        width_cone_sq=2.0 * s * math.log(p / s) + 1.25 * s,
        phi=2.0 * math.sqrt(s) * weight_scale,
        phi_bar=1.0 / weight_scale,
    )


def _check_sparsity(s, limit: int, what: str) -> int:
    s = check_positive_int(s, "s")
    if s > limit:
        raise ParameterError(f"s={s} exceeds {what} {limit}")
    return s


def theory_bounds(penalty: Penalty, p: int | None = None, s: int | None = None,
                  *, overlapping: bool = False, beta_max: float | None = None,
                  beta_min: float | None = None) -> BoundBundle:
    """Closed-form width and compatibility bounds for a sparsity level ``s``.

    ``s`` counts nonzero entries for entrywise penalties and active groups
    for group-structured ones.  The k-support variant additionally needs the
    extreme nonzero magnitudes ``beta_max`` and ``beta_min`` of the target.
    """
    if isinstance(penalty, L1Penalty):
        p = check_positive_int(p, "p")
        s = _check_sparsity(s, p, "dimension")
        return _l1_bundle(p, s)

    if isinstance(penalty, OwlPenalty):
        w = penalty.weights
        q = penalty.dim
        if p is not None and int(p) != q:
            raise ParameterError(f"p={p} conflicts with weight length {q}")
        if np.all(w == w[0]):
            # constant weights collapse the norm to a scaled l1
            s = _check_sparsity(s, q, "dimension")
            return _l1_bundle(q, s, weight_scale=float(w[0]))
        s = _check_sparsity(s, q - 1, "dimension minus 1")
        w_bar_p = float(np.mean(w))
        w_tilde_s = float(np.mean(w[s:]))
        if w_tilde_s <= 0:
            raise ParameterError("trailing weights average to zero")
        ratio = 2.0 * w[0] ** 2 / w_tilde_s
        return BoundBundle(
            width_unit_ball=2.0 * math.sqrt(2.0 + math.log(2.0 * q)) / w_bar_p,
            width_cone_sq=ratio * s * math.log(q / s) + 1.5 * s,
            phi=ratio * math.sqrt(s),
            phi_bar=1.0 / float(w[0]),
        )

    if isinstance(penalty, OwnOtherPenalty):
        pp, d_a, d_b = penalty.p, penalty.d_a, penalty.d_b
        if pp < 2:
            raise ParameterError("bounds require at least 2 coordinates")
        n_groups = 2 * d_a + pp * d_b
        s = _check_sparsity(s, n_groups, "group count")
        max_size = pp * (pp - 1)
        if max_size - s < 1:
            raise ParameterError(f"s={s} leaves no inactive slack in {max_size}")
        root_groups = math.sqrt(n_groups)
        return BoundBundle(
            width_unit_ball=(root_groups + 2.0 * math.sqrt(math.log(max_size)))
            / math.sqrt(pp),
            width_cone_sq=((math.sqrt(2.0 * math.log(max_size - s)) + root_groups) ** 2
                           + n_groups) * s / pp,
            phi=math.sqrt(s),
            phi_bar=1.0,
        )

    if isinstance(penalty, GroupL21Penalty):
        m = penalty.max_group_size
        n_groups = penalty.n_groups
        s = _check_sparsity(s, n_groups - 1, "group count minus 1")
        return BoundBundle(
            width_unit_ball=math.sqrt(m) + 2.0 * math.sqrt(math.log(n_groups)),
            width_cone_sq=((math.sqrt(2.0 * math.log(n_groups - s)) + math.sqrt(m)) ** 2
                           + m) * s,
            phi=float(s) if overlapping else math.sqrt(s),
            phi_bar=1.0,
        )

    if isinstance(penalty, KSupportPenalty):
        p = check_positive_int(p, "p")
        s = _check_sparsity(s, p, "dimension")
        k = penalty.k
        if k > p:
            raise ParameterError(f"k={k} exceeds dimension {p}")
        if beta_max is None or beta_min is None:
            raise ParameterError(
                "k-support bounds need beta_max and beta_min of the target")
        beta_max = check_positive_float(beta_max, "beta_max")
        beta_min = check_positive_float(beta_min, "beta_min")
        ratio = 2.0 * beta_max / beta_min
        return BoundBundle(
            width_unit_ball=math.sqrt(k) + 2.0 * math.sqrt(k * math.log(p / k) + k),
            width_cone_sq=math.sqrt(ratio * s * math.log(p / s) + 1.5 * s),
            phi=math.sqrt(2.0) * (1.0 + ratio),
            phi_bar=1.0,
            caveat="width_cone_sq keeps its published outer square root, which "
                   "is not on the squared-width scale of the other variants; "
                   "treat it as a heuristic",
        )

    raise ParameterError(
        f"no closed-form bounds for {type(penalty).__name__}")


def lambda_theory(width_unit_ball: float, n: int, K: float, c_factor: float,
                  phi_bar: float = 1.0, c_abs: float = 1.0) -> float:
    """Deviation-matching tuning level 2*phi_bar*K^2*C*sqrt(c_abs*w^2/n).

    ``c_abs`` stands in for the unspecified absolute constant; 1 by default.
    """
    n = check_positive_int(n, "n")
    width_unit_ball = check_positive_float(width_unit_ball, "width_unit_ball")
    K = check_positive_float(K, "K")
    c_factor = check_positive_float(c_factor, "c_factor")
    phi_bar = check_positive_float(phi_bar, "phi_bar")
    c_abs = check_positive_float(c_abs, "c_abs")
    return 2.0 * phi_bar * K * K * c_factor * math.sqrt(
        c_abs * width_unit_ball ** 2 / n)
