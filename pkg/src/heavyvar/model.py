"""Core VAR / VAR-X model containers, companion forms, and lagged designs.

Conventions used throughout the package:

* A VAR(d) process evolves as ``Z_t = B_1^T Z_{t-1} + ... + B_d^T Z_{t-d} + eps_t``.
  Coefficients are stored untransposed as ``B_k``; transposition happens when
  the companion matrix or a regression design is assembled.
* The stacked coefficient matrix is ``vstack(B_1, ..., B_d)`` of shape (dp, p),
  so that ``Y = X @ B_stacked + E`` for the lagged design built here.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_array_2d, check_positive_int
from .exceptions import DimensionError, ParameterError, StabilityError


@dataclass(frozen=True)
class VarModel:
    """A VAR(d) transition model in dimension p."""

    coeffs: tuple[np.ndarray, ...]
    stable: bool | None = None

    def __post_init__(self):
        if len(self.coeffs) == 0:
            raise ParameterError("VarModel needs at least one coefficient matrix")
        mats = tuple(np.asarray(B, dtype=float) for B in self.coeffs)
        p = mats[0].shape[0] if mats[0].ndim == 2 else -1
        for B in mats:
            if B.ndim != 2 or B.shape != (p, p):
                raise DimensionError(
                    f"all coefficient matrices must share one square shape, got {[m.shape for m in mats]}"
                )
            if not np.all(np.isfinite(B)):
                raise ParameterError("coefficient matrices must be finite")
        object.__setattr__(self, "coeffs", mats)
        if self.stable:
            comp = build_companion(self)
            rho = max(abs(np.linalg.eigvals(comp)))
            if rho >= 1.0:
                raise StabilityError(
                    f"model claimed stable but companion spectral radius is {rho:.6f}"
                )

    @property
    def p(self) -> int:
        return self.coeffs[0].shape[0]

    @property
    def d(self) -> int:
        return len(self.coeffs)


@dataclass(frozen=True)
class VarxModel:
    """A VAR-X model: endogenous VAR(d_A) block plus d_B exogenous lag matrices.

    The exogenous process is treated as white noise (its own autoregressive
    coefficient is zero), so the only exogenous parameters are the lag
    matrices coupling past exogenous values into the endogenous equation.
    """

    base: VarModel
    exo_coeffs: tuple[np.ndarray, ...]
    exo_dim: int = 0

    def __post_init__(self):
        p = self.base.p
        mats = tuple(np.asarray(B, dtype=float) for B in self.exo_coeffs)
        if len(mats) == 0:
            raise ParameterError("VarxModel needs at least one exogenous lag matrix")
        for B in mats:
            if B.ndim != 2 or B.shape != (p, p):
                raise DimensionError(
                    f"exogenous lag matrices must be {p}x{p} to match the endogenous block, "
                    f"got {[m.shape for m in mats]}"
                )
            if not np.all(np.isfinite(B)):
                raise ParameterError("exogenous lag matrices must be finite")
        object.__setattr__(self, "exo_coeffs", mats)
        if self.exo_dim == 0:
            object.__setattr__(self, "exo_dim", p)
        elif self.exo_dim != p:
            raise DimensionError(
                f"exogenous dimension {self.exo_dim} must match endogenous dimension {p}"
            )

    @property
    def p(self) -> int:
        return self.base.p

    @property
    def d_endo(self) -> int:
        return self.base.d

    @property
    def d_exo(self) -> int:
        return len(self.exo_coeffs)


@dataclass(frozen=True)
class Trajectory:
    """T+1 observed vectors Z_0..Z_T, optionally paired with exogenous data."""

    data: np.ndarray
    exo: np.ndarray | None = None

    def __post_init__(self):
        data = check_array_2d(self.data, "trajectory data")
        object.__setattr__(self, "data", data)
        if self.exo is not None:
            exo = check_array_2d(self.exo, "exogenous data")
            if exo.shape[0] != data.shape[0]:
                raise DimensionError(
                    f"exogenous data has {exo.shape[0]} rows, trajectory has {data.shape[0]}"
                )
            object.__setattr__(self, "exo", exo)

    @property
    def p(self) -> int:
        return self.data.shape[1]

    @property
    def horizon(self) -> int:
        """T, the index of the last observation (data holds T+1 rows)."""
        return self.data.shape[0] - 1

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t"] + [f"z{j + 1}" for j in range(self.p)])
            for t, row in enumerate(self.data):
                writer.writerow([t] + [repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path) -> "Trajectory":
        rows = []
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if not header or header[0] != "t":
                raise ParameterError(f"trajectory CSV must start with a 't' column, got {header[:3]}")
            for line in reader:
                rows.append([float(v) for v in line[1:]])
        return cls(data=np.asarray(rows, dtype=float))


@dataclass(frozen=True)
class RegressionData:
    """Lagged design X (n x dp) and multi-response Y (n x p), n = T - d + 1."""

    X: np.ndarray
    Y: np.ndarray
    d: int = 1

    def __post_init__(self):
        X = check_array_2d(self.X, "X")
        Y = check_array_2d(self.Y, "Y")
        if X.shape[0] != Y.shape[0]:
            raise DimensionError(f"X has {X.shape[0]} rows but Y has {Y.shape[0]}")
        if X.shape[1] != self.d * Y.shape[1]:
            raise DimensionError(
                f"X has {X.shape[1]} columns, expected d*p = {self.d * Y.shape[1]}"
            )
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.Y.shape[1]


def stack_coeffs(model: VarModel) -> np.ndarray:
    """Stack B_1..B_d vertically into the (dp, p) regression coefficient."""
    return np.vstack(model.coeffs)


def stack_varx_coeffs(model: VarxModel) -> np.ndarray:
    """Stack A_1..A_dA then B_1..B_dB into the ((dA+dB)p, p) coefficient."""
    return np.vstack(list(model.base.coeffs) + list(model.exo_coeffs))


def build_companion(model: VarModel) -> np.ndarray:
    """Lag-1 companion transition C with Z~_t = C Z~_{t-1} + (eps_t, 0, .., 0).

    The state is the stacked recent history Z~_t = (Z_t, Z_{t-1}, .., Z_{t-d+1}).
    Top block row is [B_1^T ... B_d^T]; identity blocks sit on the block
    sub-diagonal; everything else is zero.  For d = 1 this is just B_1^T.
    """
    p, d = model.p, model.d
    comp = np.zeros((d * p, d * p))
    for k, B in enumerate(model.coeffs):
        comp[:p, k * p:(k + 1) * p] = B.T
    for k in range(1, d):
        comp[k * p:(k + 1) * p, (k - 1) * p:k * p] = np.eye(p)
    return comp


def build_varx_companion(model: VarxModel) -> np.ndarray:
    """Companion transition for the augmented VAR-X state.

    The state stacks d_A endogenous blocks (x_t, .., x_{t-d_A+1}) followed by
    d_B exogenous blocks (z_t, .., z_{t-d_B+1}).  The x_t row carries
    [A_1^T .. A_dA^T | B_1^T .. B_dB^T]; shift identities fill the interior
    of each block; the z_t row is zero because the exogenous process is
    white noise entering through the augmented innovation.
    """
    p, da, db = model.p, model.d_endo, model.d_exo
    m = p * (da + db)
    comp = np.zeros((m, m))
    for i, A in enumerate(model.base.coeffs):
        comp[:p, i * p:(i + 1) * p] = A.T
    for j, B in enumerate(model.exo_coeffs):
        comp[:p, (da + j) * p:(da + j + 1) * p] = B.T
    for k in range(1, da):
        comp[k * p:(k + 1) * p, (k - 1) * p:k * p] = np.eye(p)
    for k in range(1, db):
        r = (da + k) * p
        c = (da + k - 1) * p
        comp[r:r + p, c:c + p] = np.eye(p)
    return comp


def build_design(traj: Trajectory, d: int) -> RegressionData:
    """Assemble the lagged regression for a VAR(d) fit.

    With observations Z_0..Z_T this produces n = T - d + 1 rows; row i of X
    stacks the d most recent lags newest-first, [Z_{i+d-1}, .., Z_i], and the
    matching response row of Y is Z_{i+d}.  Hence Y = X @ B_stacked + noise
    for the true stacked coefficient.
    """
    d = check_positive_int(d, "d")
    Z = traj.data
    T = traj.horizon
    if T < d:
        raise DimensionError(f"need at least d+1 = {d + 1} observations, got {T + 1}")
    p = traj.p
    n = T - d + 1
    X = np.empty((n, d * p))
    for k in range(d):
        X[:, k * p:(k + 1) * p] = Z[d - 1 - k:d - 1 - k + n]
    Y = Z[d:].copy()
    return RegressionData(X=X, Y=Y, d=d)


def build_varx_design(traj: Trajectory, d_endo: int, d_exo: int) -> RegressionData:
    """Lagged design for a VAR-X fit: endogenous lag blocks then exogenous.

    Row i of X is [x_{t-1}, .., x_{t-dA}, z_{t-1}, .., z_{t-dB}] for
    t = i + max(dA, dB); the response row is x_t.  Stored as RegressionData
    with d = dA + dB so shape checks treat the blocks uniformly.
    """
    da = check_positive_int(d_endo, "d_endo")
    db = check_positive_int(d_exo, "d_exo")
    if traj.exo is None:
        raise ParameterError("trajectory has no exogenous data")
    Zx, Zz = traj.data, traj.exo
    T = traj.horizon
    lag = max(da, db)
    if T < lag:
        raise DimensionError(f"need at least {lag + 1} observations, got {T + 1}")
    p = traj.p
    n = T - lag + 1
    X = np.empty((n, (da + db) * p))
    for k in range(da):
        X[:, k * p:(k + 1) * p] = Zx[lag - 1 - k:lag - 1 - k + n]
    for k in range(db):
        c = (da + k) * p
        X[:, c:c + p] = Zz[lag - 1 - k:lag - 1 - k + n]
    Y = Zx[lag:].copy()
    return RegressionData(X=X, Y=Y, d=da + db)
