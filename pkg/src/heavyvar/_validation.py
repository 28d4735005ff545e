"""Small input-validation helpers used across the public API."""

from __future__ import annotations

import numbers

import numpy as np

from .exceptions import DimensionError, ParameterError


def check_array_2d(a, name: str = "array") -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise DimensionError(f"{name} must be 2-dimensional, got ndim={a.ndim}")
    if not np.all(np.isfinite(a)):
        raise ParameterError(f"{name} contains non-finite entries")
    return a


def check_square(a, name: str = "matrix") -> np.ndarray:
    a = check_array_2d(a, name)
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {a.shape}")
    return a


def check_vector(v, name: str = "vector") -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise DimensionError(f"{name} must be 1-dimensional, got ndim={v.ndim}")
    if not np.all(np.isfinite(v)):
        raise ParameterError(f"{name} contains non-finite entries")
    return v


def check_positive_int(x, name: str) -> int:
    if not isinstance(x, numbers.Integral):
        raise ParameterError(f"{name} must be an integer, got {type(x).__name__}")
    if x <= 0:
        raise ParameterError(f"{name} must be positive, got {x}")
    return int(x)


def check_nonnegative_int(x, name: str) -> int:
    if not isinstance(x, numbers.Integral):
        raise ParameterError(f"{name} must be an integer, got {type(x).__name__}")
    if x < 0:
        raise ParameterError(f"{name} must be nonnegative, got {x}")
    return int(x)


def check_positive_float(x, name: str) -> float:
    x = float(x)
    if not np.isfinite(x) or x <= 0:
        raise ParameterError(f"{name} must be a positive finite number, got {x}")
    return x


def check_nonnegative_float(x, name: str) -> float:
    x = float(x)
    if not np.isfinite(x) or x < 0:
        raise ParameterError(f"{name} must be a nonnegative finite number, got {x}")
    return x


def check_rng(rng) -> np.random.Generator:
    if rng is None:
        return np.random.default_rng()
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, numbers.Integral):
        return np.random.default_rng(int(rng))
    raise ParameterError(f"rng must be None, an int seed, or a Generator, got {type(rng).__name__}")
