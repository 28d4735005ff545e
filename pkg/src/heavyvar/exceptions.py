"""Exception taxonomy shared across the package.

Every raised error is one of these four categories so callers (and the CLI)
can distinguish bad parameters from structural mismatches, unstable models,
and truncation failures.
"""

from __future__ import annotations


class ParameterError(ValueError):
    """A scalar or flag argument is outside its admissible range."""


class DimensionError(ValueError):
    """Array shapes or index structures do not line up."""


class StabilityError(RuntimeError):
    """The model is not stable (spectral radius of the transition >= 1)."""


class TruncationError(RuntimeError):
    """An infinite-series computation hit its term budget before the
    requested tolerance was certified.

    Carries the partial value so callers can inspect how far it got.
    """

    def __init__(self, message: str, partial: float | None = None):
        super().__init__(message)
        self.partial = partial


class NumericalError(RuntimeError):
    """An iterative routine failed to reach a usable state."""
