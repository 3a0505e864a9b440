"""Seedable space-filling and uniform sampling over a box.

All generators use numpy's ``PCG64`` bit generator (via
``numpy.random.default_rng``), so a fixed integer seed reproduces the
same points on every platform numpy supports.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, UsageError


@dataclass(frozen=True)
class Bounds:
    """Axis-aligned box ``lower <= x <= upper``."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lower.ndim != 1 or lower.shape != upper.shape or lower.size < 1:
            raise ConfigurationError(
                f"bounds must be two vectors of equal length >= 1, got {lower.shape} and {upper.shape}"
            )
        if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
            raise ConfigurationError("bounds must be finite")
        bad = np.flatnonzero(~(lower < upper))
        if bad.size:
            j = int(bad[0])
            raise ConfigurationError(
                f"lower[{j}]={lower[j]!r} must be strictly below upper[{j}]={upper[j]!r}"
            )
        lower.setflags(write=False)
        upper.setflags(write=False)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, x, tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def clip(self, x) -> np.ndarray:
        return np.clip(x, self.lower, self.upper)

    @classmethod
    def unit(cls, d: int) -> "Bounds":
        return cls(np.zeros(d), np.ones(d))


def as_bounds(bounds) -> Bounds:
    if isinstance(bounds, Bounds):
        return bounds
    lower, upper = bounds
    return Bounds(lower, upper)


def make_rng(seed) -> np.random.Generator:
    """Return a PCG64 generator; passes existing generators through."""
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise UsageError(f"seed must be an integer, got {seed!r}")
    return np.random.Generator(np.random.PCG64(int(seed) & 0xFFFFFFFFFFFFFFFF))


def _check_count(n):
    if isinstance(n, bool) or not isinstance(n, (int, np.integer)) or n < 1:
        raise UsageError(f"sample count must be a positive integer, got {n!r}")


def latin_hypercube(n: int, bounds, seed) -> np.ndarray:
    """Draw an ``(n, d)`` Latin hypercube design inside ``bounds``.

    Each dimension is split into ``n`` equal strata; every stratum receives
    exactly one coordinate, placed uniformly at random inside it, and the
    stratum order is an independent random permutation per dimension.
    """
    _check_count(n)
    bounds = as_bounds(bounds)
    rng = make_rng(seed)
    d = bounds.dim
    strata = np.column_stack([rng.permutation(n) for _ in range(d)])
    unit = (strata + rng.random((n, d))) / n
    points = bounds.lower + unit * bounds.width
    # guard against rounding past the upper face
    return np.minimum(points, bounds.upper)


def uniform_box(n: int, bounds, seed) -> np.ndarray:
    """Draw ``n`` independent uniform points inside ``bounds``."""
    _check_count(n)
    bounds = as_bounds(bounds)
    rng = make_rng(seed)
    points = bounds.lower + rng.random((n, bounds.dim)) * bounds.width
    return np.minimum(points, bounds.upper)


def default_n_init(d: int) -> int:
    return max(2 * (d + 1), 10)
