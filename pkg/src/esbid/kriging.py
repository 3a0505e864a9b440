"""Ordinary Kriging surrogate with fixed kernel hyperparameters.

The correlation between two points is

    corr(x, y) = exp(-sum_j upsilon_j * |x_j - y_j| ** w_j)

and the predictor is ``s(x) = mu + r(x)^T R^{-1} (f - 1 mu)`` with the
generalized-least-squares mean ``mu``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import ConditioningError, ConfigurationError, UsageError
from .sampling import Bounds, as_bounds

JITTER_LADDER = (0.0,) + tuple(10.0**k for k in range(-10, -3))


@dataclass(frozen=True)
class KernelHyper:
    """Per-dimension activity weights ``upsilon`` and exponents ``w``."""

    upsilon: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        upsilon = np.atleast_1d(np.asarray(self.upsilon, dtype=float))
        w = np.atleast_1d(np.asarray(self.w, dtype=float))
        if upsilon.ndim != 1 or upsilon.shape != w.shape:
            raise ConfigurationError("upsilon and w must be vectors of equal length")
        if np.any(~(upsilon > 0)):
            raise ConfigurationError(f"upsilon must be positive, got {upsilon.tolist()}")
        if np.any(~((w > 0) & (w <= 2))):
            raise ConfigurationError(f"w must lie in (0, 2], got {w.tolist()}")
        upsilon.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "upsilon", upsilon)
        object.__setattr__(self, "w", w)

    @property
    def dim(self) -> int:
        return self.upsilon.size

    @classmethod
    def isotropic(cls, d: int, upsilon: float = 1.0, w: float = 1.5) -> "KernelHyper":
        return cls(np.full(d, float(upsilon)), np.full(d, float(w)))


class SampleSet:
    """Ordered, growable collection of evaluated points.

    Insertion order is preserved since the entropy term depends on it.
    Points closer than ``dup_tol`` (in box-scaled coordinates) to an existing
    point are rejected.
    """

    def __init__(self, bounds, dup_tol: float = 0.0):
        self.bounds = as_bounds(bounds)
        self.dup_tol = float(dup_tol)
        self._points: list[np.ndarray] = []
        self._values: list[float] = []

    def __len__(self):
        return len(self._points)

    @property
    def points(self) -> np.ndarray:
        if not self._points:
            return np.empty((0, self.bounds.dim))
        return np.array(self._points)

    @property
    def values(self) -> np.ndarray:
        return np.array(self._values, dtype=float)

    @property
    def dim(self) -> int:
        return self.bounds.dim

    def scaled(self) -> np.ndarray:
        return (self.points - self.bounds.lower) / self.bounds.width

    def nearest_scaled_distance(self, x) -> float:
        if not self._points:
            return np.inf
        xs = (np.asarray(x, dtype=float) - self.bounds.lower) / self.bounds.width
        return float(np.min(np.linalg.norm(self.scaled() - xs, axis=1)))

    def add(self, x, value: float) -> None:
        x = np.array(x, dtype=float).reshape(-1)
        if x.size != self.dim:
            raise UsageError(f"point has dimension {x.size}, expected {self.dim}")
        if not self.bounds.contains(x, tol=1e-12 * float(np.max(self.bounds.width))):
            raise UsageError(f"point {x.tolist()} lies outside the bounds")
        if self._points and self.nearest_scaled_distance(x) < self.dup_tol:
            raise UsageError(
                f"point {x.tolist()} is within dup_tol={self.dup_tol} of an existing sample"
            )
        x.setflags(write=False)
        self._points.append(x)
        self._values.append(float(value))

    def best(self) -> tuple[np.ndarray, float]:
        """Return the first point attaining the lowest value."""
        k = int(np.argmin(self._values))
        return self._points[k], self._values[k]

    def copy(self) -> "SampleSet":
        other = SampleSet(self.bounds, self.dup_tol)
        other._points = list(self._points)
        other._values = list(self._values)
        return other

    @classmethod
    def from_arrays(cls, points, values, bounds, dup_tol: float = 0.0) -> "SampleSet":
        samples = cls(bounds, dup_tol)
        for x, v in zip(np.atleast_2d(np.asarray(points, dtype=float)), np.ravel(values)):
            samples.add(x, v)
        return samples


def correlation(x, y, hyper: KernelHyper) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x.shape != y.shape or x.size != hyper.dim:
        raise UsageError(
            f"dimension mismatch: x {x.shape}, y {y.shape}, hyperparameters {hyper.dim}"
        )
    return float(np.exp(-np.sum(hyper.upsilon * np.abs(x - y) ** hyper.w)))


def correlation_matrix(a, b, hyper: KernelHyper) -> np.ndarray:
    """Pairwise correlations between the rows of ``a`` and ``b``."""
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    diff = np.abs(a[:, None, :] - b[None, :, :])
    return np.exp(-np.sum(hyper.upsilon * diff**hyper.w, axis=-1))


@dataclass(frozen=True)
class KrigingModel:
    hyper: KernelHyper
    samples: SampleSet
    mu_hat: float
    sigma2_hat: float
    corr_factorization: tuple = field(repr=False)
    weights: np.ndarray = field(repr=False)
    jitter_used: float = 0.0

    @property
    def bounds(self) -> Bounds:
        return self.samples.bounds

    def predict_many(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.hyper.dim:
            raise UsageError(f"points have dimension {X.shape[1]}, expected {self.hyper.dim}")
        r = correlation_matrix(X, self.samples.points, self.hyper)
        return self.mu_hat + r @ self.weights


def _factorize(R: np.ndarray, points: np.ndarray):
    n = R.shape[0]
    for jitter in JITTER_LADDER:
        try:
            factor = linalg.cho_factor(R + jitter * np.eye(n), lower=True, check_finite=False)
        except linalg.LinAlgError:
            continue
        if np.all(np.diag(factor[0]) > 0):
            return factor, jitter
    off = R - np.eye(n)
    i, j = np.unravel_index(np.argmax(off), off.shape)
    raise ConditioningError(
        f"correlation matrix is singular even with jitter {JITTER_LADDER[-1]:g}; "
        f"closest pair: samples {i} and {j} ({points[i].tolist()} vs {points[j].tolist()}, "
        f"correlation {off[i, j]:.12f})"
    )


def fit(samples: SampleSet, hyper: KernelHyper) -> KrigingModel:
    """Fit the ordinary Kriging model to ``samples``.

    ``sigma2_hat`` is the process-variance estimate
    ``(f - 1 mu)^T R^{-1} (f - 1 mu) / N``.

    Raises:
        ConditioningError: if no jitter on the ladder makes ``R`` positive
            definite; the message names the most correlated sample pair.
    """
    if hyper.dim != samples.dim:
        raise UsageError(f"hyperparameters have dimension {hyper.dim}, samples {samples.dim}")
    if len(samples) < 2:
        raise UsageError("Kriging needs at least two samples")
    X = samples.points
    f = samples.values
    R = correlation_matrix(X, X, hyper)
    factor, jitter = _factorize(R, X)
    ones = np.ones(len(f))
    Rinv_f = linalg.cho_solve(factor, f, check_finite=False)
    Rinv_1 = linalg.cho_solve(factor, ones, check_finite=False)
    mu_hat = float(ones @ Rinv_f / (ones @ Rinv_1))
    resid = f - mu_hat
    weights = Rinv_f - mu_hat * Rinv_1
    sigma2_hat = max(float(resid @ weights) / len(f), 0.0)
    weights.setflags(write=False)
    return KrigingModel(
        hyper=hyper,
        samples=samples.copy(),
        mu_hat=mu_hat,
        sigma2_hat=sigma2_hat,
        corr_factorization=factor,
        weights=weights,
        jitter_used=jitter,
    )


def predict(model: KrigingModel, x) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.ndim != 1 or x.size != model.hyper.dim:
        raise UsageError(f"point has shape {x.shape}, expected ({model.hyper.dim},)")
    return float(model.predict_many(x[None, :])[0])
