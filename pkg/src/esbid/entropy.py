"""Combined spatial-temporal entropy (CST-Entropy) exploration term.

Given existing samples, the entropy increment of a candidate ``x`` is
``-beta * ln(beta)`` where ``beta = 1 / sum_n D(x, x_n)^-2`` and ``D`` is
the Euclidean distance after scaling the box to the unit cube. ``beta``
vanishes at existing samples and grows in the gaps between them, so the
increment rewards unexplored regions. Summing increments along a
sampling sequence gives an order-dependent total.

Natural logarithms are used throughout; a different base only rescales
the increment, which the exploration weight ``alpha`` absorbs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, UsageError
from .sampling import as_bounds


@dataclass(frozen=True)
class EntropyConfig:
    """``alpha`` is in objective units; ``coincidence_eps`` in scaled units."""

    alpha: float = 1.0
    coincidence_eps: float = 1e-12

    def __post_init__(self):
        if not self.alpha >= 0:
            raise ConfigurationError(f"alpha must be >= 0, got {self.alpha!r}")
        if not self.coincidence_eps > 0:
            raise ConfigurationError(f"coincidence_eps must be > 0, got {self.coincidence_eps!r}")


def scale(x, bounds) -> np.ndarray:
    bounds = as_bounds(bounds)
    x = np.asarray(x, dtype=float)
    tol = 1e-12 * bounds.width
    if x.shape[-1] != bounds.dim:
        raise UsageError(f"point has dimension {x.shape[-1]}, bounds {bounds.dim}")
    if np.any(x < bounds.lower - tol) or np.any(x > bounds.upper + tol):
        raise UsageError(f"point {x.tolist()} lies outside the bounds")
    return (x - bounds.lower) / bounds.width


def scaled_distance(a, b) -> float:
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if a.shape != b.shape:
        raise UsageError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b))


def beta_many(X_scaled, samples_scaled, coincidence_eps: float = 1e-12) -> np.ndarray:
    """Vectorized distance weighting for the rows of ``X_scaled``.

    Rows within ``coincidence_eps`` of a sample get exactly 0; every value
    is clamped to at most 1.
    """
    X = np.atleast_2d(np.asarray(X_scaled, dtype=float))
    S = np.atleast_2d(np.asarray(samples_scaled, dtype=float))
    if S.shape[0] == 0 or S.size == 0:
        raise UsageError("beta needs at least one existing sample")
    if X.shape[1] != S.shape[1]:
        raise UsageError(f"dimension mismatch: {X.shape[1]} vs {S.shape[1]}")
    d2 = np.sum((X[:, None, :] - S[None, :, :]) ** 2, axis=-1)
    coincident = np.min(d2, axis=1) < coincidence_eps**2
    with np.errstate(divide="ignore"):
        inv_sum = np.sum(1.0 / np.where(coincident[:, None], 1.0, d2), axis=1)
    out = np.minimum(1.0 / inv_sum, 1.0)
    out[coincident] = 0.0
    return out


def beta(x_scaled, samples_scaled, coincidence_eps: float = 1e-12) -> float:
    x = np.atleast_1d(np.asarray(x_scaled, dtype=float))
    S = np.asarray(samples_scaled, dtype=float)
    if S.ndim == 1:
        S = S.reshape(-1, x.size) if S.size else S.reshape(0, x.size)
    return float(beta_many(x[None, :], S, coincidence_eps)[0])


def _xlogx_neg(b: np.ndarray) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    out = np.zeros_like(b)
    pos = b > 0
    out[pos] = -b[pos] * np.log(b[pos])
    return out


def delta_entropy_many(X, samples, coincidence_eps: float = 1e-12) -> np.ndarray:
    """Entropy increments for the rows of ``X`` given a :class:`SampleSet`."""
    Xs = scale(np.atleast_2d(X), samples.bounds)
    return _xlogx_neg(beta_many(Xs, samples.scaled(), coincidence_eps))


def delta_entropy(x, samples, coincidence_eps: float = 1e-12) -> float:
    return float(delta_entropy_many(np.atleast_1d(x)[None, :], samples, coincidence_eps)[0])


def shannon_entropy(probabilities) -> float:
    p = np.asarray(probabilities, dtype=float)
    if np.any(p < 0):
        raise UsageError("probabilities must be non-negative")
    if p.sum() > 1 + 1e-9:
        raise UsageError(f"probabilities sum to {p.sum()!r} > 1")
    return float(np.sum(_xlogx_neg(p)))


def _increments(scaled_points: np.ndarray, eps: float) -> np.ndarray:
    inc = np.zeros(len(scaled_points))
    for k in range(1, len(scaled_points)):
        b = beta_many(scaled_points[k : k + 1], scaled_points[:k], eps)
        inc[k] = _xlogx_neg(b)[0]
    return inc


def cumulative_entropy(ordering, bounds, coincidence_eps: float = 1e-12) -> np.ndarray:
    """Running total of entropy increments along ``ordering``.

    The first point has no predecessors and contributes 0.
    """
    bounds = as_bounds(bounds)
    pts = np.asarray(ordering, dtype=float).reshape(-1, bounds.dim)
    if len(pts) == 0:
        raise UsageError("ordering must contain at least one point")
    return np.cumsum(_increments(scale(pts, bounds), coincidence_eps))


def greedy_order(points, bounds, coincidence_eps: float = 1e-12) -> list[int]:
    """Indices of ``points`` in greedy maximal-increment order.

    Starts from index 0, then repeatedly appends the remaining point with
    the largest increment; ties go to the lowest index.
    """
    bounds = as_bounds(bounds)
    pts = scale(np.asarray(points, dtype=float).reshape(-1, bounds.dim), bounds)
    if len(pts) == 0:
        raise UsageError("need at least one point")
    order = [0]
    remaining = list(range(1, len(pts)))
    while remaining:
        inc = _xlogx_neg(beta_many(pts[remaining], pts[order], coincidence_eps))
        k = int(np.argmax(inc))  # first maximum, i.e. lowest index among ties
        order.append(remaining.pop(k))
    return order


def acquisition_many(model, X, cfg: EntropyConfig) -> np.ndarray:
    """Surrogate prediction minus ``alpha`` times the entropy increment."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    s = model.predict_many(X)
    if cfg.alpha == 0:
        return s
    return s - cfg.alpha * delta_entropy_many(X, model.samples, cfg.coincidence_eps)


def acquisition(model, x, cfg: EntropyConfig) -> float:
    return float(acquisition_many(model, np.atleast_1d(x)[None, :], cfg)[0])
