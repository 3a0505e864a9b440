"""Surrogate optimization loop, derivative-free baselines, grid oracle.

Every method minimizes. Points are proposed in box-scaled coordinates
and mapped back before evaluation; each evaluation is recorded in a
:class:`RunTrace`, and the reported optimum is always the best *evaluated*
point.
"""

from __future__ import annotations

import csv
import io
import itertools
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import kriging
from .entropy import EntropyConfig, acquisition_many, delta_entropy_many
from .errors import ConfigurationError, EvaluationError, UsageError
from .kriging import KernelHyper, KrigingModel, SampleSet
from .sampling import Bounds, as_bounds, default_n_init, latin_hypercube, make_rng

log = logging.getLogger(__name__)

MAX_GRID_POINTS = 10**6


@dataclass(frozen=True)
class Objective:
    """Black-box ``evaluate(x) -> float`` over a box."""

    evaluate: Callable[[np.ndarray], float]
    bounds: Bounds
    reentrant: bool = False

    def __post_init__(self):
        object.__setattr__(self, "bounds", as_bounds(self.bounds))


@dataclass(frozen=True)
class InnerSearchConfig:
    """Multi-start compass descent used to minimize the acquisition.

    Steps are in box-scaled units.
    """

    n_starts: int = 20
    max_iters: int = 200
    init_step: float = 0.25
    shrink: float = 0.5
    min_step: float = 1e-6

    def __post_init__(self):
        if self.n_starts < 1 or self.max_iters < 1:
            raise ConfigurationError("n_starts and max_iters must be positive")
        if not (self.init_step > 0 and self.min_step > 0):
            raise ConfigurationError("init_step and min_step must be positive")
        if not 0 < self.shrink < 1:
            raise ConfigurationError(f"shrink must lie in (0, 1), got {self.shrink}")


@dataclass(frozen=True)
class GAConfig:
    pop_size: int = 20
    tournament: int = 2
    blend: float = 0.5
    mutation_sigma: float = 0.1
    mutation_rate: float = 0.2
    elitism: int = 1

    def __post_init__(self):
        if self.pop_size < 2 or self.tournament < 1 or not 0 <= self.elitism < self.pop_size:
            raise ConfigurationError("invalid GA population settings")
        if not 0 <= self.mutation_rate <= 1:
            raise ConfigurationError("mutation_rate must lie in [0, 1]")


@dataclass(frozen=True)
class OptimizerConfig:
    """Settings shared by the surrogate loop and the baselines.

    ``n_max`` counts every objective evaluation, initial design included.
    ``n_init=None`` means ``max(2(d+1), 10)``; ``hyper=None`` means
    ``upsilon_j = 1, w_j = 1.5`` in every dimension.
    """

    n_max: int = 100
    n_init: int | None = None
    hyper: KernelHyper | None = None
    entropy: EntropyConfig = field(default_factory=EntropyConfig)
    seed: int = 0
    inner: InnerSearchConfig = field(default_factory=InnerSearchConfig)
    ga: GAConfig = field(default_factory=GAConfig)
    dup_tol: float = 1e-6
    workers: int = 1
    grid_points: int = 51

    def __post_init__(self):
        if self.n_max < 1:
            raise ConfigurationError(f"n_max must be >= 1, got {self.n_max}")
        if self.n_init is not None and self.n_init < 2:
            raise ConfigurationError(f"n_init must be >= 2, got {self.n_init}")
        if self.dup_tol < 0:
            raise ConfigurationError("dup_tol must be >= 0")

    def resolved_n_init(self, d: int) -> int:
        return default_n_init(d) if self.n_init is None else self.n_init

    def resolved_hyper(self, d: int) -> KernelHyper:
        if self.hyper is None:
            return KernelHyper.isotropic(d)
        if self.hyper.dim == 1 and d > 1:
            return KernelHyper.isotropic(d, self.hyper.upsilon[0], self.hyper.w[0])
        if self.hyper.dim != d:
            raise ConfigurationError(f"hyperparameters have dimension {self.hyper.dim}, problem {d}")
        return self.hyper


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    x: np.ndarray
    f: float
    best_f: float
    ms: float


@dataclass
class RunTrace:
    method: str
    seed: int | None
    records: list[TraceRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    @property
    def values(self) -> np.ndarray:
        return np.array([r.f for r in self.records])

    @property
    def points(self) -> np.ndarray:
        return np.array([r.x for r in self.records])

    def best(self) -> tuple[np.ndarray, float]:
        k = int(np.argmin(self.values))
        return self.records[k].x, self.records[k].f

    def to_csv(self, out=None, timing: bool = True) -> str:
        """Write ``iter,method,x1..xd,f,best_f,ms``; returns the text.

        Floats use ``repr`` so they round-trip exactly. With ``timing=False``
        the ms column is written as 0 to make the file reproducible.
        """
        d = self.records[0].x.size if self.records else 0
        buf = io.StringIO(newline="")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iter", "method", *[f"x{j + 1}" for j in range(d)], "f", "best_f", "ms"])
        for r in self.records:
            w.writerow(
                [r.iteration, self.method, *[repr(float(v)) for v in r.x], repr(float(r.f)),
                 repr(float(r.best_f)), repr(float(r.ms)) if timing else "0"]
            )
        text = buf.getvalue()
        if out is not None:
            with open(out, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text


class _Recorder:
    """Budgeted objective wrapper that fills a trace."""

    def __init__(self, objective: Objective, n_max: int, method: str, seed):
        self.objective = objective
        self.n_max = n_max
        self.trace = RunTrace(method, seed)
        self.best_x = None
        self.best_f = np.inf
        self._t0 = time.perf_counter()

    @property
    def remaining(self) -> int:
        return self.n_max - len(self.trace)

    def _call(self, x):
        try:
            return float(self.objective.evaluate(x))
        except Exception as exc:
            raise EvaluationError(
                f"objective evaluation failed at {x.tolist()}: {exc}", point=x, trace=self.trace
            ) from exc

    def _record(self, x, f):
        if not np.isfinite(f):
            raise EvaluationError(f"objective returned {f!r} at {x.tolist()}", point=x, trace=self.trace)
        if f < self.best_f:
            self.best_x, self.best_f = x, f
        ms = (time.perf_counter() - self._t0) * 1e3
        self.trace.records.append(TraceRecord(len(self.trace), x, f, self.best_f, ms))

    def _prepare(self, x):
        x = np.array(x, dtype=float).reshape(-1)
        b = self.objective.bounds
        if not b.contains(x, tol=1e-12 * float(np.max(b.width))):
            raise UsageError(f"point {x.tolist()} lies outside the bounds")
        x = b.clip(x)
        x.setflags(write=False)
        return x

    def __call__(self, x) -> float:
        if self.remaining <= 0:
            raise RuntimeError("evaluation budget exhausted")
        x = self._prepare(x)
        f = self._call(x)
        self._record(x, f)
        return f

    def many(self, X, workers: int = 1) -> np.ndarray:
        X = [self._prepare(x) for x in np.atleast_2d(X)[: self.remaining]]
        if workers > 1 and self.objective.reentrant and len(X) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                futures = [pool.submit(self._call, x) for x in X]
                values = []
                for x, fut in zip(X, futures):
                    values.append(fut.result())
        else:
            values = [self._call(x) for x in X]
        for x, f in zip(X, values):
            self._record(x, f)
        return np.array(values)

    def result(self):
        return self.best_x, self.best_f, self.trace


def _to_unit(X, bounds: Bounds):
    return (np.asarray(X, dtype=float) - bounds.lower) / bounds.width


def _from_unit(U, bounds: Bounds):
    return bounds.lower + np.clip(U, 0.0, 1.0) * bounds.width


def compass_descent(func, starts: np.ndarray, inner: InnerSearchConfig):
    """Batched compass search on ``func`` over the unit cube.

    ``func`` maps an ``(m, d)`` array to ``m`` values. Each start polls
    ``+-step`` along every axis, moves to the best improving poll point,
    and halves (``inner.shrink``) its step when no poll improves. Returns
    the per-start final points and values.
    """
    X = np.array(starts, dtype=float)
    S, d = X.shape
    fX = func(X)
    step = np.full(S, inner.init_step)
    active = np.ones(S, dtype=bool)
    dirs = np.vstack([np.eye(d), -np.eye(d)])
    for _ in range(inner.max_iters):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        cand = np.clip(X[idx, None, :] + step[idx, None, None] * dirs[None], 0.0, 1.0)
        fc = func(cand.reshape(-1, d)).reshape(idx.size, 2 * d)
        k = np.argmin(fc, axis=1)
        fbest = fc[np.arange(idx.size), k]
        better = fbest < fX[idx]
        moved = idx[better]
        X[moved] = cand[better, k[better]]
        fX[moved] = fbest[better]
        stuck = idx[~better]
        step[stuck] *= inner.shrink
        active[stuck] = step[stuck] >= inner.min_step
    return X, fX


def minimize_acquisition(model: KrigingModel, cfg: OptimizerConfig, rng=None) -> np.ndarray:
    """Return the next point to evaluate.

    Runs :func:`compass_descent` on the acquisition from the best sample
    plus ``n_starts - 1`` Latin hypercube starts. If the winner lands
    within ``dup_tol`` (scaled) of an existing sample, the point with the
    largest entropy increment among 1000 uniform candidates is returned
    instead.
    """
    samples = model.samples
    bounds = samples.bounds
    d = bounds.dim
    if rng is None:
        rng = make_rng(cfg.seed + 7919 * len(samples))
    inner = cfg.inner

    def func(U):
        return acquisition_many(model, _from_unit(U, bounds), cfg.entropy)

    best_x, _ = samples.best()
    starts = [_to_unit(best_x, bounds)[None, :]]
    if inner.n_starts > 1:
        starts.append(latin_hypercube(inner.n_starts - 1, Bounds.unit(d), rng))
    U, fU = compass_descent(func, np.vstack(starts), inner)
    winner = _from_unit(U[int(np.argmin(fU))], bounds)
    if samples.nearest_scaled_distance(winner) < cfg.dup_tol:
        cand = _from_unit(rng.random((1000, d)), bounds)
        gain = delta_entropy_many(cand, samples, cfg.entropy.coincidence_eps)
        winner = cand[int(np.argmax(gain))]
        log.debug("acquisition optimum duplicates a sample; escaping to %s", winner)
    return winner


def surrogate_optimize(objective: Objective, cfg: OptimizerConfig):
    """Kriging + entropy-acquisition loop.

    Returns ``(best_x, best_f, trace)``. ``cfg.n_max`` bounds the total
    number of evaluations, the initial Latin hypercube design included.

    Raises:
        EvaluationError: if the objective fails; carries the trace so far.
    """
    bounds = objective.bounds
    d = bounds.dim
    n_init = cfg.resolved_n_init(d)
    if cfg.n_max < n_init:
        raise ConfigurationError(f"n_max={cfg.n_max} is smaller than n_init={n_init}")
    hyper = cfg.resolved_hyper(d)
    rng = make_rng(cfg.seed)
    rec = _Recorder(objective, cfg.n_max, "surrogate", cfg.seed)
    samples = SampleSet(bounds, cfg.dup_tol)

    X0 = latin_hypercube(n_init, bounds, rng)
    values = rec.many(X0, workers=cfg.workers)
    for x, f in zip(rec.trace.points, values):
        if samples.nearest_scaled_distance(x) >= cfg.dup_tol:
            samples.add(x, f)

    while rec.remaining > 0:
        model = kriging.fit(samples, hyper)
        x = minimize_acquisition(model, cfg, rng)
        f = rec(x)
        x = rec.trace.records[-1].x
        if samples.nearest_scaled_distance(x) >= cfg.dup_tol:
            samples.add(x, f)
    return rec.result()


def grid_points(bounds: Bounds, points_per_dim: int) -> list[np.ndarray]:
    return [np.linspace(lo, hi, points_per_dim) for lo, hi in zip(bounds.lower, bounds.upper)]


def grid_evaluate(objective: Objective, points_per_dim: int, recorder=None):
    """Evaluate the full grid; returns ``(axes, values)`` with values shaped per axis.

    Points are visited in lexicographic order (last coordinate fastest).
    """
    bounds = objective.bounds
    if isinstance(points_per_dim, bool) or int(points_per_dim) != points_per_dim or points_per_dim < 2:
        raise UsageError(f"points_per_dim must be an integer >= 2, got {points_per_dim!r}")
    if points_per_dim**bounds.dim > MAX_GRID_POINTS:
        raise UsageError(
            f"grid of {points_per_dim}^{bounds.dim} points exceeds the limit of {MAX_GRID_POINTS}"
        )
    axes = grid_points(bounds, points_per_dim)
    values = np.empty((points_per_dim,) * bounds.dim)
    for idx in itertools.product(range(points_per_dim), repeat=bounds.dim):
        x = np.array([axes[j][k] for j, k in enumerate(idx)])
        if recorder is not None:
            values[idx] = recorder(x)
            continue
        try:
            values[idx] = float(objective.evaluate(x))
        except Exception as exc:
            raise EvaluationError(f"objective evaluation failed at {x.tolist()}: {exc}", point=x) from exc
    return axes, values


def grid_enumerate(objective: Objective, points_per_dim: int, tie_rtol: float = 1e-9):
    """Exhaustive grid search including both endpoints in every dimension.

    Values within ``tie_rtol * (1 + |min|)`` of the minimum count as ties;
    ties resolve to the lexicographically smallest point.
    """
    x, f, _ = _grid_search(objective, points_per_dim, tie_rtol, record=False)
    return x, f


def _grid_search(objective, points_per_dim, tie_rtol=1e-9, record=True):
    rec = None
    if record:
        d = objective.bounds.dim
        rec = _Recorder(objective, max(points_per_dim, 2) ** d, "enumerate", None)
    axes, values = grid_evaluate(objective, points_per_dim, rec)
    fmin = float(values.min())
    ties = np.argwhere(values <= fmin + tie_rtol * (1.0 + abs(fmin)))
    idx = tuple(min(map(tuple, ties)))
    x = np.array([axes[j][k] for j, k in enumerate(idx)])
    return x, float(values[idx]), (rec.trace if rec is not None else None)


def enumerate_method(objective: Objective, cfg: OptimizerConfig):
    """:func:`grid_enumerate` with a full trace, using ``cfg.grid_points``."""
    return _grid_search(objective, cfg.grid_points)


def pattern_search(objective: Objective, cfg: OptimizerConfig, x0=None):
    """Compass search on the true objective.

    Polls ``+step e_1, -step e_1, +step e_2, ...`` in scaled units and
    moves on the first improvement; a full unsuccessful poll shrinks the
    step by ``cfg.inner.shrink``. Stops at ``cfg.n_max`` evaluations or
    when the step drops below ``cfg.inner.min_step``. The start is ``x0``
    or a uniform draw from ``cfg.seed``.
    """
    bounds = objective.bounds
    d = bounds.dim
    rng = make_rng(cfg.seed)
    rec = _Recorder(objective, cfg.n_max, "pattern", cfg.seed)
    u = rng.random(d) if x0 is None else _to_unit(x0, bounds)
    fu = rec(_from_unit(u, bounds))
    step = cfg.inner.init_step
    while rec.remaining > 0 and step >= cfg.inner.min_step:
        improved = False
        for j in range(d):
            for sign in (1.0, -1.0):
                if rec.remaining <= 0:
                    break
                v = u.copy()
                v[j] = min(max(v[j] + sign * step, 0.0), 1.0)
                if v[j] == u[j]:
                    continue
                fv = rec(_from_unit(v, bounds))
                if fv < fu:
                    u, fu, improved = v, fv, True
                    break
            if improved or rec.remaining <= 0:
                break
        if not improved:
            step *= cfg.inner.shrink
    return rec.result()


def genetic_algorithm(objective: Objective, cfg: OptimizerConfig, initial_population=None):
    """Real-coded GA working in scaled coordinates.

    Tournament selection, blend (BLX) crossover, per-gene Gaussian
    mutation, and elitism. The initial population is a seeded uniform
    draw unless given; afterwards each generation evaluates
    ``pop_size - elitism`` children until the budget is spent, so the
    run performs exactly ``cfg.n_max`` evaluations.
    """
    bounds = objective.bounds
    d = bounds.dim
    ga = cfg.ga
    rng = make_rng(cfg.seed)
    rec = _Recorder(objective, cfg.n_max, "ga", cfg.seed)
    if initial_population is None:
        pop = rng.random((ga.pop_size, d))
    else:
        pop = _to_unit(np.atleast_2d(initial_population), bounds)
    fit = rec.many(_from_unit(pop, bounds), workers=cfg.workers)
    pop = pop[: fit.size]

    def tournament():
        picks = rng.integers(0, len(pop), size=ga.tournament)
        return pop[picks[np.argmin(fit[picks])]]

    while rec.remaining > 0:
        n_children = min(len(pop) - ga.elitism, rec.remaining)
        if n_children <= 0:
            n_children = min(ga.pop_size - ga.elitism, rec.remaining)
        children = np.empty((n_children, d))
        for k in range(n_children):
            a, b = tournament(), tournament()
            gamma = rng.uniform(-ga.blend, 1.0 + ga.blend, size=d)
            child = a + gamma * (b - a)
            mutate = rng.random(d) < ga.mutation_rate
            child = child + mutate * rng.normal(0.0, ga.mutation_sigma, size=d)
            children[k] = np.clip(child, 0.0, 1.0)
        f_children = rec.many(_from_unit(children, bounds))
        elite = np.argsort(fit, kind="stable")[: ga.elitism]
        pop = np.vstack([pop[elite], children])
        fit = np.concatenate([fit[elite], f_children])
    return rec.result()


def random_search(objective: Objective, cfg: OptimizerConfig):
    """Evaluate ``cfg.n_max`` seeded uniform draws; keep the best."""
    bounds = objective.bounds
    rng = make_rng(cfg.seed)
    rec = _Recorder(objective, cfg.n_max, "random", cfg.seed)
    U = rng.random((cfg.n_max, bounds.dim))
    rec.many(_from_unit(U, bounds), workers=cfg.workers)
    return rec.result()


def relative_error(value: float, reference: float) -> float:
    """``|value - reference| / |reference|`` (absolute error when the reference is 0)."""
    if reference == 0:
        return abs(value)
    return abs(value - reference) / abs(reference)


METHODS = {
    "surrogate": surrogate_optimize,
    "pattern": pattern_search,
    "ga": genetic_algorithm,
    "random": random_search,
    "enumerate": enumerate_method,
}


def run_method(name: str, objective: Objective, cfg: OptimizerConfig):
    try:
        fn = METHODS[name]
    except KeyError:
        raise ConfigurationError(f"unknown method {name!r}; choose from {sorted(METHODS)}") from None
    return fn(objective, cfg)


def with_seed(cfg: OptimizerConfig, seed: int) -> OptimizerConfig:
    return replace(cfg, seed=seed)
