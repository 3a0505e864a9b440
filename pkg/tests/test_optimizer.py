import numpy as np
import pytest

import esbid.optimizer as opt
from esbid.entropy import EntropyConfig, delta_entropy_many
from esbid.errors import ConfigurationError, EvaluationError, UsageError
from esbid.kriging import KernelHyper, SampleSet, fit
from esbid.optimizer import (
    GAConfig,
    InnerSearchConfig,
    Objective,
    OptimizerConfig,
    genetic_algorithm,
    grid_enumerate,
    minimize_acquisition,
    pattern_search,
    random_search,
    relative_error,
    run_method,
    surrogate_optimize,
)
from esbid.sampling import Bounds

UNIT1 = Bounds([0.0], [1.0])
UNIT2 = Bounds.unit(2)


def sphere(x):
    return float(np.sum((np.asarray(x) - 0.5) ** 2))


def sphere_objective():
    return Objective(sphere, UNIT2)


def _check_trace(x, f, trace, n_max, bounds):
    assert len(trace) <= n_max
    vals = trace.values
    assert f == vals.min()
    np.testing.assert_array_equal(x, trace.points[int(np.argmin(vals))])
    np.testing.assert_array_equal([r.best_f for r in trace.records], np.minimum.accumulate(vals))
    assert [r.iteration for r in trace.records] == list(range(len(trace)))
    assert all(bounds.contains(p) for p in trace.points)


# surrogate loop


def test_constant_objective():
    x, f, trace = surrogate_optimize(Objective(lambda x: 4.0, UNIT2), OptimizerConfig(n_max=15, seed=1))
    assert f == 4.0
    assert len(trace) == 15


def test_sphere_median():
    best = [surrogate_optimize(sphere_objective(), OptimizerConfig(n_max=60, seed=s))[1] for s in range(5)]
    assert np.median(best) <= 1e-3


@pytest.mark.parametrize("method", ["surrogate", "pattern", "ga", "random"])
def test_budget_and_trace_invariants(method):
    calls = []

    def f(x):
        calls.append(x.copy())
        return float(np.sin(5 * x[0]) + x[1] ** 2)

    obj = Objective(f, Bounds([-1.0, 0.0], [2.0, 3.0]))
    x, fx, trace = run_method(method, obj, OptimizerConfig(n_max=40, seed=3))
    _check_trace(x, fx, trace, 40, obj.bounds)
    assert len(calls) == len(trace)
    if method != "pattern":
        assert len(trace) == 40


@pytest.mark.parametrize("method", ["surrogate", "pattern", "ga", "random", "enumerate"])
def test_determinism(method):
    cfg = OptimizerConfig(n_max=30, seed=11, grid_points=6)
    a = run_method(method, sphere_objective(), cfg)[2].to_csv(timing=False)
    b = run_method(method, sphere_objective(), cfg)[2].to_csv(timing=False)
    assert a == b


def test_seeds_differ():
    a = run_method("surrogate", sphere_objective(), OptimizerConfig(n_max=14, seed=1))[2]
    b = run_method("surrogate", sphere_objective(), OptimizerConfig(n_max=14, seed=2))[2]
    assert not np.array_equal(a.points, b.points)


def test_samples_stay_apart():
    # a sharp minimum on a plateau pulls the acquisition towards existing samples
    obj = Objective(lambda x: -float(np.exp(-200 * np.sum((x - 0.3) ** 2))), UNIT2)
    cfg = OptimizerConfig(n_max=50, seed=0, dup_tol=1e-3)
    _, _, trace = surrogate_optimize(obj, cfg)
    P = trace.points
    d = np.linalg.norm(P[:, None] - P[None], axis=-1) + 10 * np.eye(len(P))
    assert d.min() >= 1e-3


def test_budget_below_initial_design():
    with pytest.raises(ConfigurationError):
        surrogate_optimize(sphere_objective(), OptimizerConfig(n_max=5, seed=0))


def test_evaluation_failure_carries_trace():
    def f(x):
        if x[0] > 0.9:
            raise ValueError("boom")
        return float(x[0])

    with pytest.raises(EvaluationError) as info:
        random_search(Objective(f, UNIT1), OptimizerConfig(n_max=100, seed=0))
    err = info.value
    assert err.point[0] > 0.9
    assert all(p[0] <= 0.9 for p in err.trace.points)


def test_alpha_zero_polls_prediction(monkeypatch):
    polled = []
    original = opt.acquisition_many

    def spy(model, X, cfg):
        a = original(model, X, cfg)
        polled.append(np.max(np.abs(a - model.predict_many(np.atleast_2d(X)))))
        return a

    monkeypatch.setattr(opt, "acquisition_many", spy)
    cfg = OptimizerConfig(n_max=16, seed=4, entropy=EntropyConfig(alpha=0.0), inner=InnerSearchConfig(n_starts=1))
    surrogate_optimize(sphere_objective(), cfg)
    assert polled and max(polled) == 0.0


# inner acquisition search


def _fig_model(bounds):
    X = np.array([[0.1], [0.3], [0.7], [0.8]])
    return fit(SampleSet.from_arrays(X, np.full(4, 2.0), bounds), KernelHyper([1.0], [1.5]))


def test_constant_data_maximizes_entropy():
    # the whole-box maximizer of the increment sits at the boundary x = 1
    m = _fig_model(UNIT1)
    cfg = OptimizerConfig(seed=0, entropy=EntropyConfig(alpha=1.0))
    x = minimize_acquisition(m, cfg)
    grid = np.linspace(0, 1, 100001)[:, None]
    gain = delta_entropy_many(grid, m.samples)
    best = grid[np.argmax(gain)]
    assert best[0] == 1.0
    assert x[0] == pytest.approx(best[0], abs=1e-5)


def test_widest_gap_when_box_ends_at_samples():
    m = _fig_model(Bounds([0.1], [0.8]))
    x = minimize_acquisition(m, OptimizerConfig(seed=0, entropy=EntropyConfig(alpha=1.0)))
    assert 0.3 < x[0] < 0.7
    grid = np.linspace(0.1, 0.8, 70001)[:, None]
    best = grid[np.argmax(delta_entropy_many(grid, m.samples))]
    assert x[0] == pytest.approx(best[0], abs=1e-5)


def test_alpha_zero_finds_surrogate_minimum():
    X = np.linspace(0, 1, 8)[:, None]
    m = fit(SampleSet.from_arrays(X, (X[:, 0] - 0.42) ** 2, UNIT1), KernelHyper([1.0], [2.0]))
    x = minimize_acquisition(m, OptimizerConfig(seed=0, entropy=EntropyConfig(alpha=0.0)))
    grid = np.linspace(0, 1, 20001)[:, None]
    s = m.predict_many(grid)
    assert m.predict_many(x[None, :])[0] <= s.min() + 1e-9


def test_duplicate_escape():
    # the surrogate minimum is the sample at 0.5 itself
    X = np.array([[0.0], [0.5], [1.0]])
    m = fit(SampleSet.from_arrays(X, [1.0, 0.0, 1.0], UNIT1), KernelHyper([1.0], [2.0]))
    cfg = OptimizerConfig(seed=0, entropy=EntropyConfig(alpha=0.0), inner=InnerSearchConfig(n_starts=1))
    x = minimize_acquisition(m, cfg)
    assert m.samples.nearest_scaled_distance(x) >= cfg.dup_tol
    assert abs(x[0] - 0.25) < 0.01 or abs(x[0] - 0.75) < 0.01


# grid oracle


def test_grid_monotone_function():
    x, f = grid_enumerate(Objective(lambda x: float(x[0]), UNIT1), 11)
    assert x.tolist() == [0.0] and f == 0.0


def test_grid_refinement_never_worse():
    obj = Objective(lambda x: float(np.cos(7 * x[0]) * np.sin(3 * x[1])), UNIT2)
    assert grid_enumerate(obj, 21)[1] <= grid_enumerate(obj, 11)[1]


def test_grid_ties_lexicographic():
    x, _ = grid_enumerate(Objective(lambda x: float((x[0] - 0.5) ** 2), UNIT2), 5)
    assert x.tolist() == [0.5, 0.0]


@pytest.mark.parametrize("ppd", [1, 1001, 2.5])
def test_grid_guards(ppd):
    with pytest.raises(UsageError):
        grid_enumerate(sphere_objective(), ppd)


# baselines


def test_pattern_search_at_optimum_stagnates():
    x, f, trace = pattern_search(sphere_objective(), OptimizerConfig(n_max=100, seed=0), x0=[0.5, 0.5])
    assert f == 0.0
    np.testing.assert_array_equal(x, [0.5, 0.5])


def test_pattern_search_abs():
    x, f, trace = pattern_search(Objective(lambda x: abs(x[0] - 0.3), UNIT1), OptimizerConfig(n_max=100, seed=0))
    assert abs(x[0] - 0.3) <= 1e-3
    assert len(trace) <= 100


def test_ga_identical_population():
    cfg = OptimizerConfig(n_max=60, seed=0, ga=GAConfig(mutation_rate=0.0))
    pop = np.tile([0.2, 0.7], (20, 1))
    _, _, trace = genetic_algorithm(sphere_objective(), cfg, initial_population=pop)
    assert np.all(trace.values == sphere([0.2, 0.7]))


def test_ga_sphere_median():
    best = [genetic_algorithm(sphere_objective(), OptimizerConfig(n_max=100, seed=s))[1] for s in range(5)]
    assert np.median(best) <= 0.05


def test_random_single_draw():
    x, f, trace = random_search(sphere_objective(), OptimizerConfig(n_max=1, seed=5))
    assert len(trace) == 1 and f == sphere(x)


def test_relative_error():
    assert relative_error(-600.0, -616.0) == pytest.approx(16 / 616)
    assert relative_error(-616.0, -616.0) == 0.0


def test_config_validation():
    with pytest.raises(ConfigurationError):
        OptimizerConfig(n_init=1)
    with pytest.raises(ConfigurationError):
        InnerSearchConfig(shrink=1.5)
    with pytest.raises(ConfigurationError):
        run_method("annealing", sphere_objective(), OptimizerConfig())
