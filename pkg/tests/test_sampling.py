import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from esbid.errors import ConfigurationError, UsageError
from esbid.sampling import Bounds, default_n_init, latin_hypercube, uniform_box


def test_single_point_design_covers_box():
    pts = latin_hypercube(1, Bounds([0.0], [1.0]), seed=3)
    assert pts.shape == (1, 1)
    assert 0.0 <= pts[0, 0] < 1.0


def test_four_strata_one_point_each():
    pts = latin_hypercube(4, Bounds([0.0], [1.0]), seed=11)[:, 0]
    strata = np.floor(pts * 4).astype(int)
    assert sorted(strata) == [0, 1, 2, 3]


def test_latin_hypercube_deterministic():
    b = Bounds([0.0, -1.0], [2.0, 5.0])
    np.testing.assert_array_equal(latin_hypercube(7, b, 42), latin_hypercube(7, b, 42))
    assert not np.array_equal(latin_hypercube(7, b, 42), latin_hypercube(7, b, 43))


@settings(max_examples=60, deadline=None)
@given(
    n=st.integers(1, 40),
    d=st.integers(1, 4),
    seed=st.integers(0, 2**63 - 1),
    lo=st.floats(-100, 100),
    width=st.floats(1e-3, 1e3),
)
def test_latin_hypercube_stratified_and_in_box(n, d, seed, lo, width):
    b = Bounds(np.full(d, lo), np.full(d, lo + width))
    pts = latin_hypercube(n, b, seed)
    assert pts.shape == (n, d)
    assert np.all(pts >= b.lower) and np.all(pts <= b.upper)
    unit = (pts - b.lower) / b.width
    for j in range(d):
        strata = np.minimum(np.floor(unit[:, j] * n).astype(int), n - 1)
        assert sorted(strata) == list(range(n))


def test_uniform_box_narrow_width():
    eps = 1e-9
    pts = uniform_box(50, Bounds([5.0], [5.0 + eps]), seed=0)
    assert np.all(pts >= 5.0) and np.all(pts <= 5.0 + eps)


def test_uniform_box_mean():
    pts = uniform_box(1000, Bounds([0.0, 0.0], [1.0, 1.0]), seed=2024)
    assert np.all(np.abs(pts.mean(axis=0) - 0.5) <= 0.05)


def test_uniform_box_deterministic():
    b = Bounds([0.0], [1.0])
    np.testing.assert_array_equal(uniform_box(5, b, 9), uniform_box(5, b, 9))


@pytest.mark.parametrize(
    "lower, upper",
    [([0.0], [0.0]), ([1.0], [0.0]), ([0.0, 0.0], [1.0]), ([], []), ([0.0], [np.inf])],
)
def test_invalid_bounds(lower, upper):
    with pytest.raises(ConfigurationError):
        latin_hypercube(3, Bounds(lower, upper) if len(lower) == len(upper) else (lower, upper), 0)


@pytest.mark.parametrize("n", [0, -1, 2.5])
def test_invalid_count(n):
    with pytest.raises(UsageError):
        uniform_box(n, Bounds([0.0], [1.0]), 0)


def test_default_initial_design_size():
    assert default_n_init(2) == 10
    assert default_n_init(6) == 14
