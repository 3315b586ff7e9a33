import math

import numpy as np
import pytest
from hypothesis import example, given, strategies as st

from statetrack.precision import DEFAULT_GRID, CastGrid, cast, cast_array, cast_state

HALF = CastGrid.uniform(-1.0, 1.0, 0.5)


def test_cast_examples():
    assert cast(0.26, HALF) == 0.5
    assert cast(0.25, HALF) == 0.0          # ties go to the smaller value
    assert cast(-0.25, HALF) == -0.5
    assert cast(7.3, HALF) == 1.0
    assert cast(-7.3, HALF) == -1.0


def test_cast_state_examples():
    np.testing.assert_array_equal(cast_state(np.zeros((2, 3)), HALF), np.zeros((2, 3)))
    np.testing.assert_array_equal(cast_state(np.array([0.26, -0.26]), HALF), [0.5, -0.5])


def test_cast_rejects_arrays_and_nan():
    with pytest.raises(TypeError):
        cast(np.array([0.1, 0.2]), HALF)
    with pytest.raises(ValueError):
        cast_array(np.array([np.nan]), HALF)


def test_default_grid_contains_key_values():
    assert DEFAULT_GRID.step == 2.0 ** -10
    for v in (-1.0, 0.0, 1.0, -8.0, 8.0):
        assert cast(v, DEFAULT_GRID) == v


@pytest.mark.parametrize("kwargs", [dict(lo=0.0, hi=1.0, step=0.0), dict(lo=1.0, hi=0.0, step=0.1),
                                    dict(lo=0.0, hi=1.0, step=0.3), dict(lo=-0.7, hi=1.3, step=0.5)])
def test_invalid_uniform_grids(kwargs):
    with pytest.raises(ValueError):
        CastGrid.uniform(**kwargs)


@pytest.mark.parametrize("values", [[], [0.0, 0.0], [1.0, 0.0], [-1.0, 1.0], [0.0, math.inf]])
def test_invalid_explicit_grids(values):
    with pytest.raises(ValueError):
        CastGrid.explicit(values)


def test_explicit_grid_nearest_and_ties():
    g = CastGrid.explicit([-1.0, 0.0, 0.5, 2.0])
    assert cast(0.25, g) == 0.0
    assert cast(1.25, g) == 0.5
    assert cast(1.26, g) == 2.0
    assert cast(-5.0, g) == -1.0
    assert cast(9.0, g) == 2.0
    assert cast(3.0, CastGrid.explicit([3.5])) == 3.5


def test_grid_dict_round_trip():
    for g in (HALF, DEFAULT_GRID, CastGrid.explicit([-1, 0, 1])):
        assert CastGrid.from_dict(g.to_dict()) == g
    with pytest.raises(ValueError):
        CastGrid.from_dict({"kind": "log"})


def _brute_force(x: float, values: np.ndarray) -> float:
    d = np.abs(values - x)
    return float(values[np.flatnonzero(d == d.min())[0]])


@given(st.floats(-3, 3), st.sampled_from([0.5, 0.25, 0.125]))
def test_uniform_cast_matches_brute_force(x, step):
    g = CastGrid.uniform(-2.0, 2.0, step)
    values = np.arange(-2.0, 2.0 + step / 2, step)
    assert cast(x, g) == _brute_force(x, values)


@given(st.lists(st.floats(-10, 10), min_size=1, max_size=8, unique=True), st.floats(-12, 12))
@example([0.0, 6.386590620447834e-88, 8.723758135352286e-286], 1.0)  # three-way rounded tie
def test_explicit_cast_matches_brute_force(vals, x):
    vals = sorted(vals)
    if vals[0] <= 0.0 <= vals[-1] and 0.0 not in vals:
        vals = sorted(vals + [0.0])
    assert cast(x, CastGrid.explicit(vals)) == _brute_force(x, np.asarray(vals))


@given(st.lists(st.floats(-20, 20), min_size=1, max_size=20))
def test_cast_idempotent_and_monotone(xs):
    x = np.sort(np.asarray(xs))
    c = cast_array(x, DEFAULT_GRID)
    np.testing.assert_array_equal(cast_array(c, DEFAULT_GRID), c)
    assert np.all(np.diff(c) >= 0)


@given(st.floats(-8, 8))
def test_cast_error_at_most_half_step(x):
    assert abs(cast(x, DEFAULT_GRID) - x) <= DEFAULT_GRID.step / 2


@given(st.integers(0, 2 ** 32 - 1))
def test_cast_state_idempotent_on_matrices(seed):
    h = np.random.default_rng(seed).normal(scale=3.0, size=(4, 3))
    c = cast_state(h, HALF)
    np.testing.assert_array_equal(cast_state(c, HALF), c)
