import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from apenv.simplex import check_weights, project_simplex, uniform_weights

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)
vectors = st.integers(1, 12).flatmap(lambda m: arrays(np.float64, m, elements=finite))


def brute_force_projection(v):
    """Closest simplex point by enumerating every face (fine for small M)."""
    m = v.size
    best, best_d = None, np.inf
    for mask in range(1, 2**m):
        idx = [i for i in range(m) if mask >> i & 1]
        x = np.zeros(m)
        x[idx] = v[idx] - (v[idx].sum() - 1.0) / len(idx)
        if np.all(x >= -1e-15):
            d = np.sum((x - v) ** 2)
            if d < best_d:
                best, best_d = np.maximum(x, 0.0), d
    return best


@given(vectors)
@settings(max_examples=300, deadline=None)
def test_projection_is_feasible(v):
    x = project_simplex(v)
    assert np.all(x >= 0)
    assert abs(x.sum() - 1.0) < 1e-9


@given(vectors)
@settings(max_examples=300, deadline=None)
def test_projection_is_idempotent(v):
    x = project_simplex(v)
    np.testing.assert_allclose(project_simplex(x), x, atol=1e-9)


@given(vectors, finite)
@settings(max_examples=300, deadline=None)
def test_projection_ignores_constant_shifts(v, c):
    np.testing.assert_allclose(project_simplex(v + c), project_simplex(v), atol=1e-9)


@given(st.integers(1, 4).flatmap(lambda m: arrays(np.float64, m, elements=finite)))
@settings(max_examples=300, deadline=None)
def test_projection_matches_brute_force(v):
    np.testing.assert_allclose(project_simplex(v), brute_force_projection(v), atol=1e-9)


def test_simplex_points_are_fixed():
    w = np.array([0.2, 0.0, 0.8])
    np.testing.assert_array_equal(project_simplex(w), w)


def test_tie_handling_is_deterministic():
    v = np.array([1.0, 1.0, 1.0, 0.0])
    np.testing.assert_allclose(project_simplex(v), [1 / 3, 1 / 3, 1 / 3, 0.0])


@pytest.mark.parametrize("bad", [np.array([np.nan, 1.0]), np.array([]), np.array([[1.0]])])
def test_projection_rejects_bad_input(bad):
    with pytest.raises(ValueError):
        project_simplex(bad)


def test_check_weights():
    np.testing.assert_array_equal(check_weights([0.25, 0.75], 2), [0.25, 0.75])
    with pytest.raises(ValueError):
        check_weights([0.5, 0.6])
    with pytest.raises(ValueError):
        check_weights([-0.1, 1.1])
    with pytest.raises(ValueError):
        check_weights([0.5, 0.5], 3)
    np.testing.assert_allclose(uniform_weights(4), 0.25)
