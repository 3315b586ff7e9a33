import math

import numpy as np
import pytest
from hypothesis import example, given, strategies as st

from statetrack.linalg import (GhFactor, gh_apply, gh_factorize, gh_product_apply, gh_product_eigenvalues,
                               gh_product_matrix, orthogonal_to_reflections, reflection2, reflection2_factor,
                               rotation2, rotation_as_householders, spectral_norm, svd_small, swap_householder)

from strategies import gh_factors, rng_from, seeds

S2 = 1 / math.sqrt(2)
V1 = (S2, -S2, 0.0)
V2 = (0.0, S2, -S2)


# -- GhFactor and gh_apply -----------------------------------------------------------


def test_factor_rejects_non_unit_vector():
    with pytest.raises(ValueError):
        GhFactor(np.array([1.0, 1.0]), 1.0)


@pytest.mark.parametrize("beta", [-0.1, 2.1])
def test_factor_rejects_beta_outside_range(beta):
    with pytest.raises(ValueError):
        GhFactor(np.array([1.0, 0.0]), beta)


def test_factor_from_zero_vector_fails():
    with pytest.raises(ValueError):
        GhFactor.from_vector([0.0, 0.0], 1.0)


def test_apply_identity_when_beta_zero():
    f = GhFactor.from_vector([0.3, 0.4], 0.0)
    np.testing.assert_array_equal(gh_apply(f, [3.0, 4.0]), [3.0, 4.0])


def test_apply_reflects_eigenvector():
    f = GhFactor(np.array([1.0, 0.0, 0.0]), 2.0)
    np.testing.assert_allclose(gh_apply(f, [1.0, 0.0, 0.0]), [-1.0, 0.0, 0.0])


def test_apply_swap_reflection_swaps_first_two_coordinates():
    f = GhFactor(np.array(V1), 2.0)
    np.testing.assert_allclose(gh_apply(f, [1.0, 2.0, 3.0]), [2.0, 1.0, 3.0], atol=1e-15)


def test_apply_dimension_mismatch():
    with pytest.raises(ValueError):
        gh_apply(GhFactor(np.array([1.0, 0.0]), 1.0), [1.0, 2.0, 3.0])


@given(seeds, st.integers(1, 6), st.integers(1, 5))
def test_apply_matches_matrix(seed, n, k):
    rng = rng_from(seed)
    fs = gh_factors(rng, n, k)
    x = rng.normal(size=(n, 3))
    np.testing.assert_allclose(gh_product_apply(fs, x), gh_product_matrix(fs) @ x, atol=1e-12)


# -- products ------------------------------------------------------------------------------


def test_two_swaps_compose_to_three_cycle():
    f1, f2 = GhFactor(np.array(V1), 2.0), GhFactor(np.array(V2), 2.0)
    cycle = np.array([[0, 1, 0], [0, 0, 1], [1, 0, 0]])
    # swap v1 first, then v2: the later swap is the left factor
    np.testing.assert_allclose(gh_product_matrix([f2, f1]), cycle, atol=1e-15)
    np.testing.assert_allclose(gh_product_matrix([f1, f2]), cycle.T, atol=1e-15)
    np.testing.assert_allclose(gh_product_matrix([f1, f2]), f1.matrix() @ f2.matrix(), atol=1e-15)


def test_product_single_zero_beta_is_identity():
    np.testing.assert_array_equal(gh_product_matrix([GhFactor(np.array([0.6, 0.8]), 0.0)]), np.eye(2))


def test_product_empty_fails():
    with pytest.raises(ValueError):
        gh_product_matrix([])


def test_random_four_factor_product_matches_explicit_multiplication():
    rng = np.random.default_rng(4)
    fs = gh_factors(rng, 4, 4)
    explicit = np.eye(4)
    for f in fs:
        explicit = explicit @ (np.eye(4) - f.beta * np.outer(f.v, f.v))
    np.testing.assert_allclose(gh_product_matrix(fs), explicit, atol=1e-14)
    assert spectral_norm(explicit) <= 1 + 1e-10


@given(seeds, st.integers(1, 8), st.integers(1, 10))
def test_gh_products_are_nonexpansive(seed, n, k):
    fs = gh_factors(rng_from(seed), n, k)
    assert spectral_norm(gh_product_matrix(fs)) <= 1 + 1e-10


# -- 2-D rotations and reflections -----------------------------------------------------------


def test_rotation_special_angles():
    np.testing.assert_allclose(rotation2(0.0), np.eye(2))
    np.testing.assert_allclose(rotation2(math.pi), -np.eye(2), atol=1e-15)
    x = np.array([1.0, 0.0])
    r = rotation2(2 * math.pi / 3)
    np.testing.assert_allclose(r @ r @ r @ x, x, atol=1e-15)


def test_reflection_special_cases():
    np.testing.assert_allclose(reflection2(0.0), np.diag([1.0, -1.0]))
    np.testing.assert_allclose(reflection2(1.3) @ reflection2(1.3), np.eye(2), atol=1e-15)
    theta = 2 * math.pi / 5
    np.testing.assert_allclose(reflection2(theta) @ reflection2(0.0), rotation2(theta), atol=1e-15)


@pytest.mark.parametrize("alpha", np.linspace(-math.pi, math.pi, 7))
@pytest.mark.parametrize("gamma", np.linspace(-math.pi, math.pi, 7))
def test_reflection_pair_is_rotation(alpha, gamma):
    np.testing.assert_allclose(reflection2(alpha) @ reflection2(gamma), rotation2(alpha - gamma), atol=1e-12)


@pytest.mark.parametrize("alpha", [0.0, 0.4, 2.0, -2.5])
def test_reflection_factor_realizes_reflection(alpha):
    np.testing.assert_allclose(reflection2_factor(alpha).matrix(), reflection2(alpha), atol=1e-15)


@pytest.mark.parametrize("theta", [0.0, 2 * math.pi / 3, 1.0, -2.2])
def test_rotation_as_two_householders(theta):
    fs = rotation_as_householders(theta)
    assert len(fs) == 2 and all(f.beta == 2.0 for f in fs)
    np.testing.assert_allclose(gh_product_matrix(fs), rotation2(theta), atol=1e-15)


# -- spectral norm and SVD ----------------------------------------------------------------------


def test_spectral_norm_basic():
    assert spectral_norm(np.eye(3)) == pytest.approx(1.0, abs=1e-12)
    assert spectral_norm(np.diag([0.5, -0.9])) == pytest.approx(0.9, abs=1e-12)
    assert spectral_norm(np.zeros((3, 3))) == 0.0


@given(seeds, st.integers(1, 6))
def test_spectral_norm_matches_largest_singular_value(seed, n):
    m = rng_from(seed).normal(size=(n, n))
    _, s, _ = svd_small(m)
    assert spectral_norm(m) == pytest.approx(s[0], rel=1e-8)


def test_spectral_norm_of_gh_product_against_svd():
    rng = np.random.default_rng(5)
    m = gh_product_matrix(gh_factors(rng, 5, 3))
    _, s, _ = svd_small(m)
    assert spectral_norm(m) <= 1 + 1e-10
    assert spectral_norm(m) == pytest.approx(s[0], abs=1e-9)


def test_svd_identity_and_diagonal():
    u, s, v = svd_small(np.eye(3))
    np.testing.assert_allclose(s, 1.0)
    np.testing.assert_allclose(u, np.eye(3))
    np.testing.assert_allclose(v, np.eye(3))
    u, s, v = svd_small(np.diag([0.3, 0.7]))
    np.testing.assert_allclose(s, [0.7, 0.3])
    np.testing.assert_allclose(u @ np.diag(s) @ v.T, np.diag([0.3, 0.7]), atol=1e-15)


def test_svd_reconstructs_random_small_matrix():
    m = np.random.default_rng(6).uniform(-0.4, 0.4, (5, 5))
    u, s, v = svd_small(m)
    assert np.max(np.abs(u @ np.diag(s) @ v.T - m)) <= 1e-9 * 5


@given(seeds, st.integers(1, 7), st.integers(0, 3))
@example(1, 6, 1)  # completion of a single null column in dimension 6
def test_svd_properties(seed, n, rank_drop):
    rng = rng_from(seed)
    m = rng.normal(size=(n, n))
    if rank_drop and n > rank_drop:
        m[:, :rank_drop] = 0.0
    u, s, v = svd_small(m)
    np.testing.assert_allclose(u @ np.diag(s) @ v.T, m, atol=1e-10)
    np.testing.assert_allclose(u.T @ u, np.eye(n), atol=1e-10)
    np.testing.assert_allclose(v.T @ v, np.eye(n), atol=1e-10)
    assert np.all(np.diff(s) <= 1e-12) and np.all(s >= 0)
    np.testing.assert_allclose(s, np.linalg.svd(m, compute_uv=False), atol=1e-10)


def test_svd_rejects_non_square():
    with pytest.raises(ValueError):
        svd_small(np.ones((2, 3)))


# -- factorization --------------------------------------------------------------------------------


def test_orthogonal_to_reflections_identity_is_empty():
    assert orthogonal_to_reflections(np.eye(4)) == []


def test_three_cycle_needs_at_most_two_reflections():
    q = np.array([[0.0, 1, 0], [0, 0, 1], [1, 0, 0]])
    fs = orthogonal_to_reflections(q)
    assert len(fs) <= 2
    np.testing.assert_allclose(gh_product_matrix(fs), q, atol=1e-12)


def test_random_rotation_in_four_dims():
    q, _ = np.linalg.qr(np.random.default_rng(7).normal(size=(4, 4)))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    fs = orthogonal_to_reflections(q)
    assert len(fs) <= 4
    assert np.max(np.abs(gh_product_matrix(fs) - q)) <= 1e-8


def test_orthogonal_to_reflections_rejects_non_orthogonal():
    with pytest.raises(ValueError):
        orthogonal_to_reflections(np.diag([1.0, 0.5]))


def test_factorize_identity_and_diagonal():
    assert gh_factorize(np.eye(3)) == []
    fs = gh_factorize(np.diag([0.5, 0.5]))
    assert len(fs) == 2
    assert all(f.beta == pytest.approx(0.5) and np.count_nonzero(np.abs(f.v) > 1e-12) == 1 for f in fs)


def test_factorize_random_norm_095():
    m = np.random.default_rng(8).normal(size=(4, 4))
    m *= 0.95 / spectral_norm(m)
    fs = gh_factorize(m)
    assert len(fs) <= 12
    assert np.max(np.abs(gh_product_matrix(fs) - m)) <= 1e-6


def test_factorize_rejects_expansive_matrix():
    with pytest.raises(ValueError):
        gh_factorize(2.0 * np.eye(2))


@given(seeds, st.integers(1, 8), st.floats(0.05, 1.0))
def test_factorize_reconstructs_contractions(seed, n, scale):
    m = rng_from(seed).normal(size=(n, n))
    m *= scale / spectral_norm(m)
    fs = gh_factorize(m)
    assert len(fs) <= 3 * n
    rec = gh_product_matrix(fs) if fs else np.eye(n)
    assert np.max(np.abs(rec - m)) <= 1e-6


# -- swaps -------------------------------------------------------------------------------------------


def test_swap_householder_examples():
    np.testing.assert_allclose(gh_apply(swap_householder(0, 1, 3), [5.0, 7.0, 9.0]), [7.0, 5.0, 9.0], atol=1e-14)
    f = swap_householder(1, 2, 3)
    x = np.array([1.0, 2.0, 3.0])
    np.testing.assert_allclose(gh_apply(f, gh_apply(f, x)), x, atol=1e-14)


@pytest.mark.parametrize("args", [(1, 1, 3), (0, 3, 3), (-1, 0, 3)])
def test_swap_householder_invalid(args):
    with pytest.raises(ValueError):
        swap_householder(*args)


# -- eigenvalues -----------------------------------------------------------------------------------


@given(seeds, st.integers(1, 4), st.integers(1, 6))
def test_eigenvalues_match_numpy(seed, n, k):
    fs = gh_factors(rng_from(seed), n, k)
    ours = np.sort_complex(np.round(gh_product_eigenvalues(fs), 6))
    ref = np.sort_complex(np.round(np.linalg.eigvals(gh_product_matrix(fs)), 6))
    np.testing.assert_allclose(ours, ref, atol=1e-5)


@given(seeds, st.integers(1, 4), st.integers(1, 8))
def test_eigenvalues_inside_unit_disk_or_one(seed, n, k):
    fs = gh_factors(rng_from(seed), n, k, 0.0, 2.0 - 1e-6)
    ev = gh_product_eigenvalues(fs)
    assert np.all((np.abs(ev) < 1 + 1e-8) | (np.abs(ev - 1) <= 1e-8))


@given(seeds, st.integers(1, 4), st.integers(1, 2))
def test_two_unit_range_factors_have_real_eigenvalues_in_unit_interval(seed, n, k):
    ev = gh_product_eigenvalues(gh_factors(rng_from(seed), n, k, 0.0, 1.0))
    assert np.all(np.abs(ev.imag) <= 1e-8)
    assert np.all(ev.real >= -1e-8) and np.all(ev.real <= 1 + 1e-8)


def test_eigenvalues_of_rotation_are_complex_roots_of_unity():
    ev = gh_product_eigenvalues(rotation_as_householders(2 * math.pi / 3))
    np.testing.assert_allclose(np.sort(np.angle(ev)), [-2 * math.pi / 3, 2 * math.pi / 3], atol=1e-12)


def test_eigenvalues_refuse_large_dimension():
    with pytest.raises(ValueError):
        gh_product_eigenvalues(gh_factors(np.random.default_rng(0), 5, 1))
