import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from statetrack.compiler import compile_cyclic, compile_parity, compile_symmetric
from statetrack.fsa import symmetric, word_problem_oracle
from statetrack.linalg import GhFactor, rotation2, rotation_as_householders
from statetrack.lrnn import (ArgmaxDot, DecodeError, Diagonal, EigenRangeError, Full, Gh, LrnnLayer, LrnnModel,
                             PairWithToken, PassThrough, RoundReadout, Scalar, UnknownToken, Zero, layer_states,
                             layer_step, model_from_dict, model_to_dict, model_run, model_run_batch, model_run_cast, scan_eval,
                             sequential_eval)
from statetrack.phenom import eventual_period
from statetrack.precision import DEFAULT_GRID, CastGrid

from strategies import seeds

FINE = CastGrid.uniform(-8.0, 8.0, 2.0 ** -30)


def rotation_layer(theta: float) -> LrnnLayer:
    return LrnnLayer((Gh((), 2), Gh(rotation_as_householders(theta), 2)), (None, None),
                     np.array([[1.0], [0.0]]), PassThrough())


def random_diag_layer(rng, n: int, vocab: int = 3, d: int = 1) -> LrnnLayer:
    return LrnnLayer(tuple(Diagonal(rng.uniform(-1, 1, n)) for _ in range(vocab)),
                     tuple(rng.normal(size=(n, d)) for _ in range(vocab)), rng.normal(size=(n, d)), PassThrough())


def random_gh_layer(rng, n: int, vocab: int = 3) -> LrnnLayer:
    a = tuple(Gh(tuple(GhFactor.from_vector(rng.normal(size=n), float(rng.uniform(0, 2)))
                       for _ in range(int(rng.integers(0, 3)))), n) for _ in range(vocab))
    return LrnnLayer(a, tuple(rng.normal(size=(n, 2)) for _ in range(vocab)), rng.normal(size=(n, 2)), PassThrough())


# -- layer_step ---------------------------------------------------------------------------------


def test_zero_transition_resets_to_b():
    layer = LrnnLayer((Zero(2),), (np.array([[3.0], [4.0]]),), np.zeros((2, 1)), PassThrough())
    np.testing.assert_array_equal(layer_step(layer, np.array([[9.0], [-9.0]]), 0), [[3.0], [4.0]])


def test_parity_step():
    layer = compile_parity().layers[0]
    assert layer_step(layer, np.zeros((1, 1)), 1)[0, 0] == 1.0


def test_rotation_returns_after_three_steps():
    layer = rotation_layer(2 * math.pi / 3)
    h = layer.h0
    for _ in range(3):
        h = layer_step(layer, h, 1)
    np.testing.assert_allclose(h, [[1.0], [0.0]], atol=1e-12)


def test_unknown_token_rejected():
    layer = compile_parity().layers[0]
    with pytest.raises(UnknownToken):
        layer_step(layer, layer.h0, 2)
    with pytest.raises(UnknownToken):
        model_run(compile_parity(), [0, 3])


def test_gh_step_matches_dense_matrix():
    rng = np.random.default_rng(3)
    layer = random_gh_layer(rng, 4)
    h = rng.normal(size=(4, 2))
    for tok in range(3):
        want = layer.a_map[tok].matrix(4) @ h + layer.b(tok)
        np.testing.assert_allclose(layer_step(layer, h, tok), want, atol=1e-12)


# -- construction invariants ---------------------------------------------------------------------


def test_transition_range_checks():
    with pytest.raises(EigenRangeError):
        LrnnLayer((Scalar(1.5),), (None,), np.zeros((1, 1)), PassThrough())
    with pytest.raises(EigenRangeError):
        LrnnLayer((Scalar(-0.5),), (None,), np.zeros((1, 1)), PassThrough(), eigen_range="unit")
    with pytest.raises(EigenRangeError):
        LrnnLayer((Full(2 * np.eye(2)),), (None,), np.zeros((2, 1)), PassThrough())
    LrnnLayer((Full(2 * np.eye(2)),), (None,), np.zeros((2, 1)), PassThrough(), allow_unbounded=True)
    with pytest.raises(EigenRangeError):
        LrnnLayer((Gh((GhFactor.from_vector(np.ones(2), 2.0),), 2),), (None,), np.zeros((2, 1)), PassThrough(),
                  eigen_range="unit")


def test_layer_shape_checks():
    with pytest.raises(ValueError):
        LrnnLayer((Diagonal(np.ones(3)),), (None,), np.zeros((2, 1)), PassThrough())
    with pytest.raises(ValueError):
        LrnnLayer((Scalar(1.0),), (np.ones((2, 1)),), np.zeros((1, 1)), PassThrough())
    with pytest.raises(ValueError):
        LrnnLayer((Scalar(1.0),), (None,), np.array([[np.nan]]), PassThrough())
    with pytest.raises(ValueError):
        LrnnModel(())
    with pytest.raises(ValueError):
        ArgmaxDot(np.zeros((0, 2)), ())


def test_decoders():
    h = np.array([[[0.1], [0.9]], [[0.5], [0.5]]])
    protos = ArgmaxDot(np.eye(2), (7, 8))
    np.testing.assert_array_equal(protos.decode_batch(h, np.zeros(2, int)), [8, 7])   # tie -> lowest index
    with pytest.raises(DecodeError):
        RoundReadout((0, 1)).decode_batch(np.array([[[0.4]]]), np.zeros(1, int))
    with pytest.raises(DecodeError):
        RoundReadout((0, 1)).decode_batch(np.array([[[2.0]]]), np.zeros(1, int))
    perm = RoundReadout((1, 2, 3), "perm_rank")
    np.testing.assert_array_equal(perm.decode_batch(np.array([[[1.0], [2.0], [3.0]]]), np.zeros(1, int)), [0])
    pair = PairWithToken(RoundReadout((0, 1)), 2, 5, state_first=False)
    np.testing.assert_array_equal(pair.decode_batch(np.array([[[1.0]]]), np.array([3])), [7])


# -- model_run -----------------------------------------------------------------------------------


def test_model_run_examples():
    assert model_run(compile_parity(), [0, 1, 1, 0]) == [0, 1, 0, 0]
    assert model_run(compile_cyclic(3), [1, 1, 1]) == [1, 2, 0]
    rng = np.random.default_rng(0)
    w = rng.integers(0, 120, 200).tolist()
    assert model_run(compile_symmetric(5), w) == word_problem_oracle(symmetric(5), w)


def test_model_run_states():
    out, states = model_run(compile_parity(), [1, 1, 1], return_states=True)
    assert out == [1, 0, 1]
    np.testing.assert_array_equal(states[0][:, 0, 0], [1, 0, 1])


def test_model_run_batch_matches_single_runs():
    rng = np.random.default_rng(2)
    model = compile_cyclic(7)
    words = rng.integers(0, 7, (5, 40))
    labels, _ = model_run_batch(model, words)
    for w, row in zip(words, labels):
        assert row.tolist() == model_run(model, w)


def test_cast_run_on_parity_is_identical():
    rng = np.random.default_rng(1)
    w = rng.integers(0, 2, 500).tolist()
    grid = CastGrid.explicit([-1.0, 0.0, 1.0])
    assert model_run_cast(compile_parity(), w, grid) == model_run(compile_parity(), w)


def test_cast_contraction_becomes_constant():
    layer = LrnnLayer((Scalar(1.0), Scalar(0.9)), (None, np.array([[0.1]])), np.zeros((1, 1)), PassThrough())
    states = layer_states(layer, [1] * 2000, DEFAULT_GRID)
    assert eventual_period(states)[1] == 1


def test_cast_rotation_has_period_three():
    states = layer_states(rotation_layer(2 * math.pi / 3), [1] * 300, FINE)
    assert eventual_period(states)[1] == 3


def test_model_checkpoint_round_trip():
    for model in (compile_parity(), compile_cyclic(5), compile_symmetric(4)):
        back = model_from_dict(json.loads(json.dumps(model_to_dict(model))))
        w = list(range(model.alphabet_size)) * 3
        assert model_run(back, w) == model_run(model, w)


# -- scan --------------------------------------------------------------------------------------------


def test_scan_examples():
    layer = compile_parity().layers[0]
    np.testing.assert_array_equal(scan_eval(layer, [1]), layer_step(layer, layer.h0, 1))
    assert scan_eval(layer, [1] * 8)[0, 0] == 0.0
    np.testing.assert_array_equal(scan_eval(layer, []), layer.h0)


@given(seeds, st.integers(1, 64), st.integers(1, 5))
def test_scan_matches_sequential_diag(seed, length, n):
    rng = np.random.default_rng(seed)
    layer = random_diag_layer(rng, n)
    w = rng.integers(0, 3, length).tolist()
    np.testing.assert_allclose(scan_eval(layer, w), sequential_eval(layer, w), atol=1e-10)


@given(seeds, st.integers(1, 40))
def test_scan_matches_sequential_gh(seed, length):
    rng = np.random.default_rng(seed)
    layer = random_gh_layer(rng, 3)
    w = rng.integers(0, 3, length).tolist()
    np.testing.assert_allclose(scan_eval(layer, w), sequential_eval(layer, w), atol=1e-10)


def test_scan_length_64_example():
    rng = np.random.default_rng(64)
    layer = random_diag_layer(rng, 4)
    w = rng.integers(0, 3, 64).tolist()
    np.testing.assert_allclose(scan_eval(layer, w), sequential_eval(layer, w), atol=1e-10)


# -- invariants ------------------------------------------------------------------------------------


@given(seeds, st.integers(1, 80))
def test_stability_bound(seed, length):
    rng = np.random.default_rng(seed)
    layer = random_gh_layer(rng, 3)
    b_max = max(np.linalg.norm(layer.b(t), 2) for t in range(3))
    h0 = np.linalg.norm(layer.h0, 2)
    h = layer.h0
    for t, tok in enumerate(rng.integers(0, 3, length), start=1):
        h = layer_step(layer, h, int(tok))
        assert np.linalg.norm(h, 2) <= h0 + t * b_max + 1e-9


def test_rotation_preserves_norm_long_run():
    layer = rotation_layer(2 * math.pi / 7)
    states = layer_states(layer, [1] * 100_000)
    norms = np.linalg.norm(states.reshape(len(states), -1), axis=1)
    assert np.max(np.abs(norms - 1.0)) <= 1e-9


@given(seeds, st.integers(1, 50))
def test_noop_cast_matches_exact_run(seed, length):
    rng = np.random.default_rng(seed)
    w = rng.integers(0, 5, length).tolist()
    model = compile_cyclic(5)
    assert model_run_cast(model, w, FINE) == model_run(model, w)
    w2 = rng.integers(0, 2, length).tolist()
    assert model_run_cast(compile_parity(), w2, DEFAULT_GRID) == model_run(compile_parity(), w2)


def test_renormalization_keeps_unit_norm():
    model = compile_cyclic(12, renormalize_every=10)
    _, states = model_run(model, [5] * 100, return_states=True)
    np.testing.assert_allclose(np.linalg.norm(states[0][9::10].reshape(10, -1), axis=1), 1.0, atol=1e-15)
