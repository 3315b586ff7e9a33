import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from statetrack.compiler import compile_parity, compile_symmetric
from statetrack.train import (AdamW, ModelConfig, TrainConfig, TrainingDiverged, backward, clip_grads,
                              compiled_predictor, cross_entropy, default_config, eval_length_gen, eval_length_range,
                              forward, init_params, load_checkpoint, loss_and_grads, lr_at, make_task, predict,
                              save_checkpoint, train_loop, trainable_predictor)
from statetrack.train.gradcheck import max_relative_error, numeric_grads, relative_errors, tiny_problem
from statetrack.train.model import delta_beta, diag_transition, project_unit_ball, unit_fwd

from strategies import seeds


def planted_parity():
    """One diagonal channel holding (-1)^(number of ones), started by the BOS token."""
    cfg = ModelConfig(vocab=2, n_out=2, d_model=3, layers=("diag",), n_state=1, readout="linear")
    p = init_params(cfg, 0)
    p["embed"] = np.eye(3)                       # rows: token 0, token 1, BOS
    r3 = 1.0 / np.sqrt(3.0)                      # rms-normed one-hot rows have entries sqrt(3)
    p["l0.g_in"] = np.ones(3)
    p["l0.w_a"] = np.array([[40.0], [-40.0], [0.0]]) * r3
    p["l0.c_a"] = np.zeros(1)
    p["l0.w_b"] = np.array([[0.0], [0.0], [1.0]]) * r3
    p["l0.g_out"] = np.ones(1)
    p["l0.w_o"] = np.array([[0.0, 0.0, 10.0]])
    p["r.g"] = np.ones(3)
    p["r.w2"] = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, -1.0]])
    p["r.b2"] = np.zeros(2)
    return p, cfg


# -- forward ----------------------------------------------------------------------------------------


def test_zero_readout_gives_uniform_logits():
    cfg = ModelConfig(vocab=3, n_out=4, d_model=8, zero_readout=True)
    logits, _ = forward(init_params(cfg, 0), cfg, np.array([[0, 1, 2, 1]]))
    assert np.all(logits == logits[..., :1])


@pytest.mark.parametrize("eigen_range", ["unit", "sym"])
def test_delta_with_zero_beta_is_per_token(eigen_range):
    cfg = ModelConfig(vocab=4, n_out=3, d_model=8, layers=("delta",), eigen_range=eigen_range, bos=False)
    p = init_params(cfg, 1)
    p["l0.w_beta"][:] = 0.0
    p["l0.c_beta"][:] = -1e4
    tokens = np.array([[0, 1, 2, 3], [3, 2, 1, 3], [1, 1, 0, 3]])
    logits, cache = forward(p, cfg, tokens)
    states = cache["layers"][0][9]
    assert np.all(states == p["l0.h0"][None, None])
    np.testing.assert_array_equal(logits[0, 3], logits[1, 3])
    np.testing.assert_array_equal(logits[1, 3], logits[2, 3])


def test_planted_parity_solution():
    p, cfg = planted_parity()
    task = make_task("parity")
    x, y, mask = task.batch(np.random.default_rng(0), 1000, 256)
    pred = predict(p, cfg, x)
    assert np.mean(pred == y) >= 0.999
    acc = eval_length_gen(trainable_predictor(p, cfg), task, [40, 256], count=500)
    assert min(acc.values()) >= 0.998


def test_parity_supervision_masks():
    rng = np.random.default_rng(3)
    x, y, m = make_task("parity").batch(rng, 4, 7)
    assert m[:, -1].tolist() == [1] * 4 and m[:, :-1].sum() == 0
    np.testing.assert_array_equal(y[:, -1], x.sum(axis=1) % 2)
    _, _, m_all = make_task("parity", supervise="all").batch(rng, 4, 7)
    assert m_all.sum() == 28
    with pytest.raises(ValueError):
        make_task("parity", supervise="first")


def test_forward_rejects_bad_tokens():
    cfg = ModelConfig(vocab=2, n_out=2, d_model=4)
    p = init_params(cfg, 0)
    with pytest.raises(ValueError):
        forward(p, cfg, np.array([[0, 2]]))
    with pytest.raises(ValueError):
        forward(p, cfg, np.array([0, 1]))


def test_config_validation():
    with pytest.raises(ValueError):
        ModelConfig(vocab=2, n_out=2, layers=("lstm",))
    with pytest.raises(ValueError):
        ModelConfig(vocab=2, n_out=2, layers=("full", "diag"))
    with pytest.raises(ValueError):
        ModelConfig(vocab=2, n_out=2, eigen_range="complex")
    with pytest.raises(ValueError):
        TrainConfig(lr=-1.0)
    with pytest.raises(ValueError):
        TrainConfig(len_min=5, len_max=4)


# -- backward --------------------------------------------------------------------------------------------


@pytest.mark.parametrize("kind", ["diag", "delta", "full"])
def test_zero_upstream_gradient(kind):
    params, cfg, tokens, *_ = tiny_problem(kind, "sym", 0)
    logits, cache = forward(params, cfg, tokens)
    grads = backward(params, cfg, cache, np.zeros_like(logits))
    assert set(grads) == set(params)
    assert all(np.all(g == 0) for g in grads.values())


def test_single_step_closed_form():
    # with no BOS and one position the previous state is zero, so the decay gets no gradient
    cfg = ModelConfig(vocab=3, n_out=2, d_model=4, layers=("diag",), bos=False)
    p = init_params(cfg, 2)
    _, g = loss_and_grads(p, cfg, np.array([[1], [2]]), np.array([[0], [1]]), np.ones((2, 1)))
    assert np.all(g["l0.w_a"] == 0) and np.all(g["l0.c_a"] == 0)
    assert np.any(g["l0.w_b"] != 0)


def test_stale_cache_rejected():
    cfg = ModelConfig(vocab=2, n_out=2, d_model=4)
    p = init_params(cfg, 0)
    logits, cache = forward(p, cfg, np.array([[0, 1]]))
    with pytest.raises(ValueError):
        backward(dict(p), cfg, cache, np.zeros_like(logits))


@pytest.mark.parametrize("kind", ["diag", "delta", "full"])
@pytest.mark.parametrize("eigen_range", ["unit", "sym"])
def test_gradients_match_finite_differences(kind, eigen_range):
    for seed in range(3):
        assert max_relative_error(kind, eigen_range, seed) <= 1e-4


@pytest.mark.parametrize("eigen_range", ["unit", "sym"])
def test_gated_input_gradients(eigen_range):
    for seed in range(3):
        assert max_relative_error("diag", eigen_range, seed, input_gate=True) <= 1e-4


def test_gradient_check_mlp_readout_and_two_layers():
    cfg = ModelConfig(vocab=3, n_out=3, d_model=4, layers=("diag", "delta"), heads=2)
    rng = np.random.default_rng(5)
    p = init_params(cfg, 5)
    tokens, labels = rng.integers(0, 3, (2, 5)), rng.integers(0, 3, (2, 5))
    mask = np.ones((2, 5))
    _, analytic = loss_and_grads(p, cfg, tokens, labels, mask)
    assert max(relative_errors(analytic, numeric_grads(p, cfg, tokens, labels, mask)).values()) <= 1e-4


def test_cross_entropy_gradient():
    rng = np.random.default_rng(0)
    logits = rng.normal(size=(2, 3, 4))
    labels = rng.integers(0, 4, (2, 3))
    mask = np.array([[1, 0, 1], [1, 1, 0]], dtype=float)
    _, g = cross_entropy(logits, labels, mask)
    eps = 1e-6
    for idx in [(0, 0, 1), (1, 1, 3), (0, 1, 2)]:
        up, down = logits.copy(), logits.copy()
        up[idx] += eps
        down[idx] -= eps
        num = (cross_entropy(up, labels, mask)[0] - cross_entropy(down, labels, mask)[0]) / (2 * eps)
        assert abs(num - g[idx]) < 1e-8
    with pytest.raises(ValueError):
        cross_entropy(logits, labels, np.zeros((2, 3)))


# -- parameterization invariants ----------------------------------------------------------------------


@given(seeds)
def test_transition_ranges(seed):
    z = np.random.default_rng(seed).normal(scale=10.0, size=10_000)
    a_unit, a_sym = diag_transition(z, "unit"), diag_transition(z, "sym")
    assert np.all((a_unit >= 0) & (a_unit <= 1))
    assert np.all((a_sym >= -1) & (a_sym <= 1))
    # delta eigenvalue along k is 1 - beta
    ev_unit, ev_sym = 1 - delta_beta(z, "unit"), 1 - delta_beta(z, "sym")
    assert np.all((ev_unit >= 0) & (ev_unit <= 1))
    assert np.all((ev_sym >= -1) & (ev_sym <= 1))


@given(seeds)
def test_keys_are_unit_and_projection_bounded(seed):
    rng = np.random.default_rng(seed)
    k, _ = unit_fwd(rng.normal(scale=rng.uniform(0.1, 10), size=(50, 8)))
    assert np.max(np.abs(np.linalg.norm(k, axis=-1) - 1)) <= 1e-6
    f, _ = project_unit_ball(rng.normal(scale=5.0, size=(50, 16)))
    assert np.max(np.linalg.norm(f, axis=-1)) <= 1 + 1e-9


# -- optimizer and loop ----------------------------------------------------------------------------------


def test_lr_schedule():
    assert lr_at(0, 100, 1.0, "constant") == 1.0
    assert lr_at(0, 100, 1.0) == pytest.approx(0.1)
    assert lr_at(9, 100, 1.0) == pytest.approx(1.0)
    assert lr_at(99, 100, 1.0) < 1e-3
    with pytest.raises(ValueError):
        lr_at(0, 10, 1.0, "step")


def test_clip_and_weight_decay_scope():
    g = {"a": np.full((2, 2), 3.0), "b": np.full(2, 4.0)}
    clipped, norm = clip_grads(g, 1.0)
    assert norm == pytest.approx(np.sqrt(36 + 32))
    assert np.sqrt(sum(np.sum(v * v) for v in clipped.values())) == pytest.approx(1.0)
    params = {"m": np.ones((2, 2)), "v": np.ones(2)}
    AdamW(params, weight_decay=0.5).step(params, {"m": np.zeros((2, 2)), "v": np.zeros(2)}, 0.1)
    assert np.allclose(params["m"], 0.95) and np.all(params["v"] == 1.0)


def small_run(seed=0, lr=3e-3, steps=40, **kw):
    cfg = ModelConfig(vocab=2, n_out=2, d_model=8, **kw)
    params = init_params(cfg, seed)
    tcfg = TrainConfig(lr=lr, batch_size=16, steps=steps, seed=seed, len_max=12, eval_lengths=(16,),
                       eval_range=(12, 20), eval_count=32)
    return params, cfg, train_loop(params, cfg, make_task("parity"), tcfg)


def test_zero_learning_rate_keeps_parameters():
    cfg = ModelConfig(vocab=2, n_out=2, d_model=8)
    before = init_params(cfg, 0)
    params, _, res = small_run(lr=0.0, steps=5)
    for k in before:
        np.testing.assert_array_equal(params[k], before[k])
    assert res.history[-1]["step"] == 5


def test_training_reduces_loss():
    _, _, res = small_run(steps=300)
    assert res.final_loss < res.initial_loss


def test_training_is_deterministic():
    _, _, a = small_run(seed=3)
    _, _, b = small_run(seed=3)
    assert abs(a.final_loss - b.final_loss) <= 1e-10
    assert a.history == b.history


def test_divergence_is_reported():
    cfg = ModelConfig(vocab=2, n_out=2, d_model=4)
    p = init_params(cfg, 0)
    p["r.w2"][:] = np.nan
    with pytest.raises(TrainingDiverged):
        train_loop(p, cfg, make_task("parity"), TrainConfig(steps=2, batch_size=2))


def test_history_keys():
    _, _, res = small_run(steps=4)
    assert set(res.history[-1]) == {"step", "loss", "acc@16", "acc@12-20"}


# -- evaluation ------------------------------------------------------------------------------------------


def test_random_guess_scores_near_zero():
    rng = np.random.default_rng(0)
    guess = lambda tokens: rng.integers(0, 2, tokens.shape)
    acc = eval_length_gen(guess, make_task("parity"), [50], count=10_000)
    assert abs(acc[50]) <= 0.05


def test_compiled_models_score_perfectly():
    parity = compiled_predictor(compile_parity())
    assert eval_length_gen(parity, make_task("parity"), [40, 128, 256], count=200) == {40: 1.0, 128: 1.0, 256: 1.0}
    assert eval_length_range(parity, make_task("parity"), 40, 256, count=200) == 1.0
    s5 = compiled_predictor(compile_symmetric(5))
    assert eval_length_gen(s5, make_task("group", group="symmetric:5"), [500], count=20) == {500: 1.0}


def test_empty_eval_rejected():
    with pytest.raises(ValueError):
        eval_length_gen(lambda t: t, make_task("parity"), [], count=10)
    with pytest.raises(ValueError):
        eval_length_gen(lambda t: t, make_task("parity"), [10], count=0)


# -- checkpoints and defaults --------------------------------------------------------------------------


def test_checkpoint_round_trip(tmp_path):
    cfg = ModelConfig(vocab=3, n_out=3, d_model=4, layers=("delta",), heads=2)
    p = init_params(cfg, 0)
    path = tmp_path / "m.json"
    save_checkpoint(path, p, cfg, make_task("group", group="cyclic:3"), TrainConfig())
    back, cfg2, doc = load_checkpoint(path)
    assert cfg2 == cfg and doc["task"]["task"] == "group"
    for k in p:
        np.testing.assert_array_equal(back[k], p[k])
    (tmp_path / "bad.json").write_text(json.dumps({"format": "other"}))
    with pytest.raises(ValueError):
        load_checkpoint(tmp_path / "bad.json")


def test_default_configs():
    m, t = default_config("parity", "diag")
    assert m["layers"] == ("diag", "diag")
    m, _ = default_config("s5", "delta")
    assert m["layers"] == ("delta",)
    assert default_config("parity", "full")[0]["layers"] == ("full",)
    with pytest.raises(ValueError):
        default_config("chess")
    with pytest.raises(ValueError):
        default_config("parity", "lstm")
