"""Central finite differences against the analytic gradients."""

from __future__ import annotations

import numpy as np

from .model import ModelConfig, init_params, loss_and_grads


def numeric_grads(params: dict, cfg: ModelConfig, tokens, labels, mask, eps: float = 1e-4) -> dict:
    out = {}
    for name, w in params.items():
        g = np.zeros_like(w)
        flat, gflat = w.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + eps
            up = loss_and_grads(params, cfg, tokens, labels, mask)[0]
            flat[i] = old - eps
            down = loss_and_grads(params, cfg, tokens, labels, mask)[0]
            flat[i] = old
            gflat[i] = (up - down) / (2 * eps)
        out[name] = g
    return out


def relative_errors(analytic: dict, numeric: dict) -> dict:
    """Per tensor ``max|a - n| / max(max|a|, max|n|, 1e-8)``."""
    errs = {}
    for name, a in analytic.items():
        n = numeric[name]
        scale = max(float(np.max(np.abs(a))), float(np.max(np.abs(n))), 1e-8)
        errs[name] = float(np.max(np.abs(a - n))) / scale
    return errs


def tiny_problem(kind: str, eigen_range: str, seed: int, d: int = 4, length: int = 6, batch: int = 2,
                 vocab: int = 3, n_out: int = 3, **cfg_kw):
    """A random tiny model plus a random batch for gradient checks."""
    cfg = ModelConfig(vocab=vocab, n_out=n_out, d_model=d, layers=(kind,), eigen_range=eigen_range,
                      full_n=2, **cfg_kw)
    rng = np.random.default_rng(seed + 1_000_003)
    params = init_params(cfg, seed)
    # keep the offsets moderate so sigmoid gates are not saturated
    for name in params:
        if name.endswith("c_beta"):
            params[name] = rng.normal(0.0, 0.5, params[name].shape)
    tokens = rng.integers(0, vocab, (batch, length))
    labels = rng.integers(0, n_out, (batch, length))
    mask = np.ones((batch, length))
    return params, cfg, tokens, labels, mask


def max_relative_error(kind: str, eigen_range: str, seed: int, eps: float = 1e-4, **kw) -> float:
    params, cfg, tokens, labels, mask = tiny_problem(kind, eigen_range, seed, **kw)
    _, analytic = loss_and_grads(params, cfg, tokens, labels, mask)
    numeric = numeric_grads(params, cfg, tokens, labels, mask, eps)
    return max(relative_errors(analytic, numeric).values())
