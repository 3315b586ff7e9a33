"""Trainable toy LRNNs with hand-written reverse-mode gradients.

Blocks are pre-norm residual: ``x <- x + psi(recurrence(rmsnorm(x)))`` where
``psi`` is an RMS norm followed by a linear map.  Layer kinds:

* ``diag``: ``h_t = a_t * h_{t-1} + b_t`` with ``a_t = sigma(z)`` or ``2 sigma(z) - 1``;
* ``delta``: per head ``S_t = (I - beta k k^T) S_{t-1} + beta k v^T`` with unit keys
  and ``beta = sigma(z)`` or ``2 sigma(z)``; the read-out is ``S_t^T q_t``;
* ``full``: ``H_t = A(x_t) H_{t-1}``, ``H_0 = I``, one free matrix per token,
  flattened and projected onto the unit ball.  Only valid as the sole layer.

Everything is float64 numpy; parameters live in a flat ``name -> array`` dict.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

RANGES = ("unit_interval", "symmetric")
RANGE_ALIASES = {"01": "unit_interval", "unit": "unit_interval", "unit_interval": "unit_interval",
                 "sym": "symmetric", "symmetric": "symmetric"}
NORM_EPS = 1e-6
KEY_EPS = 1e-8


def canonical_range(r: str) -> str:
    try:
        return RANGE_ALIASES[r]
    except KeyError:
        raise ValueError(f"unknown eigenvalue range {r!r}") from None


@dataclass
class ModelConfig:
    vocab: int
    n_out: int
    d_model: int = 64
    layers: tuple = ("diag", "diag")
    eigen_range: str = "symmetric"
    n_state: int = 0          # diag state size; 0 means d_model
    heads: int = 1
    d_head: int = 0           # delta key/value size; 0 means d_model // heads
    full_n: int = 8
    readout: str = "mlp"
    d_hidden: int = 0         # 0 means d_model
    zero_readout: bool = False
    bos: bool = True          # prepend a start token (ignored by the full-matrix layer)
    input_gate: bool = False  # diag: scale b_t by 1 - sigma(z_t), so a_t -> 1 also silences the input

    def __post_init__(self):
        self.layers = tuple(self.layers)
        self.eigen_range = canonical_range(self.eigen_range)
        for kind in self.layers:
            if kind not in ("diag", "delta", "full"):
                raise ValueError(f"unknown layer kind {kind!r}")
        if "full" in self.layers and self.layers != ("full",):
            raise ValueError("the full-matrix layer must be the only layer")
        if self.readout not in ("mlp", "linear"):
            raise ValueError("readout must be 'mlp' or 'linear'")
        if min(self.vocab, self.n_out, self.d_model) < 1:
            raise ValueError("sizes must be positive")

    @property
    def uses_bos(self) -> bool:
        return self.bos and self.layers != ("full",)

    @property
    def state_size(self) -> int:
        return self.n_state or self.d_model

    @property
    def head_size(self) -> int:
        return self.d_head or max(1, self.d_model // self.heads)

    @property
    def hidden_size(self) -> int:
        return self.d_hidden or self.d_model

    def to_dict(self) -> dict:
        d = asdict(self)
        d["layers"] = list(self.layers)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


# -- elementwise pieces ---------------------------------------------------------


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(z):
    return 0.5 * z * (1.0 + np.tanh(_GELU_C * (z + 0.044715 * z ** 3)))


def gelu_grad(z):
    t = np.tanh(_GELU_C * (z + 0.044715 * z ** 3))
    return 0.5 * (1.0 + t) + 0.5 * z * (1.0 - t * t) * _GELU_C * (1.0 + 3 * 0.044715 * z * z)


def rms_fwd(x, g):
    r = 1.0 / np.sqrt(np.mean(x * x, axis=-1, keepdims=True) + NORM_EPS)
    xh = x * r
    return xh * g, (xh, r, g)


def rms_bwd(dy, cache):
    xh, r, g = cache
    dg = (dy * xh).reshape(-1, xh.shape[-1]).sum(axis=0)
    dxh = dy * g
    dx = r * (dxh - xh * np.mean(dxh * xh, axis=-1, keepdims=True))
    return dx, dg


def unit_fwd(x):
    n = np.sqrt(np.sum(x * x, axis=-1, keepdims=True) + KEY_EPS)
    return x / n, n


def unit_bwd(dk, k, n):
    return (dk - k * np.sum(k * dk, axis=-1, keepdims=True)) / n


def _range_map(s, eigen_range, kind):
    """sigma -> transition parameter: eigenvalue entries for diag, beta for delta."""
    if kind == "diag":
        return (s, 1.0) if eigen_range == "unit_interval" else (2.0 * s - 1.0, 2.0)
    return (s, 1.0) if eigen_range == "unit_interval" else (2.0 * s, 2.0)


def diag_transition(z, eigen_range):
    return _range_map(sigmoid(z), canonical_range(eigen_range), "diag")[0]


def delta_beta(z, eigen_range):
    return _range_map(sigmoid(z), canonical_range(eigen_range), "delta")[0]


# -- parameters -------------------------------------------------------------------


def init_params(cfg: ModelConfig, seed: int) -> dict:
    rng = np.random.default_rng(seed)
    d = cfg.d_model
    p = {}

    def lin(name, fan_in, fan_out, scale=1.0):
        p[name] = rng.normal(0.0, scale / math.sqrt(fan_in), (fan_in, fan_out))

    if cfg.layers != ("full",):
        p["embed"] = rng.normal(0.0, 1.0, (cfg.vocab + int(cfg.uses_bos), d))
    for i, kind in enumerate(cfg.layers):
        pre = f"l{i}."
        if kind == "diag":
            n = cfg.state_size
            p[pre + "g_in"] = np.ones(d)
            lin(pre + "w_a", d, n)
            p[pre + "c_a"] = rng.uniform(-2.0, 2.0, n)
            lin(pre + "w_b", d, n)
            p[pre + "g_out"] = np.ones(n)
            lin(pre + "w_o", n, d)
        elif kind == "delta":
            h, dh = cfg.heads, cfg.head_size
            p[pre + "g_in"] = np.ones(d)
            lin(pre + "w_k", d, h * dh)
            lin(pre + "w_q", d, h * dh)
            lin(pre + "w_v", d, h * dh)
            lin(pre + "w_beta", d, h)
            p[pre + "c_beta"] = np.zeros(h)
            p[pre + "h0"] = rng.normal(0.0, 1.0 / math.sqrt(dh), (h, dh, dh))
            p[pre + "g_out"] = np.ones(h * dh)
            lin(pre + "w_o", h * dh, d)
        else:
            n = cfg.full_n
            # near-orthogonal start keeps the product from collapsing or blowing up early
            q = np.stack([np.linalg.qr(rng.normal(size=(n, n)))[0] for _ in range(cfg.vocab)])
            p[pre + "a"] = q
            lin(pre + "w_o", n * n, d)
    p["r.g"] = np.ones(d)
    if cfg.readout == "mlp":
        lin("r.w1", d, cfg.hidden_size)
        p["r.b1"] = np.zeros(cfg.hidden_size)
        last_in = cfg.hidden_size
    else:
        last_in = d
    if cfg.zero_readout:
        p["r.w2"] = np.zeros((last_in, cfg.n_out))
    else:
        lin("r.w2", last_in, cfg.n_out)
    p["r.b2"] = np.zeros(cfg.n_out)
    return p


# -- layers -------------------------------------------------------------------------


def _diag_fwd(p, pre, x, eigen_range, gate=False):
    u, c_in = rms_fwd(x, p[pre + "g_in"])
    z = u @ p[pre + "w_a"] + p[pre + "c_a"]
    s = sigmoid(z)
    a, _ = _range_map(s, eigen_range, "diag")
    v = u @ p[pre + "w_b"]
    b = (1.0 - s) * v if gate else v
    bsz, length, n = b.shape
    hs = np.empty_like(b)
    h = np.zeros((bsz, n))
    for t in range(length):
        h = a[:, t] * h + b[:, t]
        hs[:, t] = h
    nrm, c_out = rms_fwd(hs, p[pre + "g_out"])
    y = nrm @ p[pre + "w_o"]
    return x + y, (u, c_in, s, a, v, hs, nrm, c_out)


def _diag_bwd(p, pre, dout, cache, eigen_range, grads, gate=False):
    u, c_in, s, a, v, hs, nrm, c_out = cache
    flat = lambda z: z.reshape(-1, z.shape[-1])
    grads[pre + "w_o"] = flat(nrm).T @ flat(dout)
    dnrm = dout @ p[pre + "w_o"].T
    dh, grads[pre + "g_out"] = rms_bwd(dnrm, c_out)
    length = hs.shape[1]
    da = np.empty_like(hs)
    db = np.empty_like(hs)
    g = np.zeros_like(hs[:, 0])
    for t in range(length - 1, -1, -1):
        g = g + dh[:, t]
        db[:, t] = g
        da[:, t] = g * hs[:, t - 1] if t > 0 else 0.0
        g = g * a[:, t]
    _, scale = _range_map(s, eigen_range, "diag")
    ds = da * scale
    if gate:
        ds = ds - db * v
        db = db * (1.0 - s)
    dz = ds * s * (1.0 - s)
    grads[pre + "w_a"] = flat(u).T @ flat(dz)
    grads[pre + "c_a"] = flat(dz).sum(axis=0)
    grads[pre + "w_b"] = flat(u).T @ flat(db)
    du = dz @ p[pre + "w_a"].T + db @ p[pre + "w_b"].T
    dx, grads[pre + "g_in"] = rms_bwd(du, c_in)
    return dout + dx


def _delta_fwd(p, pre, x, eigen_range, heads, dh):
    bsz, length, _ = x.shape
    u, c_in = rms_fwd(x, p[pre + "g_in"])
    kr = (u @ p[pre + "w_k"]).reshape(bsz, length, heads, dh)
    qr = (u @ p[pre + "w_q"]).reshape(bsz, length, heads, dh)
    v = (u @ p[pre + "w_v"]).reshape(bsz, length, heads, dh)
    k, kn = unit_fwd(kr)
    q, qn = unit_fwd(qr)
    s = sigmoid(u @ p[pre + "w_beta"] + p[pre + "c_beta"])
    beta, _ = _range_map(s, eigen_range, "delta")
    states = np.empty((length + 1, bsz, heads, dh, dh))
    states[0] = p[pre + "h0"][None]
    o = np.empty((bsz, length, heads, dh))
    S = states[0]
    for t in range(length):
        kt = k[:, t]
        r = v[:, t] - (kt[:, :, None, :] @ S)[:, :, 0, :]
        S = S + (beta[:, t, :, None] * kt)[..., :, None] * r[..., None, :]
        states[t + 1] = S
        o[:, t] = (q[:, t][:, :, None, :] @ S)[:, :, 0, :]
    of = o.reshape(bsz, length, heads * dh)
    nrm, c_out = rms_fwd(of, p[pre + "g_out"])
    y = nrm @ p[pre + "w_o"]
    return x + y, (u, c_in, k, kn, q, qn, v, s, beta, states, nrm, c_out)


def _delta_bwd(p, pre, dout, cache, eigen_range, heads, dh, grads):
    u, c_in, k, kn, q, qn, v, s, beta, states, nrm, c_out = cache
    bsz, length = u.shape[:2]
    flat = lambda z: z.reshape(-1, z.shape[-1])
    grads[pre + "w_o"] = flat(nrm).T @ flat(dout)
    dof, grads[pre + "g_out"] = rms_bwd(dout @ p[pre + "w_o"].T, c_out)
    do = dof.reshape(bsz, length, heads, dh)
    dk = np.empty_like(k)
    dq = np.empty_like(q)
    dv = np.empty_like(v)
    dbeta = np.empty_like(beta)
    G = np.zeros((bsz, heads, dh, dh))
    for t in range(length - 1, -1, -1):
        S, Sp = states[t + 1], states[t]
        kt, qt, dot, bt = k[:, t], q[:, t], do[:, t], beta[:, t, :, None]
        dq[:, t] = (S @ dot[..., None])[..., 0]
        G = G + qt[..., :, None] * dot[..., None, :]
        r = v[:, t] - (kt[:, :, None, :] @ Sp)[:, :, 0, :]
        Gr = (G @ r[..., None])[..., 0]
        Gtk = (kt[:, :, None, :] @ G)[:, :, 0, :]
        dbeta[:, t] = np.sum(kt * Gr, axis=-1)
        dv[:, t] = bt * Gtk
        dk[:, t] = bt * (Gr - (Sp @ Gtk[..., None])[..., 0])
        G = G - (bt * kt)[..., :, None] * Gtk[..., None, :]
    grads[pre + "h0"] = G.sum(axis=0)
    dkr = unit_bwd(dk, k, kn).reshape(bsz, length, heads * dh)
    dqr = unit_bwd(dq, q, qn).reshape(bsz, length, heads * dh)
    dvf = dv.reshape(bsz, length, heads * dh)
    _, scale = _range_map(s, eigen_range, "delta")
    dz = dbeta * s * (1.0 - s) * scale
    fu = flat(u)
    grads[pre + "w_k"] = fu.T @ flat(dkr)
    grads[pre + "w_q"] = fu.T @ flat(dqr)
    grads[pre + "w_v"] = fu.T @ flat(dvf)
    grads[pre + "w_beta"] = fu.T @ flat(dz)
    grads[pre + "c_beta"] = flat(dz).sum(axis=0)
    du = (dkr @ p[pre + "w_k"].T + dqr @ p[pre + "w_q"].T + dvf @ p[pre + "w_v"].T
          + dz @ p[pre + "w_beta"].T)
    dx, grads[pre + "g_in"] = rms_bwd(du, c_in)
    return dout + dx


def project_unit_ball(f):
    norm = np.linalg.norm(f, axis=-1, keepdims=True)
    return f / np.maximum(norm, 1.0), norm


def _full_fwd(p, pre, tokens, n):
    bsz, length = tokens.shape
    A = p[pre + "a"]
    states = np.empty((length + 1, bsz, n, n))
    states[0] = np.eye(n)
    H = states[0]
    for t in range(length):
        H = A[tokens[:, t]] @ H
        states[t + 1] = H
    f = states[1:].transpose(1, 0, 2, 3).reshape(bsz, length, n * n)
    proj, norm = project_unit_ball(f)
    return proj @ p[pre + "w_o"], (states, proj, norm)


def _full_bwd(p, pre, tokens, dout, cache, n, grads):
    states, proj, norm = cache
    bsz, length = tokens.shape
    flat = lambda z: z.reshape(-1, z.shape[-1])
    grads[pre + "w_o"] = flat(proj).T @ flat(dout)
    dproj = dout @ p[pre + "w_o"].T
    outside = norm > 1.0
    df = np.where(outside, (dproj - proj * np.sum(proj * dproj, axis=-1, keepdims=True)) / norm, dproj)
    dH = df.reshape(bsz, length, n, n)
    A = p[pre + "a"]
    dA = np.zeros_like(A)
    G = np.zeros((bsz, n, n))
    for t in range(length - 1, -1, -1):
        G = G + dH[:, t]
        At = A[tokens[:, t]]
        np.add.at(dA, tokens[:, t], G @ states[t].transpose(0, 2, 1))
        G = At.transpose(0, 2, 1) @ G
    grads[pre + "a"] = dA


# -- whole model ----------------------------------------------------------------------


def forward(params: dict, cfg: ModelConfig, tokens) -> tuple[np.ndarray, dict]:
    """Logits ``(B, T, n_out)`` and the cache :func:`backward` needs."""
    tokens = np.asarray(tokens)
    if tokens.ndim != 2:
        raise ValueError("tokens must be (batch, length)")
    if tokens.size and (tokens.min() < 0 or tokens.max() >= cfg.vocab):
        raise ValueError("token outside the model vocabulary")
    if cfg.uses_bos:
        tokens = np.concatenate([np.full((tokens.shape[0], 1), cfg.vocab, dtype=tokens.dtype), tokens], axis=1)
    cache = {"tokens": tokens, "layers": []}
    if cfg.layers == ("full",):
        x, c = _full_fwd(params, "l0.", tokens, cfg.full_n)
        cache["layers"].append(c)
    else:
        x = params["embed"][tokens]
        for i, kind in enumerate(cfg.layers):
            pre = f"l{i}."
            if kind == "diag":
                x, c = _diag_fwd(params, pre, x, cfg.eigen_range, cfg.input_gate)
            else:
                x, c = _delta_fwd(params, pre, x, cfg.eigen_range, cfg.heads, cfg.head_size)
            cache["layers"].append(c)
    u, c_r = rms_fwd(x, params["r.g"])
    cache["readout"] = [u, c_r]
    if cfg.readout == "mlp":
        z = u @ params["r.w1"] + params["r.b1"]
        hid = gelu(z)
        cache["readout"] += [z, hid]
    else:
        hid = u
    logits = hid @ params["r.w2"] + params["r.b2"]
    cache["readout_in"] = hid
    if cfg.uses_bos:
        logits = logits[:, 1:]
    cache["id"] = id(params)
    return logits, cache


def backward(params: dict, cfg: ModelConfig, cache: dict, dlogits) -> dict:
    """Parameter gradients given ``dL/dlogits``."""
    if cache.get("id") != id(params):
        raise ValueError("cache does not belong to these parameters")
    flat = lambda z: z.reshape(-1, z.shape[-1])
    grads = {}
    if cfg.uses_bos:
        dlogits = np.concatenate([np.zeros_like(dlogits[:, :1]), dlogits], axis=1)
    hid = cache["readout_in"]
    grads["r.w2"] = flat(hid).T @ flat(dlogits)
    grads["r.b2"] = flat(dlogits).sum(axis=0)
    dhid = dlogits @ params["r.w2"].T
    if cfg.readout == "mlp":
        u, c_r, z, _ = cache["readout"]
        dz = dhid * gelu_grad(z)
        grads["r.w1"] = flat(u).T @ flat(dz)
        grads["r.b1"] = flat(dz).sum(axis=0)
        du = dz @ params["r.w1"].T
    else:
        u, c_r = cache["readout"]
        du = dhid
    dx, grads["r.g"] = rms_bwd(du, c_r)
    tokens = cache["tokens"]
    if cfg.layers == ("full",):
        _full_bwd(params, "l0.", tokens, dx, cache["layers"][0], cfg.full_n, grads)
        return grads
    for i in range(len(cfg.layers) - 1, -1, -1):
        pre = f"l{i}."
        if cfg.layers[i] == "diag":
            dx = _diag_bwd(params, pre, dx, cache["layers"][i], cfg.eigen_range, grads, cfg.input_gate)
        else:
            dx = _delta_bwd(params, pre, dx, cache["layers"][i], cfg.eigen_range, cfg.heads,
                            cfg.head_size, grads)
    dE = np.zeros_like(params["embed"])
    np.add.at(dE, tokens.reshape(-1), flat(dx))
    grads["embed"] = dE
    return grads


def cross_entropy(logits, labels, mask) -> tuple[float, np.ndarray]:
    """Masked mean cross-entropy and its gradient with respect to the logits."""
    labels = np.asarray(labels)
    mask = np.asarray(mask, dtype=float)
    total = mask.sum()
    if total <= 0:
        raise ValueError("mask selects no positions")
    zmax = logits.max(axis=-1, keepdims=True)
    ez = np.exp(logits - zmax)
    ssum = ez.sum(axis=-1, keepdims=True)
    logp_label = np.take_along_axis(logits, labels[..., None], axis=-1)[..., 0] - zmax[..., 0] - np.log(ssum[..., 0])
    loss = float(-(logp_label * mask).sum() / total)
    grad = ez / ssum
    np.put_along_axis(grad, labels[..., None], np.take_along_axis(grad, labels[..., None], axis=-1) - 1.0, axis=-1)
    grad *= (mask / total)[..., None]
    return loss, grad


def loss_and_grads(params, cfg, tokens, labels, mask):
    logits, cache = forward(params, cfg, tokens)
    loss, dlogits = cross_entropy(logits, labels, mask)
    return loss, backward(params, cfg, cache, dlogits)


def predict(params, cfg, tokens, chunk: int = 256) -> np.ndarray:
    tokens = np.asarray(tokens)
    out = []
    for s in range(0, tokens.shape[0], chunk):
        logits, _ = forward(params, cfg, tokens[s:s + chunk])
        out.append(np.argmax(logits, axis=-1))
    return np.concatenate(out) if out else np.zeros(tokens.shape, dtype=np.int64)
