"""LRNN engine: ``H_i = A(x_i) H_{i-1} + B(x_i)``, ``y_i = dec(H_i, x_i)``.

Layers map a finite token alphabet to transitions, so a layer is exactly an
automaton over real states.  Stacked layers feed each layer's decoded
integer outputs to the next layer as tokens.

States are real ``n x d`` arrays.  The batched evaluator in
:func:`run_layer_batch` is what every public runner uses; it steps all words
of a batch together and, for scalar-state layers, drops into a compiled loop.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .linalg import GhFactor, gh_product_apply, gh_product_matrix, spectral_norm
from .precision import CastGrid, cast_array

try:  # numba is optional; the numpy loop is the reference path
    import numba
except ImportError:  # pragma: no cover
    numba = None

NORM_TOL = 1e-8


class EigenRangeError(ValueError):
    """A transition falls outside the allowed eigenvalue range."""


class DecodeError(RuntimeError):
    """A state could not be decoded (corrupted beyond the readout tolerance)."""


class UnknownToken(ValueError):
    pass


# -- transitions ----------------------------------------------------------------


@dataclass(frozen=True)
class Scalar:
    a: float

    kind = "scalar"

    def matrix(self, n: int) -> np.ndarray:
        return self.a * np.eye(n)

    def apply(self, h: np.ndarray) -> np.ndarray:
        return self.a * h


@dataclass(frozen=True)
class Diagonal:
    diag: np.ndarray

    kind = "diagonal"

    def __post_init__(self):
        d = np.asarray(self.diag, dtype=float).reshape(-1)
        d.setflags(write=False)
        object.__setattr__(self, "diag", d)

    @property
    def n(self) -> int:
        return self.diag.size

    def matrix(self, n: int) -> np.ndarray:
        return np.diag(self.diag)

    def apply(self, h: np.ndarray) -> np.ndarray:
        return self.diag[:, None] * h


@dataclass(frozen=True)
class Gh:
    """Product ``C1 C2 ... Ck`` of GH factors; empty means identity."""

    factors: tuple
    n: int

    kind = "gh"

    def __post_init__(self):
        factors = tuple(self.factors)
        for f in factors:
            if f.n != self.n:
                raise ValueError(f"GH factor of dimension {f.n} in a layer of dimension {self.n}")
        object.__setattr__(self, "factors", factors)

    def matrix(self, n: int) -> np.ndarray:
        if not self.factors:
            return np.eye(n)
        return gh_product_matrix(self.factors)

    def apply(self, h: np.ndarray) -> np.ndarray:
        return gh_product_apply(self.factors, h)


@dataclass(frozen=True)
class Full:
    mat: np.ndarray

    kind = "full"

    def __post_init__(self):
        m = np.asarray(self.mat, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("full transition must be square")
        m.setflags(write=False)
        object.__setattr__(self, "mat", m)

    @property
    def n(self) -> int:
        return self.mat.shape[0]

    def matrix(self, n: int) -> np.ndarray:
        return np.array(self.mat)

    def apply(self, h: np.ndarray) -> np.ndarray:
        return self.mat @ h


@dataclass(frozen=True)
class Zero:
    n: int

    kind = "zero"

    def matrix(self, n: int) -> np.ndarray:
        return np.zeros((n, n))

    def apply(self, h: np.ndarray) -> np.ndarray:
        return np.zeros_like(h)


Transition = Scalar | Diagonal | Gh | Full | Zero

EIGEN_RANGES = {"symmetric": (-1.0, 1.0), "unit": (0.0, 1.0)}


def check_transition(t, eigen_range: str = "symmetric", allow_unbounded: bool = False):
    """Raise :class:`EigenRangeError` unless ``t`` respects the range."""
    lo, hi = EIGEN_RANGES[eigen_range]
    if isinstance(t, Scalar):
        if not lo <= t.a <= hi:
            raise EigenRangeError(f"scalar transition {t.a} outside [{lo}, {hi}]")
    elif isinstance(t, Diagonal):
        if t.diag.size and not (np.all(t.diag >= lo) and np.all(t.diag <= hi)):
            raise EigenRangeError(f"diagonal transition outside [{lo}, {hi}]")
    elif isinstance(t, Gh):
        for f in t.factors:
            if not lo <= f.eigenvalue <= hi:
                raise EigenRangeError(f"GH factor eigenvalue {f.eigenvalue} outside [{lo}, {hi}]")
    elif isinstance(t, Full):
        if allow_unbounded:
            return
        if spectral_norm(t.mat) > 1.0 + NORM_TOL:
            raise EigenRangeError("full transition has spectral norm above 1")
        if eigen_range == "unit":
            ev = np.linalg.eigvals(t.mat)
            if np.any(np.abs(ev.imag) > NORM_TOL) or np.any(ev.real < -NORM_TOL):
                raise EigenRangeError("full transition has eigenvalues outside [0, 1]")
    elif isinstance(t, Zero):
        pass
    else:
        raise TypeError(f"unknown transition {t!r}")


# -- decoders -----------------------------------------------------------------


@dataclass(frozen=True)
class ArgmaxDot:
    """Label of the prototype with the largest dot product (lowest index on ties)."""

    prototypes: np.ndarray
    labels: tuple

    kind = "argmax_dot"

    def __post_init__(self):
        p = np.asarray(self.prototypes, dtype=float)
        if p.ndim != 2 or p.shape[0] == 0:
            raise ValueError("ArgmaxDot needs a non-empty 2-D prototype array")
        if len(self.labels) != p.shape[0]:
            raise ValueError("one label per prototype")
        p.setflags(write=False)
        object.__setattr__(self, "prototypes", p)
        object.__setattr__(self, "labels", tuple(int(x) for x in self.labels))

    def decode_batch(self, h: np.ndarray, tokens: np.ndarray) -> np.ndarray:
        scores = h.reshape(h.shape[0], -1) @ self.prototypes.T
        return np.asarray(self.labels)[np.argmax(scores, axis=1)]


READOUT_TOL = 0.25


def _round_checked(h: np.ndarray) -> np.ndarray:
    z = np.rint(h)
    bad = np.abs(h - z) >= READOUT_TOL
    if np.any(bad):
        raise DecodeError(f"state entry {h[bad].flat[0]!r} is not within {READOUT_TOL} of an integer")
    return z.astype(np.int64)


@dataclass(frozen=True)
class RoundReadout:
    """Decode a state whose entries should be integers.

    ``mode`` picks how the rounded state becomes a label:

    * ``"scalar"``: the state is one number, which must be in ``reference``;
    * ``"perm_rank"``: the state must be a permutation of ``reference = (1..n)``;
      the label is the lexicographic rank of the permutation that produced it
      from ``reference``;
    * ``"index"``: the label is ``reference . h - 1`` (one-hot state -> index).
    """

    reference: tuple
    mode: str = "scalar"

    kind = "round_readout"

    def __post_init__(self):
        if self.mode not in ("scalar", "perm_rank", "index"):
            raise ValueError(f"unknown readout mode {self.mode!r}")
        object.__setattr__(self, "reference", tuple(int(x) for x in self.reference))

    def decode_batch(self, h: np.ndarray, tokens: np.ndarray) -> np.ndarray:
        flat = h.reshape(h.shape[0], -1)
        ref = np.asarray(self.reference)
        if self.mode == "scalar":
            z = _round_checked(flat[:, 0])
            if not np.all(np.isin(z, ref)):
                raise DecodeError(f"decoded value outside {self.reference}")
            return z
        if self.mode == "index":
            z = _round_checked(flat @ ref.astype(float))
            if np.any(z < 1) or np.any(z > len(ref)):
                raise DecodeError("decoded index out of range")
            return z - 1
        z = _round_checked(flat)
        n = len(ref)
        if not np.all(np.sort(z, axis=1) == np.sort(ref)):
            raise DecodeError("state is not a permutation of the reference vector")
        # state[p[i]] = ref[i], so p^{-1}[j] = position of z[j] in ref
        pos = {int(r): i for i, r in enumerate(ref)}
        lut = np.full(int(ref.max()) + 1, -1)
        for r, i in pos.items():
            lut[r] = i
        inv = lut[z]
        perm = np.empty_like(inv)
        rows = np.arange(inv.shape[0])[:, None]
        perm[rows, inv] = np.arange(n)[None, :]
        return _rank_rows(perm)


def _rank_rows(perms: np.ndarray) -> np.ndarray:
    """Lexicographic ranks of each row of a permutation array."""
    b, n = perms.shape
    rank = np.zeros(b, dtype=np.int64)
    for i in range(n):
        smaller_later = (perms[:, i + 1:] < perms[:, i:i + 1]).sum(axis=1)
        rank += smaller_later * math.factorial(n - 1 - i)
    return rank


@dataclass(frozen=True)
class PassThrough:
    """No decoding; used when only states are wanted."""

    kind = "pass_through"

    def decode_batch(self, h: np.ndarray, tokens: np.ndarray) -> np.ndarray:
        return np.zeros(h.shape[0], dtype=np.int64)


@dataclass(frozen=True)
class PairWithToken:
    """Emit the pair (inner label, incoming token) as one integer.

    ``state_first=True`` gives ``label * token_count + token``; otherwise
    ``token * label_count + label``.
    """

    inner: object
    label_count: int
    token_count: int
    state_first: bool = True

    kind = "pair_with_token"

    def decode_batch(self, h: np.ndarray, tokens: np.ndarray) -> np.ndarray:
        lab = self.inner.decode_batch(h, tokens)
        if self.state_first:
            return lab * self.token_count + tokens
        return tokens * self.label_count + lab

    @property
    def output_count(self) -> int:
        return self.label_count * self.token_count


Decoder = ArgmaxDot | RoundReadout | PassThrough | PairWithToken


# -- layers and models ----------------------------------------------------------


@dataclass(frozen=True)
class LrnnLayer:
    """One layer over tokens ``0 .. len(a_map) - 1``.

    ``b_map[token]`` is an ``n x d`` array or ``None`` (zero input).
    """

    a_map: tuple
    b_map: tuple
    h0: np.ndarray
    decoder: object
    eigen_range: str = "symmetric"
    allow_unbounded: bool = False
    renormalize_every: int = 0

    def __post_init__(self):
        h0 = np.asarray(self.h0, dtype=float)
        if h0.ndim == 1:
            h0 = h0[:, None]
        if h0.ndim != 2 or not np.all(np.isfinite(h0)):
            raise ValueError("h0 must be a finite n x d array")
        h0.setflags(write=False)
        object.__setattr__(self, "h0", h0)
        a_map, b_map = tuple(self.a_map), tuple(self.b_map)
        if len(a_map) != len(b_map):
            raise ValueError("a_map and b_map must cover the same alphabet")
        n = h0.shape[0]
        fixed = []
        for tok, (t, b) in enumerate(zip(a_map, b_map)):
            tn = getattr(t, "n", None)
            if tn is not None and tn != n:
                raise ValueError(f"token {tok}: transition dimension {tn} != state dimension {n}")
            check_transition(t, self.eigen_range, self.allow_unbounded)
            if b is not None:
                b = np.asarray(b, dtype=float)
                if b.ndim == 1:
                    b = b[:, None]
                if b.shape != h0.shape:
                    raise ValueError(f"token {tok}: B shape {b.shape} != state shape {h0.shape}")
                b.setflags(write=False)
            fixed.append(b)
        object.__setattr__(self, "a_map", a_map)
        object.__setattr__(self, "b_map", tuple(fixed))

    @property
    def alphabet_size(self) -> int:
        return len(self.a_map)

    @property
    def state_shape(self) -> tuple:
        return self.h0.shape

    def b(self, token: int) -> np.ndarray:
        b = self.b_map[token]
        return np.zeros(self.h0.shape) if b is None else b


@dataclass(frozen=True)
class LrnnModel:
    layers: tuple

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise ValueError("model needs at least one layer")
        object.__setattr__(self, "layers", layers)

    @property
    def alphabet_size(self) -> int:
        return self.layers[0].alphabet_size


def _check_token(layer: LrnnLayer, token: int):
    if not 0 <= token < layer.alphabet_size:
        raise UnknownToken(f"token {token} outside layer alphabet of size {layer.alphabet_size}")


def layer_step(layer: LrnnLayer, h, token: int) -> np.ndarray:
    """One recurrence step; GH transitions are applied factor by factor."""
    _check_token(layer, token)
    h = np.asarray(h, dtype=float)
    if h.ndim == 1:
        h = h[:, None]
    return layer.a_map[token].apply(h) + layer.b(token)


# -- batched evaluation -----------------------------------------------------------


def _is_scalar_state(layer: LrnnLayer) -> bool:
    return layer.h0.size == 1 and all(isinstance(t, (Scalar, Zero, Diagonal, Gh)) for t in layer.a_map)


def _scalar_coeffs(layer: LrnnLayer) -> tuple[np.ndarray, np.ndarray]:
    a = np.array([float(t.matrix(1)[0, 0]) for t in layer.a_map])
    b = np.array([float(layer.b(tok)[0, 0]) for tok in range(layer.alphabet_size)])
    return a, b


# Loops run time-major over the batch so independent words overlap in the pipeline.
def _scalar_loop_py(a, b, h0, tokens, mode, lo, step, inv, n_steps):
    out = np.empty(tokens.shape, dtype=np.float64)
    h = np.full(tokens.shape[0], h0)
    for t in range(tokens.shape[1]):
        for i in range(tokens.shape[0]):
            k = tokens[i, t]
            x = a[k] * h[i] + b[k]
            if mode == 1:
                idx = math.ceil((x - lo) * inv - 0.5) if inv > 0 else math.ceil((x - lo) / step - 0.5)
                idx = min(max(idx, 0), n_steps)
                x = lo + idx * step
            h[i] = x
            out[i, t] = x
    return out


def _scalar_decode_loop_py(a, b, h0, tokens, mode, lo, step, inv, n_steps, allowed, labels):
    """Fused step + round readout; returns the flat index of a bad state or -1."""
    h = np.full(tokens.shape[0], h0)
    for t in range(tokens.shape[1]):
        for i in range(tokens.shape[0]):
            k = tokens[i, t]
            x = a[k] * h[i] + b[k]
            if mode == 1:
                idx = math.ceil((x - lo) * inv - 0.5) if inv > 0 else math.ceil((x - lo) / step - 0.5)
                idx = min(max(idx, 0), n_steps)
                x = lo + idx * step
            z = math.floor(x + 0.5)
            if abs(x - z) >= 0.25 or z < 0 or z >= allowed.shape[0] or not allowed[z]:
                return i * tokens.shape[1] + t
            h[i] = x
            labels[i, t] = z
    return -1


if numba is not None:
    _scalar_loop = numba.njit(cache=True, nogil=True)(_scalar_loop_py)
    _scalar_decode_loop = numba.njit(cache=True, nogil=True)(_scalar_decode_loop_py)
else:  # pragma: no cover
    _scalar_loop = _scalar_loop_py
    _scalar_decode_loop = _scalar_decode_loop_py


class BatchPlan:
    """Token-indexed tensors for stepping a batch of words through a layer."""

    def __init__(self, layer: LrnnLayer):
        n = layer.h0.shape[0]
        self.n = n
        ts = layer.a_map
        self.b = np.stack([layer.b(tok) for tok in range(layer.alphabet_size)])
        if all(isinstance(t, (Scalar, Diagonal, Zero)) for t in ts):
            self.mode = "diag"
            rows = []
            for t in ts:
                if isinstance(t, Scalar):
                    rows.append(np.full(n, t.a))
                elif isinstance(t, Zero):
                    rows.append(np.zeros(n))
                else:
                    rows.append(t.diag)
            self.diag = np.stack(rows)[:, :, None]
        elif any(isinstance(t, Full) for t in ts):
            self.mode = "dense"
            self.mats = np.stack([t.matrix(n) for t in ts])
        else:
            self.mode = "gh"
            k = max([len(t.factors) for t in ts if isinstance(t, Gh)] or [0])
            self.k = k
            self.scale = np.ones(len(ts))
            self.vs = np.zeros((len(ts), k, n))
            self.betas = np.zeros((len(ts), k))
            for tok, t in enumerate(ts):
                if isinstance(t, Gh):
                    # stored in application order: last factor acts first
                    for j, f in enumerate(reversed(t.factors)):
                        self.vs[tok, j] = f.v
                        self.betas[tok, j] = f.beta
                elif isinstance(t, Scalar):
                    self.scale[tok] = t.a
                elif isinstance(t, Zero):
                    self.scale[tok] = 0.0
                else:
                    raise TypeError("diagonal transitions cannot be mixed with GH ones in one layer")

    def step(self, h: np.ndarray, tok: np.ndarray) -> np.ndarray:
        if self.mode == "diag":
            return self.diag[tok] * h + self.b[tok]
        if self.mode == "dense":
            return np.einsum("bij,bjd->bid", self.mats[tok], h) + self.b[tok]
        h = self.scale[tok][:, None, None] * h
        for j in range(self.k):
            v = self.vs[tok, j]
            beta = self.betas[tok, j]
            proj = np.einsum("bi,bid->bd", v, h)
            h = h - (beta[:, None] * v)[:, :, None] * proj[:, None, :]
        return h + self.b[tok]


def run_layer_batch(layer: LrnnLayer, tokens, grid: CastGrid | None = None,
                    keep_states: bool = False, renormalize_every: int | None = None):
    """Run a batch of equal-length words through one layer.

    Returns ``(labels, states)``; ``labels`` is a ``(B, T)`` int array and
    ``states`` is ``(B, T, n, d)`` when ``keep_states`` else ``None``.
    ``grid`` casts the state after every step.
    """
    tokens = np.asarray(tokens)
    if tokens.dtype.kind not in "iu":
        tokens = tokens.astype(np.int64)
    if tokens.ndim != 2:
        raise ValueError("tokens must be a (batch, length) array")
    if tokens.size and (tokens.min() < 0 or tokens.max() >= layer.alphabet_size):
        bad = tokens[(tokens < 0) | (tokens >= layer.alphabet_size)][0]
        raise UnknownToken(f"token {bad} outside layer alphabet of size {layer.alphabet_size}")
    renorm = layer.renormalize_every if renormalize_every is None else renormalize_every
    bsz, length = tokens.shape
    shape = layer.h0.shape

    if _is_scalar_state(layer) and not renorm and (grid is None or grid.kind == "uniform"):
        a, b = _scalar_coeffs(layer)
        h0 = float(layer.h0[0, 0])
        # multiplying by 1/step rounds identically to dividing when step is a power of two
        inv = 1.0 / grid.step if grid is not None and math.frexp(grid.step)[0] == 0.5 else 0.0
        cast_args = (0, 0.0, 1.0, 0.0, 0) if grid is None else (
            1, grid.lo, grid.step, inv, round((grid.hi - grid.lo) / grid.step))
        dec = layer.decoder
        if not keep_states and isinstance(dec, RoundReadout) and dec.mode == "scalar" \
                and min(dec.reference) >= 0 and max(dec.reference) < 1024:
            allowed = np.zeros(max(dec.reference) + 1, dtype=np.bool_)
            allowed[list(dec.reference)] = True
            labels = np.empty(tokens.shape, dtype=np.int64)
            bad = _scalar_decode_loop(a, b, h0, tokens, *cast_args, allowed, labels)
            if bad >= 0:
                raise DecodeError(f"state at flat position {bad} does not round to one of {dec.reference}")
            return labels, None
        seq = _scalar_loop(a, b, h0, tokens, *cast_args)
        states = seq.reshape(bsz, length, 1, 1)
        labels = _decode_sequence(layer, states, tokens)
        return labels, (states if keep_states else None)

    plan = BatchPlan(layer)
    h = np.broadcast_to(layer.h0, (bsz,) + shape).copy()
    labels = np.empty((bsz, length), dtype=np.int64)
    states = np.empty((bsz, length) + shape) if keep_states else None
    for t in range(length):
        tok = tokens[:, t]
        h = plan.step(h, tok)
        if renorm and (t + 1) % renorm == 0:
            norms = np.linalg.norm(h.reshape(bsz, -1), axis=1)
            h = h / np.where(norms > 0, norms, 1.0)[:, None, None]
        if grid is not None:
            h = cast_array(h, grid)
        labels[:, t] = layer.decoder.decode_batch(h, tok)
        if keep_states:
            states[:, t] = h
    return labels, states


def _decode_sequence(layer, states, tokens, chunk: int = 1 << 20):
    bsz, length = tokens.shape
    flat_states = states.reshape((bsz * length,) + layer.h0.shape)
    flat_tok = tokens.reshape(-1)
    out = np.empty(bsz * length, dtype=np.int64)
    for s in range(0, out.size, chunk):
        out[s:s + chunk] = layer.decoder.decode_batch(flat_states[s:s + chunk], flat_tok[s:s + chunk])
    return out.reshape(bsz, length)


def model_run_batch(model: LrnnModel, words, grid: CastGrid | None = None,
                    keep_states: bool = False, renormalize_every: int | None = None):
    """Run equal-length words through all layers.

    Returns ``(labels, states_per_layer)`` where ``labels`` are the last
    layer's outputs.
    """
    tokens = np.asarray(words)
    if tokens.dtype.kind not in "iu":
        tokens = tokens.astype(np.int64)
    if tokens.ndim == 1:
        tokens = tokens[None, :]
    all_states = []
    for layer in model.layers:
        tokens, st = run_layer_batch(layer, tokens, grid, keep_states, renormalize_every)
        all_states.append(st)
    return tokens, all_states


def model_run(model: LrnnModel, word: Sequence[int], return_states: bool = False,
              renormalize_every: int | None = None):
    """Decoded outputs of the last layer, one per position."""
    word = np.asarray(list(word), dtype=np.int64)
    labels, states = model_run_batch(model, word[None, :], None, return_states, renormalize_every)
    out = labels[0].tolist()
    if return_states:
        return out, [s[0] for s in states]
    return out


def model_run_cast(model: LrnnModel, word: Sequence[int], grid: CastGrid,
                   return_states: bool = False, renormalize_every: int | None = None):
    """Like :func:`model_run` but every state is cast onto ``grid`` after every step."""
    word = np.asarray(list(word), dtype=np.int64)
    labels, states = model_run_batch(model, word[None, :], grid, return_states, renormalize_every)
    out = labels[0].tolist()
    if return_states:
        return out, [s[0] for s in states]
    return out


def layer_states(layer: LrnnLayer, word: Sequence[int], grid: CastGrid | None = None) -> np.ndarray:
    """State trajectory ``(T, n, d)`` of one layer on one word (no decoding)."""
    bare = LrnnLayer(layer.a_map, layer.b_map, layer.h0, PassThrough(), layer.eigen_range,
                     layer.allow_unbounded, layer.renormalize_every)
    _, st = run_layer_batch(bare, np.asarray(list(word), dtype=np.int64)[None, :], grid, True)
    return st[0]


# -- parallel-prefix evaluation -----------------------------------------------------


def scan_eval(layer: LrnnLayer, word: Sequence[int]) -> np.ndarray:
    """Final state via a balanced tree of affine-map compositions.

    ``(A2, B2) o (A1, B1) = (A2 A1, A2 B1 + B2)``; GH products are realized
    to dense matrices for this path.
    """
    word = list(word)
    for tok in word:
        _check_token(layer, tok)
    if not word:
        return np.array(layer.h0)
    n = layer.h0.shape[0]
    a = np.stack([layer.a_map[tok].matrix(n) for tok in word])
    b = np.stack([layer.b(tok) for tok in word])
    while a.shape[0] > 1:
        odd = a.shape[0] % 2
        if odd:
            a_tail, b_tail = a[-1:], b[-1:]
            a, b = a[:-1], b[:-1]
        a1, a2 = a[0::2], a[1::2]
        b1, b2 = b[0::2], b[1::2]
        a_new = a2 @ a1
        b_new = a2 @ b1 + b2
        if odd:
            a_new = np.concatenate([a_new, a_tail])
            b_new = np.concatenate([b_new, b_tail])
        a, b = a_new, b_new
    return a[0] @ layer.h0 + b[0]


def sequential_eval(layer: LrnnLayer, word: Sequence[int]) -> np.ndarray:
    h = np.array(layer.h0)
    for tok in word:
        h = layer_step(layer, h, tok)
    return h


# -- checkpoint format ---------------------------------------------------------------


def _transition_to_dict(t) -> dict:
    if isinstance(t, Scalar):
        return {"kind": "scalar", "a": t.a}
    if isinstance(t, Diagonal):
        return {"kind": "diagonal", "diag": t.diag.tolist()}
    if isinstance(t, Gh):
        return {"kind": "gh", "n": t.n,
                "factors": [{"v": f.v.tolist(), "beta": f.beta} for f in t.factors]}
    if isinstance(t, Full):
        return {"kind": "full", "matrix": t.mat.tolist()}
    if isinstance(t, Zero):
        return {"kind": "zero", "n": t.n}
    raise TypeError(f"unknown transition {t!r}")


def _transition_from_dict(d: dict):
    kind = d["kind"]
    if kind == "scalar":
        return Scalar(float(d["a"]))
    if kind == "diagonal":
        return Diagonal(np.array(d["diag"], dtype=float))
    if kind == "gh":
        factors = tuple(GhFactor(np.array(f["v"], dtype=float), float(f["beta"])) for f in d["factors"])
        return Gh(factors, int(d["n"]))
    if kind == "full":
        return Full(np.array(d["matrix"], dtype=float))
    if kind == "zero":
        return Zero(int(d["n"]))
    raise ValueError(f"unknown transition kind {kind!r}")


def _decoder_to_dict(dec) -> dict:
    if isinstance(dec, ArgmaxDot):
        return {"kind": "argmax_dot", "prototypes": dec.prototypes.tolist(), "labels": list(dec.labels)}
    if isinstance(dec, RoundReadout):
        return {"kind": "round_readout", "reference": list(dec.reference), "mode": dec.mode}
    if isinstance(dec, PassThrough):
        return {"kind": "pass_through"}
    if isinstance(dec, PairWithToken):
        return {"kind": "pair_with_token", "inner": _decoder_to_dict(dec.inner),
                "label_count": dec.label_count, "token_count": dec.token_count,
                "state_first": dec.state_first}
    raise TypeError(f"unknown decoder {dec!r}")


def _decoder_from_dict(d: dict):
    kind = d["kind"]
    if kind == "argmax_dot":
        return ArgmaxDot(np.array(d["prototypes"], dtype=float), tuple(d["labels"]))
    if kind == "round_readout":
        return RoundReadout(tuple(d["reference"]), d.get("mode", "scalar"))
    if kind == "pass_through":
        return PassThrough()
    if kind == "pair_with_token":
        return PairWithToken(_decoder_from_dict(d["inner"]), int(d["label_count"]),
                             int(d["token_count"]), bool(d.get("state_first", True)))
    raise ValueError(f"unknown decoder kind {kind!r}")


def model_to_dict(model: LrnnModel) -> dict:
    layers = []
    for layer in model.layers:
        layers.append({
            "h0": layer.h0.tolist(),
            "transitions": [_transition_to_dict(t) for t in layer.a_map],
            "inputs": [None if b is None else b.tolist() for b in layer.b_map],
            "decoder": _decoder_to_dict(layer.decoder),
            "eigen_range": layer.eigen_range,
            "allow_unbounded": layer.allow_unbounded,
            "renormalize_every": layer.renormalize_every,
        })
    return {"format": "statetrack-lrnn", "version": 1, "layers": layers}


def model_from_dict(d: dict) -> LrnnModel:
    if d.get("format") != "statetrack-lrnn":
        raise ValueError("not an LRNN checkpoint")
    layers = []
    for ld in d["layers"]:
        layers.append(LrnnLayer(
            tuple(_transition_from_dict(t) for t in ld["transitions"]),
            tuple(None if b is None else np.array(b, dtype=float) for b in ld["inputs"]),
            np.array(ld["h0"], dtype=float),
            _decoder_from_dict(ld["decoder"]),
            ld.get("eigen_range", "symmetric"),
            bool(ld.get("allow_unbounded", False)),
            int(ld.get("renormalize_every", 0)),
        ))
    return LrnnModel(tuple(layers))
