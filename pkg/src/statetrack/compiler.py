"""Exact LRNN weights for parity, cyclic and permutation groups, the
two-layer reflection adder and permutation-reset cascades."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .fsa import Cascade, Permutation, perm_to_transpositions, perm_unrank, all_permutations, transition_kind
from .linalg import GhFactor, reflection2, reflection2_factor, rotation2, rotation_as_householders, swap_householder
from .lrnn import (ArgmaxDot, Gh, LrnnLayer, LrnnModel, PairWithToken, RoundReadout, Scalar, Zero)


def compile_parity(eigen_range: str = "symmetric") -> LrnnModel:
    """Scalar layer ``h <- a(x) h + b(x)`` with a(0)=1, a(1)=-1, b(0)=0, b(1)=1."""
    layer = LrnnLayer(
        a_map=(Scalar(1.0), Scalar(-1.0)),
        b_map=(None, np.array([[1.0]])),
        h0=np.zeros((1, 1)),
        decoder=RoundReadout((0, 1), "scalar"),
        eigen_range=eigen_range,
    )
    return LrnnModel((layer,))


def cyclic_prototypes(m: int, h0=(1.0, 0.0)) -> np.ndarray:
    h0 = np.asarray(h0, dtype=float)
    return np.stack([rotation2(2 * math.pi * i / m) @ h0 for i in range(m)])


def compile_cyclic(m: int, eigen_range: str = "symmetric", renormalize_every: int = 0) -> LrnnModel:
    """Rotation counter mod ``m``: letter ``w`` rotates the 2-D state by ``2 pi w / m``."""
    if m < 2:
        raise ValueError("modulus must be at least 2")
    a_map = tuple(Gh(rotation_as_householders(2 * math.pi * w / m), 2) for w in range(m))
    layer = LrnnLayer(
        a_map=a_map,
        b_map=(None,) * m,
        h0=np.array([[1.0], [0.0]]),
        decoder=ArgmaxDot(cyclic_prototypes(m), tuple(range(m))),
        eigen_range=eigen_range,
        renormalize_every=renormalize_every,
    )
    return LrnnModel((layer,))


def permutation_transition(p: Permutation) -> Gh:
    """``perm_to_matrix(p)`` as a product of swap reflections (empty for the identity)."""
    n = len(p)
    return Gh(tuple(swap_householder(i, j, n) for i, j in perm_to_transpositions(p)), n)


def compile_permutation_group(generators: Sequence, eigen_range: str = "symmetric") -> LrnnModel:
    """Letter ``w`` acts by ``generators[w]`` on the state ``(1, ..., n)``.

    Outputs are lexicographic ranks of the running product, so with
    ``generators = all_permutations(n)`` tokens and outputs share one encoding.
    """
    gens = [g if isinstance(g, Permutation) else Permutation(g) for g in generators]
    if not gens:
        raise ValueError("need at least one generator")
    n = len(gens[0])
    if any(len(g) != n for g in gens):
        raise ValueError("generators must share one degree")
    ref = tuple(range(1, n + 1))
    layer = LrnnLayer(
        a_map=tuple(permutation_transition(g) for g in gens),
        b_map=(None,) * len(gens),
        h0=np.array(ref, dtype=float)[:, None],
        decoder=RoundReadout(ref, "perm_rank"),
        eigen_range=eigen_range,
    )
    return LrnnModel((layer,))


def compile_symmetric(n: int, eigen_range: str = "symmetric") -> LrnnModel:
    """Word problem of S_n with rank-encoded letters."""
    return compile_permutation_group(all_permutations(n), eigen_range)


def reflection_angle(i: int, parity: int, m: int) -> float:
    return (1 - 2 * i) * math.pi / m if parity else (1 + 2 * i) * math.pi / m


def reflection_prototypes(m: int) -> tuple[np.ndarray, tuple]:
    d0 = np.array([1.0, 0.0])
    c0 = reflection2(math.pi / m) @ d0
    ds = [rotation2(2 * i * math.pi / m) @ d0 for i in range(m)]
    cs = [rotation2(-2 * i * math.pi / m) @ c0 for i in range(m)]
    return np.stack(ds + cs), tuple(range(m)) + tuple(range(m))


def compile_mod_reflections(m: int, eigen_range: str = "symmetric") -> LrnnModel:
    """Addition mod ``m`` with reflections only.

    Layer 1 counts position parity and emits ``2 * x + h``; layer 2 applies one
    reflection per step, whose angle depends on the letter and the parity.
    """
    if m < 2:
        raise ValueError("modulus must be at least 2")
    counter = LrnnLayer(
        a_map=(Scalar(-1.0),) * m,
        b_map=(np.array([[1.0]]),) * m,
        h0=np.zeros((1, 1)),
        decoder=PairWithToken(RoundReadout((0, 1), "scalar"), label_count=2, token_count=m, state_first=False),
        eigen_range=eigen_range,
    )
    a_map = []
    for i in range(m):
        for parity in (0, 1):
            a_map.append(Gh((reflection2_factor(reflection_angle(i, parity, m)),), 2))
    protos, labels = reflection_prototypes(m)
    adder = LrnnLayer(
        a_map=tuple(a_map),
        b_map=(None,) * (2 * m),
        h0=np.array([[1.0], [0.0]]),
        decoder=ArgmaxDot(protos, labels),
        eigen_range=eigen_range,
    )
    return LrnnModel((counter, adder))


def zero_as_gh(n: int) -> Gh:
    """The zero matrix as ``n`` axis-aligned factors with eigenvalue 0."""
    return Gh(tuple(GhFactor(np.eye(n)[i], 1.0) for i in range(n)), n)


def cascade_to_lrnn(c: Cascade, strict_gh: bool = False, eigen_range: str = "symmetric") -> LrnnModel:
    """One LRNN layer per cascade level with one-hot states.

    Each layer emits ``state * alphabet + token`` for the next level, so the
    last layer's output encodes the joint state; see :func:`decode_cascade_output`.
    """
    layers = []
    for lvl in c.layers:
        n = lvl.num_states
        a_map, b_map = [], []
        for w in range(lvl.alphabet_size):
            kind = transition_kind(lvl, w)
            if kind == "perm":
                a_map.append(permutation_transition(Permutation(lvl.letter_map(w))))
                b_map.append(None)
            elif kind == "reset":
                a_map.append(zero_as_gh(n) if strict_gh else Zero(n))
                b_map.append(np.eye(n)[lvl.delta[0][w]][:, None])
            else:
                raise ValueError(f"letter {w} is neither a permutation nor a reset")
        decoder = PairWithToken(RoundReadout(tuple(range(1, n + 1)), "index"),
                                label_count=n, token_count=lvl.alphabet_size, state_first=True)
        layers.append(LrnnLayer(tuple(a_map), tuple(b_map), np.eye(n)[lvl.start][:, None], decoder,
                                eigen_range=eigen_range))
    return LrnnModel(tuple(layers))


def decode_cascade_output(c: Cascade, label: int) -> tuple[tuple, int]:
    """Split a last-layer output into (joint level states, original letter)."""
    states = []
    token = int(label)
    for lvl in reversed(c.layers):
        q, token = divmod(token, lvl.alphabet_size)
        states.append(q)
    return tuple(reversed(states)), token
