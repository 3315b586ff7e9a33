"""Finite-state automata, permutations and brute-force word-problem oracles.

Conventions, fixed once here:

* a permutation is stored in one-line notation, ``p[i]`` is the image of ``i``;
* ``perm_compose(p, q)`` is ``p o q``: apply ``q`` first, then ``p``;
* ``perm_to_matrix(p)`` has ``P[p[i], i] = 1`` so ``P @ e_i = e_{p[i]}`` and
  ``perm_to_matrix(p o q) == perm_to_matrix(p) @ perm_to_matrix(q)``;
* word problems multiply in reading order: after ``x1 .. xi`` the state is
  ``xi o ... o x1``.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class Fsa:
    """Deterministic automaton; ``delta[state][letter]`` is the next state."""

    alphabet_size: int
    num_states: int
    start: int
    delta: tuple

    def __post_init__(self):
        delta = tuple(tuple(int(q) for q in row) for row in self.delta)
        if self.alphabet_size < 1 or self.num_states < 1:
            raise ValueError("alphabet and state set must be non-empty")
        if not 0 <= self.start < self.num_states:
            raise ValueError(f"start state {self.start} out of range")
        if len(delta) != self.num_states:
            raise ValueError("delta needs one row per state")
        for row in delta:
            if len(row) != self.alphabet_size:
                raise ValueError("delta rows must cover the whole alphabet")
            if any(not 0 <= q < self.num_states for q in row):
                raise ValueError("delta points outside the state set")
        object.__setattr__(self, "delta", delta)

    def letter_map(self, letter: int) -> tuple:
        """The state map ``delta(., letter)`` as a tuple indexed by state."""
        return tuple(self.delta[q][letter] for q in range(self.num_states))

    def to_dict(self) -> dict:
        return {
            "alphabet_size": self.alphabet_size,
            "num_states": self.num_states,
            "start": self.start,
            "delta": [list(r) for r in self.delta],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Fsa":
        return cls(int(d["alphabet_size"]), int(d["num_states"]), int(d["start"]), d["delta"])

    @classmethod
    def load(cls, path) -> "Fsa":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def parity_fsa() -> Fsa:
    """States 0 = Even, 1 = Odd; letter 1 flips, letter 0 keeps."""
    return Fsa(2, 2, 0, ((0, 1), (1, 0)))


def cyclic_counter_fsa(m: int) -> Fsa:
    """Counter mod ``m`` over letters ``0..m-1`` (letter ``w`` adds ``w``)."""
    return Fsa(m, m, 0, tuple(tuple((q + w) % m for w in range(m)) for q in range(m)))


def fsa_run(a: Fsa, word: Iterable[int]) -> list[int]:
    """States after each prefix, starting with the start state."""
    q = a.start
    out = [q]
    for letter in word:
        if not 0 <= letter < a.alphabet_size:
            raise ValueError(f"letter {letter} outside alphabet of size {a.alphabet_size}")
        q = a.delta[q][letter]
        out.append(q)
    return out


class MonoidTooLarge(RuntimeError):
    pass


def transition_monoid(a: Fsa, max_size: int = 10_000) -> tuple[set, bool]:
    """Closure of the letter maps (plus identity) under composition.

    Returns the set of state maps (tuples) and whether every map is a bijection.
    """
    identity = tuple(range(a.num_states))
    gens = [a.letter_map(w) for w in range(a.alphabet_size)]
    seen = {identity}
    frontier = [identity]
    while frontier:
        nxt = []
        for f in frontier:
            for g in gens:
                # read f's word, then the letter
                h = tuple(g[f[q]] for q in range(a.num_states))
                if h not in seen:
                    seen.add(h)
                    if len(seen) > max_size:
                        raise MonoidTooLarge(f"transition monoid exceeds {max_size} elements")
                    nxt.append(h)
        frontier = nxt
    is_group = all(len(set(f)) == a.num_states for f in seen)
    return seen, is_group


# -- permutations -----------------------------------------------------------


class Permutation(tuple):
    """A permutation of ``0..n-1`` in one-line notation."""

    def __new__(cls, mapping):
        mapping = tuple(int(i) for i in mapping)
        if sorted(mapping) != list(range(len(mapping))):
            raise ValueError(f"{mapping} is not a permutation")
        return super().__new__(cls, mapping)

    @property
    def degree(self) -> int:
        return len(self)

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(range(n))

    @classmethod
    def transposition(cls, i: int, j: int, n: int) -> "Permutation":
        m = list(range(n))
        m[i], m[j] = m[j], m[i]
        return cls(m)

    def moved(self) -> int:
        return sum(1 for i, p in enumerate(self) if i != p)

    def __repr__(self):
        return f"Permutation({list(self)})"


def _same_degree(p: Permutation, q: Permutation):
    if len(p) != len(q):
        raise ValueError(f"degree mismatch: {len(p)} vs {len(q)}")


def perm_compose(p: Permutation, q: Permutation) -> Permutation:
    """``p o q``: apply ``q`` first, then ``p``."""
    _same_degree(p, q)
    return Permutation(p[i] for i in q)


def perm_invert(p: Permutation) -> Permutation:
    inv = [0] * len(p)
    for i, pi in enumerate(p):
        inv[pi] = i
    return Permutation(inv)


def perm_to_matrix(p: Permutation) -> np.ndarray:
    n = len(p)
    m = np.zeros((n, n))
    m[list(p), list(range(n))] = 1.0
    return m


def perm_to_transpositions(p: Permutation) -> list[tuple[int, int]]:
    """Transpositions ``t1, ..., tk`` with ``p = t1 o t2 o ... o tk``.

    Each cycle ``(c0 c1 ... c_{l-1})`` with ``c_{i} -> c_{i+1}`` contributes
    ``(c0 c_{l-1}) ... (c0 c2)(c0 c1)`` read left to right; ``k <= n - 1``.
    """
    seen = [False] * len(p)
    out = []
    for start in range(len(p)):
        if seen[start] or p[start] == start:
            seen[start] = True
            continue
        cycle = []
        i = start
        while not seen[i]:
            seen[i] = True
            cycle.append(i)
            i = p[i]
        out.extend((cycle[0], c) for c in reversed(cycle[1:]))
    return out


def perm_rank(p: Permutation) -> int:
    """Lexicographic rank of the one-line notation (identity is 0)."""
    n = len(p)
    rank = 0
    remaining = list(range(n))
    for i, pi in enumerate(p):
        idx = remaining.index(pi)
        rank += idx * math.factorial(n - 1 - i)
        remaining.pop(idx)
    return rank


def perm_unrank(r: int, n: int) -> Permutation:
    if not 0 <= r < math.factorial(n):
        raise ValueError(f"rank {r} out of range for degree {n}")
    remaining = list(range(n))
    out = []
    for i in range(n):
        f = math.factorial(n - 1 - i)
        idx, r = divmod(r, f)
        out.append(remaining.pop(idx))
    return Permutation(out)


def all_permutations(n: int) -> list[Permutation]:
    """All of S_n in rank order."""
    return [Permutation(t) for t in itertools.permutations(range(n))]


# -- groups and word problems -----------------------------------------------


@dataclass(frozen=True)
class Group:
    """``cyclic(m)`` (elements ``0..m-1``) or ``symmetric(n)`` (elements are ranks)."""

    kind: str
    size: int

    def __post_init__(self):
        if self.kind not in ("cyclic", "symmetric"):
            raise ValueError(f"unknown group kind {self.kind!r}")
        if self.size < 1:
            raise ValueError("group parameter must be positive")

    @classmethod
    def parse(cls, text: str) -> "Group":
        kind, _, arg = text.partition(":")
        aliases = {"cyclic": "cyclic", "Z": "cyclic", "symmetric": "symmetric", "S": "symmetric"}
        if kind not in aliases or not arg:
            raise ValueError(f"cannot parse group {text!r}; use cyclic:m or symmetric:n")
        return cls(aliases[kind], int(arg))

    @property
    def order(self) -> int:
        return self.size if self.kind == "cyclic" else math.factorial(self.size)

    def __str__(self):
        return f"{self.kind}:{self.size}"


def cyclic(m: int) -> Group:
    return Group("cyclic", m)


def symmetric(n: int) -> Group:
    return Group("symmetric", n)


def word_problem_oracle(group: Group, word: Sequence[int]) -> list[int]:
    """Running products of ``word``, multiplied in reading order."""
    order = group.order
    for x in word:
        if not 0 <= int(x) < order:
            raise ValueError(f"element {x} invalid for {group}")
    if group.kind == "cyclic":
        out, acc = [], 0
        for x in word:
            acc = (acc + int(x)) % group.size
            out.append(acc)
        return out
    acc = Permutation.identity(group.size)
    out = []
    for x in word:
        acc = perm_compose(perm_unrank(int(x), group.size), acc)
        out.append(perm_rank(acc))
    return out


# -- cascades ----------------------------------------------------------------


@dataclass(frozen=True)
class Cascade:
    """A cascade of permutation-reset automata.

    Level 0 reads the original letters.  Level ``i > 0`` reads the pair
    ``(state of level i-1 after the step, letter level i-1 read)`` encoded as
    ``state * prev_alphabet + letter``, so its alphabet size must be
    ``prev.num_states * prev.alphabet_size``.  The joint state after a step is
    the tuple of all level states.
    """

    layers: tuple

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise ValueError("cascade needs at least one level")
        for i, lvl in enumerate(layers):
            if i > 0:
                prev = layers[i - 1]
                want = prev.num_states * prev.alphabet_size
                if lvl.alphabet_size != want:
                    raise ValueError(f"level {i} alphabet must have size {want}")
            for w in range(lvl.alphabet_size):
                if transition_kind(lvl, w) == "other":
                    raise ValueError(f"level {i} letter {w} is neither a permutation nor a reset")
        object.__setattr__(self, "layers", layers)

    @property
    def alphabet_size(self) -> int:
        return self.layers[0].alphabet_size

    def to_dict(self) -> dict:
        return {"layers": [lvl.to_dict() for lvl in self.layers]}

    @classmethod
    def from_dict(cls, d: dict) -> "Cascade":
        return cls(tuple(Fsa.from_dict(x) for x in d["layers"]))

    @classmethod
    def load(cls, path) -> "Cascade":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def transition_kind(a: Fsa, letter: int) -> str:
    """``'perm'``, ``'reset'`` or ``'other'`` for the map ``delta(., letter)``."""
    f = a.letter_map(letter)
    if len(set(f)) == a.num_states:
        return "perm"
    if len(set(f)) == 1:
        return "reset"
    return "other"


def cascade_run(c: Cascade, word: Iterable[int]) -> list[tuple]:
    """Direct simulation: joint level states after each letter (no initial state)."""
    states = [lvl.start for lvl in c.layers]
    out = []
    for letter in word:
        if not 0 <= letter < c.alphabet_size:
            raise ValueError(f"letter {letter} outside alphabet")
        token = letter
        for i, lvl in enumerate(c.layers):
            states[i] = lvl.delta[states[i]][token]
            token = states[i] * lvl.alphabet_size + token
        out.append(tuple(states))
    return out


def parity_cascade() -> Cascade:
    """Single-level cascade of the parity automaton (both letters are permutations)."""
    return Cascade((parity_fsa(),))


def no_double_zero_cascade() -> Cascade:
    """Two levels recognizing words without ``00``; the last level is 1 once ``00`` occurred.

    Level 0 toggles on ``0`` and resets to 0 on ``1``, so it reads 0 right after
    a second consecutive ``0``.  Level 1 resets to the dead state 1 on the
    pair (state 0, letter 0) and keeps its state otherwise.
    """
    lvl0 = Fsa(2, 2, 0, ((1, 0), (0, 0)))
    lvl1 = Fsa(4, 2, 0, ((1, 0, 0, 0), (1, 1, 1, 1)))
    return Cascade((lvl0, lvl1))
