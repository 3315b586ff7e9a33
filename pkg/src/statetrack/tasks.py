"""Synthetic datasets: parity, modular arithmetic and group word problems.

Every sample is ``tokens``, per-position ``labels`` and a 0/1 ``mask`` of the
positions that count for loss and accuracy.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .fsa import Group, all_permutations, perm_rank, word_problem_oracle

# -- samples ---------------------------------------------------------------------


@dataclass(frozen=True)
class Sample:
    tokens: tuple
    labels: tuple
    mask: tuple

    def __post_init__(self):
        if not len(self.tokens) == len(self.labels) == len(self.mask):
            raise ValueError("tokens, labels and mask must have equal length")

    def to_dict(self) -> dict:
        return {"tokens": list(self.tokens), "labels": list(self.labels), "mask": list(self.mask)}

    @classmethod
    def from_dict(cls, d: dict) -> "Sample":
        return cls(tuple(d["tokens"]), tuple(d["labels"]), tuple(d["mask"]))


def _sample(tokens, labels, mask) -> Sample:
    return Sample(tuple(int(t) for t in tokens), tuple(int(y) for y in labels), tuple(int(k) for k in mask))


def write_jsonl(samples: Iterable[Sample], fh):
    for s in samples:
        fh.write(json.dumps(s.to_dict(), separators=(",", ":")) + "\n")


def read_jsonl(fh) -> list[Sample]:
    return [Sample.from_dict(json.loads(line)) for line in fh if line.strip()]


def _check_range(len_min: int, len_max: int, count: int):
    if not 1 <= len_min <= len_max:
        raise ValueError(f"need 1 <= len_min <= len_max, got {len_min}, {len_max}")
    if count < 0:
        raise ValueError("count must be nonnegative")


# -- parity ------------------------------------------------------------------------


def parity_labels(bits: Sequence[int]) -> list[int]:
    return (np.cumsum(np.asarray(bits, dtype=np.int64)) % 2).tolist()


def gen_parity(len_min: int, len_max: int, count: int, seed: int) -> list[Sample]:
    _check_range(len_min, len_max, count)
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        n = int(rng.integers(len_min, len_max + 1))
        bits = rng.integers(0, 2, n)
        out.append(_sample(bits, parity_labels(bits), [1] * n))
    return out


# -- modular arithmetic -------------------------------------------------------------

OPS = ("+", "-", "*")


@dataclass(frozen=True)
class ArithVocab:
    """Digits ``0..m-1`` then ``+ - * = PAD`` and, with brackets, ``( )``."""

    m: int
    brackets: bool

    @property
    def symbols(self) -> tuple:
        base = tuple(str(d) for d in range(self.m)) + ("+", "-", "*", "=", "PAD")
        return base + (("(", ")") if self.brackets else ())

    @property
    def size(self) -> int:
        return len(self.symbols)

    def id(self, sym: str) -> int:
        return self.symbols.index(sym)

    def encode(self, syms: Sequence[str]) -> list[int]:
        table = {s: i for i, s in enumerate(self.symbols)}
        return [table[s] for s in syms]

    def decode(self, ids: Sequence[int]) -> list[str]:
        return [self.symbols[i] for i in ids]


def tokenize(text: str) -> list[str]:
    """Split ``"2-3-3*2="`` style text; multi-character symbols are not used."""
    return [c for c in text.replace("[PAD]", "P").replace(" ", "") if c != "P"]


class _Parser:
    """Recursive-descent evaluator with the usual precedence, left associative.

    expr := term (('+'|'-') term)* ; term := unary ('*' unary)* ;
    unary := '-' unary | atom ; atom := digit | '(' expr ')'
    """

    def __init__(self, syms: Sequence[str], m: int):
        self.s = list(syms)
        self.i = 0
        self.m = m

    def peek(self):
        return self.s[self.i] if self.i < len(self.s) else None

    def take(self, want=None):
        tok = self.peek()
        if tok is None or (want is not None and tok != want):
            raise ValueError(f"expected {want or 'a symbol'} at position {self.i}, got {tok}")
        self.i += 1
        return tok

    def expr(self) -> int:
        v = self.term()
        while self.peek() in ("+", "-"):
            op = self.take()
            r = self.term()
            v = v + r if op == "+" else v - r
        return v

    def term(self) -> int:
        v = self.unary()
        while self.peek() == "*":
            self.take()
            v = v * self.unary()
        return v

    def unary(self) -> int:
        if self.peek() == "-":
            self.take()
            return -self.unary()
        return self.atom()

    def atom(self) -> int:
        tok = self.take()
        if tok == "(":
            v = self.expr()
            self.take(")")
            return v
        if tok.isdigit():
            return int(tok)
        raise ValueError(f"unexpected symbol {tok!r}")


def evaluate_expression(syms: Sequence[str], m: int) -> int:
    """Value mod ``m`` of an expression; a trailing ``=`` (and padding) is ignored."""
    syms = list(syms)
    if "=" in syms:
        syms = syms[:syms.index("=")]
    p = _Parser(syms, m)
    v = p.expr()
    if p.peek() is not None:
        raise ValueError(f"trailing symbols after position {p.i}")
    return v % m


def _flat_value(digits: list[int], ops: list[str], m: int) -> int:
    """Sum of products: fold each '*'-run first, then add or subtract the runs."""
    total, sign, run = 0, 1, digits[0]
    for op, d in zip(ops, digits[1:]):
        if op == "*":
            run = run * d
        else:
            total += sign * run
            sign, run = (1 if op == "+" else -1), d
    return (total + sign * run) % m


def _tree(rng: np.random.Generator, budget: int, m: int, leaf_p: float):
    """Random fully bracketed tree using at most ``budget`` symbols; returns (symbols, value)."""
    if budget < 5 or rng.random() < leaf_p:
        d = int(rng.integers(0, m))
        if budget >= 4 and rng.random() < 0.2:
            return ["(", "-", str(d), ")"], -d
        if budget >= 2 and rng.random() < 0.2:
            return ["-", str(d)], -d
        return [str(d)], d
    inner = budget - 3
    left_budget = int(rng.integers(1, inner))
    left, lv = _tree(rng, left_budget, m, leaf_p)
    right, rv = _tree(rng, inner - len(left), m, leaf_p)
    op = OPS[int(rng.integers(0, 3))]
    val = lv + rv if op == "+" else (lv - rv if op == "-" else lv * rv)
    return ["("] + left + [op] + right + [")"], val


def arith_sample(syms: Sequence[str], value: int, vocab: ArithVocab) -> Sample:
    """Expression, ``=``, then a PAD slot carrying the answer; only that slot is scored."""
    tokens = vocab.encode(list(syms) + ["=", "PAD"])
    labels = [0] * len(tokens)
    labels[-1] = value % vocab.m
    mask = [0] * len(tokens)
    mask[-1] = 1
    return _sample(tokens, labels, mask)


def gen_mod_arith(m: int, brackets: bool, len_min: int, len_max: int, count: int, seed: int,
                  leaf_p: float = 0.4, max_tries: int = 1000) -> list[Sample]:
    """Expressions of ``len_min..len_max`` symbols (before ``=``) with at least one operation."""
    if m < 2:
        raise ValueError("modulus must be at least 2")
    _check_range(len_min, len_max, count)
    if len_max < (5 if brackets else 3):
        raise ValueError("length budget too small for one operation")
    vocab = ArithVocab(m, brackets)
    rng = np.random.default_rng(seed)
    lo = max(len_min, 3)
    out = []
    for _ in range(count):
        if not brackets:
            n = int(rng.integers(lo, len_max + 1))
            n_ops = (n - 1) // 2
            digits = [int(d) for d in rng.integers(0, m, n_ops + 1)]
            ops = [OPS[int(k)] for k in rng.integers(0, 3, n_ops)]
            syms = [str(digits[0])]
            for op, d in zip(ops, digits[1:]):
                syms += [op, str(d)]
            out.append(arith_sample(syms, _flat_value(digits, ops, m), vocab))
            continue
        for _try in range(max_tries):
            budget = int(rng.integers(max(lo, 5), len_max + 1))
            syms, val = _tree(rng, budget, m, leaf_p)
            if len(syms) >= lo and any(s in OPS for s in syms[1:]) and syms[0] == "(":
                break
        else:
            raise RuntimeError("could not sample a bracketed expression in the length range")
        out.append(arith_sample(syms, val, vocab))
    return out


# -- group word problems -----------------------------------------------------------------


def group_elements(group: Group, variant: str) -> list[int]:
    """Token ids that may be sampled for ``variant`` (ranks for symmetric groups)."""
    if group.kind == "cyclic":
        if variant not in ("full",) and not variant.startswith("k_tokens"):
            raise ValueError(f"variant {variant!r} only applies to symmetric groups")
        return list(range(group.size))
    perms = all_permutations(group.size)
    if variant == "swaps_only":
        limit = 2
    elif variant == "up_to_3":
        limit = 3
    elif variant == "full" or variant.startswith("k_tokens"):
        return list(range(len(perms)))
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return [perm_rank(p) for p in perms if p.moved() <= limit]


def parse_variant(variant: str) -> tuple[str, int]:
    """``"k_tokens(4)"`` / ``"k_tokens:4"`` -> ("k_tokens", 4); others -> (variant, 1)."""
    if variant.startswith("k_tokens"):
        arg = variant[len("k_tokens"):].strip("():")
        k = int(arg)
        if k < 1:
            raise ValueError("k must be positive")
        return "k_tokens", k
    if variant not in ("full", "swaps_only", "up_to_3"):
        raise ValueError(f"unknown variant {variant!r}")
    return variant, 1


def group_vocab_size(group: Group, variant: str) -> int:
    """Input vocabulary: all group elements plus the filler token for k_tokens."""
    name, _ = parse_variant(variant)
    return group.order + (1 if name == "k_tokens" else 0)


def gen_group_word(group: Group, variant: str, length: int, count: int, seed: int) -> list[Sample]:
    """Random words with per-position running products.

    ``k_tokens(k)``: an element sits at every position ``i`` with ``i % k == 0``
    and the filler token ``|G|`` elsewhere; the label at position ``j`` is the
    product through position ``j - k + 1`` (0 while ``j < k - 1``), so each
    element gets ``k`` steps before it must be reflected in the output.
    """
    if length < 1 or count < 0:
        raise ValueError("length must be positive and count nonnegative")
    name, k = parse_variant(variant)
    elems = np.asarray(group_elements(group, name))
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        if name != "k_tokens":
            word = elems[rng.integers(0, len(elems), length)]
            out.append(_sample(word, word_problem_oracle(group, word.tolist()), [1] * length))
            continue
        word = np.full(length, group.order)
        pos = np.arange(0, length, k)
        word[pos] = elems[rng.integers(0, len(elems), len(pos))]
        as_elems = np.where(word == group.order, 0, word)
        prefix = word_problem_oracle(group, as_elems.tolist())
        labels = [0] * (k - 1) + prefix[:length - (k - 1)]
        out.append(_sample(word, labels[:length], [1] * length))
    return out
