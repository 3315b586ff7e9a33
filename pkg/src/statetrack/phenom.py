"""Finite-precision behaviour of LRNN layers on constant inputs ``1^k``.

A cast recurrence lives on a finite set, so its state sequence is eventually
periodic.  Which periods are reachable depends on the eigenvalues of the
transition: nonnegative real ones give period 1, real ones at most 2 and a
rotation by ``2 pi / m`` gives ``m``.  This module measures that.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .linalg import GhFactor, gh_product_eigenvalues, rotation_as_householders
from .lrnn import BatchPlan, Diagonal, Gh, LrnnLayer, PassThrough, Scalar, Full, Zero
from .precision import DEFAULT_GRID, CastGrid, cast_array

DEFAULT_MAX_PERIOD = 64
KINDS = ("positive_eigs", "negative_real", "rotation")


def eventual_period(states, max_period: int = DEFAULT_MAX_PERIOD):
    """Smallest ``p`` and earliest ``t0`` with ``states[t] == states[t + p]`` for all ``t >= t0``.

    At least ``3p`` confirming comparisons are required; returns ``None``
    when no ``p <= max_period`` qualifies.
    """
    s = np.asarray(states, dtype=float)
    if s.shape[0] == 0:
        raise ValueError("empty state sequence")
    s = s.reshape(s.shape[0], -1)
    length = s.shape[0]
    for p in range(1, max_period + 1):
        if length - p < 3 * p:
            break
        eq = np.all(s[:-p] == s[p:], axis=1)
        bad = np.flatnonzero(~eq)
        t0 = int(bad[-1]) + 1 if bad.size else 0
        if length - p - t0 >= 3 * p:
            return t0, p
    return None


class PeriodTracker:
    """Online version of :func:`eventual_period` for a batch of trajectories.

    Keeps only the last ``max_period`` states, so runs of any length fit in memory.
    """

    def __init__(self, batch: int, state_size: int, max_period: int = DEFAULT_MAX_PERIOD):
        self.max_period = max_period
        self.buf = np.full((batch, max_period, state_size), np.nan)
        self.last_bad = np.full((batch, max_period), -1, dtype=np.int64)
        self.t = 0
        self.lags = np.arange(1, max_period + 1)

    def update(self, state: np.ndarray):
        s = state.reshape(state.shape[0], -1)
        t = self.t
        # ring buffer: slot j holds the latest state whose time is j mod max_period
        p = self.max_period
        mism = np.any(self.buf != s[:, None, :], axis=2)
        lag = (t - 1 - np.arange(p)) % p + 1
        mism &= (lag <= t)[None, :]
        cols = lag - 1
        self.last_bad[:, cols] = np.where(mism, t - lag[None, :], self.last_bad[:, cols])
        self.buf[:, t % p] = s
        self.t += 1

    def result(self) -> list:
        out = []
        length = self.t
        for row in self.last_bad:
            found = None
            for p in range(1, self.max_period + 1):
                if length - p < 3 * p:
                    break
                t0 = int(row[p - 1]) + 1
                if length - p - t0 >= 3 * p:
                    found = (t0, p)
                    break
            out.append(found)
        return out


@dataclass(frozen=True)
class ConstantInput:
    """The pieces of a layer that matter on ``1^k``: ``A(1)``, ``B(1)`` and ``H0``."""

    a: object
    b: np.ndarray
    h0: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float).reshape(-1))
        object.__setattr__(self, "h0", np.asarray(self.h0, dtype=float).reshape(-1))
        if self.b.shape != self.h0.shape:
            raise ValueError("b and h0 must have the same shape")

    @property
    def n(self) -> int:
        return self.h0.size

    @classmethod
    def from_layer(cls, layer: LrnnLayer, token: int = 1) -> "ConstantInput":
        if layer.h0.shape[1] != 1:
            raise ValueError("demos use vector states")
        return cls(layer.a_map[token], layer.b(token)[:, 0], layer.h0[:, 0])

    def eigenvalues(self) -> np.ndarray:
        n = self.n
        if isinstance(self.a, Gh) and n <= 4 and self.a.factors:
            return gh_product_eigenvalues(self.a.factors)
        return np.linalg.eigvals(self.a.matrix(n))


def _kind_check(kind: str, spec: ConstantInput, m: int | None):
    ev = spec.eigenvalues()
    real = np.all(np.abs(ev.imag) <= 1e-9)
    if kind == "positive_eigs":
        if not (real and np.all(ev.real >= -1e-12)):
            raise ValueError("positive_eigs needs real nonnegative eigenvalues")
    elif kind == "negative_real":
        if not real:
            raise ValueError("negative_real needs real eigenvalues")
    elif kind == "rotation":
        if spec.n != 2 or m is None or m < 2:
            raise ValueError("rotation demos need a 2-D state and m >= 2")
    else:
        raise ValueError(f"unknown demo kind {kind!r}")


def _verdict(kind: str, found, m: int | None) -> str:
    if found is None:
        return "no_period"
    p = found[1]
    if kind == "positive_eigs":
        ok = p == 1
    elif kind == "negative_real":
        ok = p <= 2
    else:
        ok = p == m
    return "pass" if ok else "fail"


def expected_period(kind: str, m: int | None = None) -> str:
    return {"positive_eigs": "1", "negative_real": "<=2"}.get(kind, str(m))


def _pad(x: np.ndarray, n: int) -> np.ndarray:
    return np.concatenate([x, np.zeros(n - x.size)])


def _pad_transition(a, n_old: int, n: int):
    if n_old == n or isinstance(a, Scalar):
        return a
    if isinstance(a, Diagonal):
        return Diagonal(_pad(a.diag, n))
    if isinstance(a, Zero):
        return Zero(n)
    if isinstance(a, Gh):
        return Gh(tuple(GhFactor(_pad(f.v, n), f.beta) for f in a.factors), n)
    m = np.zeros((n, n))
    m[:n_old, :n_old] = a.mat
    return Full(m)


def simulate_step_cast(specs: Sequence[ConstantInput], grid: CastGrid, k_max: int,
                       max_period: int = DEFAULT_MAX_PERIOD) -> list:
    """Run every spec on ``1^k_max`` with a cast after each step; detected periods.

    Specs sharing a state dimension are stepped together: each becomes one
    token of a throwaway layer and is fed that token forever.
    """
    results = [None] * len(specs)
    groups: dict = {}
    for i, s in enumerate(specs):
        fam = "gh" if isinstance(s.a, Gh) else ("full" if isinstance(s.a, Full) else "diag")
        groups.setdefault(fam, []).append(i)
    for idx in groups.values():
        # zero-padded coordinates stay zero, so padding does not change periods
        n = max(specs[i].n for i in idx)
        layer = LrnnLayer(
            a_map=tuple(_pad_transition(specs[i].a, specs[i].n, n) for i in idx),
            b_map=tuple(_pad(specs[i].b, n)[:, None] for i in idx),
            h0=np.zeros((n, 1)),
            decoder=PassThrough(),
            allow_unbounded=True,
        )
        plan = BatchPlan(layer)
        tok = np.arange(len(idx))
        h = np.stack([_pad(specs[i].h0, n)[:, None] for i in idx])
        tracker = PeriodTracker(len(idx), n, max_period)
        for _ in range(k_max):
            h = cast_array(plan.step(h, tok), grid)
            tracker.update(h)
        for i, found in zip(idx, tracker.result()):
            results[i] = found
    return results


def _diag_of(a, n: int) -> np.ndarray:
    if isinstance(a, Scalar):
        return np.full(n, a.a)
    if isinstance(a, Diagonal):
        return np.array(a.diag)
    if isinstance(a, Zero):
        return np.zeros(n)
    raise TypeError("power_cast is only defined for scalar and diagonal transitions")


def power_cast(spec: ConstantInput, grid: CastGrid, k_max: int) -> np.ndarray:
    """States ``cast(sum_{i<k} cast(a^i b) + cast(a^k h0))`` for ``k = 1..k_max``.

    Powers are taken exactly per coordinate, cast, then summed; this is the
    cast-then-sum order used in the impossibility arguments.
    """
    a = _diag_of(spec.a, spec.n)
    k = np.arange(k_max + 1, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        powers = a[None, :] ** k[:, None]
    terms = cast_array(powers[:-1] * spec.b[None, :], grid)
    partial = np.cumsum(terms, axis=0)
    h0_terms = cast_array(powers[1:] * spec.h0[None, :], grid)
    return cast_array(partial + h0_terms, grid)


def demo_theorem(kind: str, spec, grid: CastGrid = DEFAULT_GRID, k_max: int = 10_000,
                 m: int | None = None, max_period: int = DEFAULT_MAX_PERIOD) -> dict:
    """Detect the eventual period of ``1^k`` trajectories and judge it against ``kind``.

    ``spec`` is a :class:`ConstantInput` or a layer (token 1 is used).
    """
    return demo_many(kind, [spec], grid, k_max, m, max_period)[0]


def demo_many(kind: str, specs: Sequence, grid: CastGrid = DEFAULT_GRID, k_max: int = 10_000,
              m: int | None = None, max_period: int = DEFAULT_MAX_PERIOD) -> list:
    specs = [s if isinstance(s, ConstantInput) else ConstantInput.from_layer(s) for s in specs]
    for s in specs:
        _kind_check(kind, s, m)
    step_found = simulate_step_cast(specs, grid, k_max, max_period)
    reports = []
    for s, found in zip(specs, step_found):
        rep = {
            "kind": kind,
            "k_max": k_max,
            "expected_period": expected_period(kind, m),
            "tail_start": None if found is None else found[0],
            "period": None if found is None else found[1],
            "verdict": _verdict(kind, found, m),
        }
        if isinstance(s.a, (Scalar, Diagonal, Zero)):
            pfound = eventual_period(power_cast(s, grid, k_max), max_period)
            rep["power_cast"] = {
                "tail_start": None if pfound is None else pfound[0],
                "period": None if pfound is None else pfound[1],
                "verdict": _verdict(kind, pfound, m),
            }
        reports.append(rep)
    return reports


def random_specs(kind: str, count: int, rng: np.random.Generator, max_dim: int = 4) -> list:
    """Random constant-input layers of the requested eigenvalue class.

    ``positive_eigs`` mixes diagonal layers with one- and two-factor GH
    products (``beta`` in [0, 1]); two factors still have eigenvalues in
    [0, 1].  ``negative_real`` uses diagonals with at least one entry in [-1, 0).
    """
    out = []
    for i in range(count):
        n = int(rng.integers(1, max_dim + 1))
        b = rng.uniform(-1, 1, n)
        h0 = rng.uniform(-1, 1, n)
        if kind == "positive_eigs":
            if i % 2 == 0 or n == 1:
                a = Diagonal(rng.uniform(0, 1, n))
            else:
                k = int(rng.integers(1, 3))
                factors = tuple(GhFactor.from_vector(rng.normal(size=n), float(rng.uniform(0, 1)))
                                for _ in range(k))
                a = Gh(factors, n)
        elif kind == "negative_real":
            d = rng.uniform(-1, 1, n)
            d[int(rng.integers(n))] = rng.uniform(-1, 0)
            a = Diagonal(d)
        else:
            raise ValueError(f"no random generator for {kind!r}")
        out.append(ConstantInput(a, b, h0))
    return out


def rotation_spec(m: int) -> ConstantInput:
    return ConstantInput(Gh(rotation_as_householders(2 * np.pi / m), 2), np.zeros(2), np.array([1.0, 0.0]))
