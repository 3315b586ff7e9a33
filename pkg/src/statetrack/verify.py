"""Self-checks keyed by result, used by ``statetrack verify``.

Each check returns ``(passed, detail)``; ``quick`` shrinks sample counts.
"""

from __future__ import annotations

import itertools
import time
from typing import Callable

import numpy as np

from .compiler import (cascade_to_lrnn, compile_cyclic, compile_mod_reflections, compile_parity,
                       compile_permutation_group, compile_symmetric, decode_cascade_output)
from .fsa import (Permutation, all_permutations, cascade_run, no_double_zero_cascade, parity_cascade,
                  symmetric, word_problem_oracle)
from .linalg import GhFactor, gh_factorize, gh_product_eigenvalues, gh_product_matrix, spectral_norm
from .lrnn import EigenRangeError, model_run_batch
from .phenom import demo_many, random_specs, rotation_spec


def random_gh_product(rng: np.random.Generator, n: int, k: int, beta_lo: float = 0.0,
                      beta_hi: float = 2.0) -> list[GhFactor]:
    return [GhFactor.from_vector(rng.normal(size=n), float(rng.uniform(beta_lo, beta_hi))) for _ in range(k)]


def random_contraction(rng: np.random.Generator, n: int) -> np.ndarray:
    m = rng.normal(size=(n, n))
    return m / (spectral_norm(m) * float(rng.uniform(1.0, 2.0)))


def check_gh_norm(rng, count=500) -> tuple[bool, str]:
    worst = 0.0
    for _ in range(count):
        n = int(rng.integers(1, 9))
        fs = random_gh_product(rng, n, int(rng.integers(1, 2 * n + 1)))
        worst = max(worst, spectral_norm(gh_product_matrix(fs)))
    return worst <= 1.0 + 1e-10, f"max spectral norm {worst:.12f} over {count} products"


def check_gh_factorize(rng, count=200) -> tuple[bool, str]:
    worst_err, worst_ratio = 0.0, 0.0
    for _ in range(count):
        n = int(rng.integers(1, 9))
        m = random_contraction(rng, n)
        fs = gh_factorize(m)
        rec = gh_product_matrix(fs) if fs else np.eye(n)
        worst_err = max(worst_err, float(np.max(np.abs(rec - m))))
        worst_ratio = max(worst_ratio, len(fs) / (3 * n))
    ok = worst_err <= 1e-6 and worst_ratio <= 1.0
    return ok, f"max error {worst_err:.2e}, max factors/3n {worst_ratio:.2f} over {count} matrices"


def check_gh_eigenvalues(rng, count=300) -> tuple[bool, str]:
    bad = 0
    for i in range(count):
        n = int(rng.integers(1, 5))
        if i % 2:
            fs = random_gh_product(rng, n, int(rng.integers(1, 3)), 0.0, 1.0)
            ev = gh_product_eigenvalues(fs)
            ok = np.all(np.abs(ev.imag) <= 1e-8) and np.all((ev.real >= -1e-8) & (ev.real <= 1 + 1e-8))
        else:
            # beta strictly below 2 keeps every distinguished eigenvalue in (-1, 1]
            fs = random_gh_product(rng, n, int(rng.integers(1, 2 * n + 1)), 0.0, 2.0 - 1e-6)
            ev = gh_product_eigenvalues(fs)
            ok = np.all((np.abs(ev) < 1 + 1e-8) | (np.abs(ev - 1) <= 1e-8))
        bad += not ok
    return bad == 0, f"{bad} violations over {count} products"


def check_nonnegative_periods(rng, count=200, k_max=100_000) -> tuple[bool, str]:
    refused = 0
    for build in (lambda: compile_parity("unit"), lambda: compile_cyclic(3, "unit")):
        try:
            build()
        except EigenRangeError:
            refused += 1
    reps = demo_many("positive_eigs", random_specs("positive_eigs", count, rng), k_max=k_max, max_period=8)
    periods = sorted({r["period"] for r in reps}, key=str)
    ok = refused == 2 and all(r["verdict"] == "pass" for r in reps)
    return ok, f"unit-range parity/cyclic refused: {refused}/2; periods seen {periods} over {count} layers"


def check_negative_periods(rng, count=200, k_max=100_000) -> tuple[bool, str]:
    reps = demo_many("negative_real", random_specs("negative_real", count, rng), k_max=k_max, max_period=8)
    periods = sorted({r["period"] for r in reps}, key=str)
    rot = {m: demo_many("rotation", [rotation_spec(m)], k_max=k_max, m=m)[0]["period"] for m in (3, 4, 5)}
    ok = all(r["verdict"] == "pass" for r in reps) and all(rot[m] == m for m in rot)
    return ok, f"negative-real periods {periods}; rotation periods {rot}"


def check_group_compilation(rng, words=20, length=500) -> tuple[bool, str]:
    mism = 0
    model = compile_symmetric(5)
    w = rng.integers(0, 120, (words, length))
    got, _ = model_run_batch(model, w)
    mism += sum(got[i].tolist() != word_problem_oracle(symmetric(5), w[i].tolist()) for i in range(words))
    swaps = [Permutation.transposition(i, j, 5) for i, j in itertools.combinations(range(5), 2)]
    swap_model = compile_permutation_group(swaps)
    single = all(len(t.factors) == 1 for t in swap_model.layers[0].a_map)
    for m in (2, 3, 5, 12, 60):
        w = rng.integers(0, m, (4, 2000))
        got, _ = model_run_batch(compile_cyclic(m), w)
        mism += int(np.any(got != np.cumsum(w, axis=1) % m))
    # exhaustive short words over S3
    s3 = all_permutations(3)
    model3 = compile_permutation_group(s3)
    for n in range(1, 4):
        for word in itertools.product(range(6), repeat=n):
            mism += model_run_batch(model3, [word])[0][0].tolist() != word_problem_oracle(symmetric(3), word)
    return mism == 0 and single, f"{mism} mismatching words; swap transitions single-factor: {single}"


def check_cascade_compilation(rng, length=100, words=200) -> tuple[bool, str]:
    mism = 0
    for c in (parity_cascade(), no_double_zero_cascade()):
        for strict in (False, True):
            model = cascade_to_lrnn(c, strict_gh=strict)
            for n in range(1, 9):
                ws = np.array(list(itertools.product(range(c.alphabet_size), repeat=n)))
                got, _ = model_run_batch(model, ws)
                for w, row in zip(ws, got):
                    mism += [decode_cascade_output(c, x)[0] for x in row] != cascade_run(c, w.tolist())
        ws = rng.integers(0, c.alphabet_size, (words, length))
        got, _ = model_run_batch(cascade_to_lrnn(c), ws)
        for w, row in zip(ws, got):
            mism += [decode_cascade_output(c, x)[0] for x in row] != cascade_run(c, w.tolist())
    return mism == 0, f"{mism} mismatching words"


def check_reflection_adder(rng, length=1000, words=5) -> tuple[bool, str]:
    mism, worst = 0, 0.0
    for m in (3, 5, 12):
        model = compile_mod_reflections(m)
        w = rng.integers(0, m, (words, length))
        got, _ = model_run_batch(model, w)
        mism += int(np.sum(np.any(got != np.cumsum(w, axis=1) % m, axis=1)))
        for t in model.layers[1].a_map:
            a = t.matrix(2)
            worst = max(worst, float(np.max(np.abs(a @ a - np.eye(2)))))
    return mism == 0 and worst <= 1e-12, f"{mism} mismatching words; max |H^2 - I| {worst:.1e}"


CHECKS: dict[str, Callable] = {
    "T1": check_nonnegative_periods,
    "T2": check_negative_periods,
    "P1.1": check_gh_norm,
    "P1.2": check_gh_factorize,
    "P1.3": check_gh_eigenvalues,
    "T3": check_group_compilation,
    "T4": check_cascade_compilation,
    "AppE": check_reflection_adder,
}

SUITES = {"all": list(CHECKS), "prop1": ["P1.1", "P1.2", "P1.3"]}
QUICK = {"T1": {"count": 40, "k_max": 20_000}, "T2": {"count": 40, "k_max": 20_000}, "P1.1": {"count": 100},
         "P1.2": {"count": 50}, "P1.3": {"count": 100}}


def suite_keys(name: str) -> list[str]:
    if name in SUITES:
        return SUITES[name]
    for key in CHECKS:
        if key.lower() == name.lower():
            return [key]
    raise KeyError(f"unknown suite {name!r}; choose from {sorted(SUITES) + list(CHECKS)}")


def run_suite(name: str = "all", seed: int = 0, quick: bool = False) -> list[dict]:
    rows = []
    for key in suite_keys(name):
        rng = np.random.default_rng(seed)
        t0 = time.perf_counter()
        try:
            ok, detail = CHECKS[key](rng, **(QUICK.get(key, {}) if quick else {}))
        except Exception as exc:  # a crashing check is a failing check
            ok, detail = False, f"error: {exc!r}"
        rows.append({"key": key, "passed": bool(ok), "detail": detail,
                     "seconds": round(time.perf_counter() - t0, 2)})
    return rows


def format_table(rows: list[dict]) -> str:
    lines = [f"{'key':<6} {'result':<6} {'time':>8}  detail"]
    for r in rows:
        lines.append(f"{r['key']:<6} {'PASS' if r['passed'] else 'FAIL':<6} {r['seconds']:>7.2f}s  {r['detail']}")
    return "\n".join(lines)
