"""Small dense linear algebra for generalized Householder (GH) matrices.

A GH factor is ``I - beta * v v^T`` with ``||v|| = 1``.  Its only non-unit
eigenvalue is ``1 - beta`` (along ``v``), so ``beta`` in ``[0, 2]`` keeps the
factor's spectrum inside ``[-1, 1]``.  A product of factors is stored as a
list ``[C1, C2, ..., Ck]`` and realizes the matrix ``C1 @ C2 @ ... @ Ck``;
applied to a vector, ``Ck`` acts first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

UNIT_TOL = 1e-12


@dataclass(frozen=True)
class GhFactor:
    """One factor ``I - beta * v v^T``."""

    v: np.ndarray
    beta: float

    def __post_init__(self):
        v = np.asarray(self.v, dtype=float).reshape(-1)
        if v.size == 0:
            raise ValueError("GH vector must be non-empty")
        if abs(np.linalg.norm(v) - 1.0) > UNIT_TOL:
            raise ValueError(f"GH vector must have unit norm, got {np.linalg.norm(v)!r}")
        beta = float(self.beta)
        if not 0.0 <= beta <= 2.0:
            raise ValueError(f"beta must lie in [0, 2], got {beta!r}")
        v.setflags(write=False)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "beta", beta)

    @property
    def n(self) -> int:
        return self.v.size

    @property
    def eigenvalue(self) -> float:
        """The distinguished eigenvalue ``1 - beta`` (along ``v``)."""
        return 1.0 - self.beta

    def matrix(self) -> np.ndarray:
        return np.eye(self.n) - self.beta * np.outer(self.v, self.v)

    @classmethod
    def from_vector(cls, v, beta: float) -> "GhFactor":
        """Build a factor from an arbitrary nonzero vector (normalized here)."""
        v = np.asarray(v, dtype=float).reshape(-1)
        norm = np.linalg.norm(v)
        if norm == 0.0:
            raise ValueError("cannot build a GH factor from the zero vector")
        return cls(v / norm, beta)


GhProduct = Sequence[GhFactor]


def _check_dims(factors: GhProduct) -> int:
    if not factors:
        raise ValueError("empty GH product has no dimension")
    n = factors[0].n
    for f in factors[1:]:
        if f.n != n:
            raise ValueError(f"GH factors disagree on dimension: {n} vs {f.n}")
    return n


def gh_apply(f: GhFactor, x) -> np.ndarray:
    """Return ``(I - beta v v^T) x`` without forming the matrix.

    ``x`` may be a vector of length n or an ``n x d`` matrix.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[0] != f.n:
        raise ValueError(f"dimension mismatch: factor has n={f.n}, input has {x.shape[0]}")
    return x - f.beta * np.multiply.outer(f.v, f.v @ x)


def gh_product_apply(factors: GhProduct, x) -> np.ndarray:
    """Apply ``C1 C2 ... Ck`` to ``x``, rightmost factor first."""
    x = np.asarray(x, dtype=float)
    for f in reversed(factors):
        x = gh_apply(f, x)
    return x


def gh_product_matrix(factors: GhProduct) -> np.ndarray:
    n = _check_dims(factors)
    out = np.eye(n)
    for f in factors:
        out = out - f.beta * np.outer(out @ f.v, f.v)
    return out


def rotation2(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def reflection2(alpha: float) -> np.ndarray:
    """Reflection across the line at angle ``alpha / 2`` through the origin."""
    c, s = math.cos(alpha), math.sin(alpha)
    return np.array([[c, s], [s, -c]])


def reflection2_factor(alpha: float) -> GhFactor:
    """``reflection2(alpha)`` as a single beta=2 GH factor."""
    half = alpha / 2.0
    return GhFactor(np.array([-math.sin(half), math.cos(half)]), 2.0)


def rotation_as_householders(theta: float) -> tuple[GhFactor, GhFactor]:
    """Two reflections whose product ``C1 @ C2`` is ``rotation2(theta)``.

    Uses ``R(theta) = H(theta) H(0)`` with ``H(0) = I - 2 e2 e2^T``.
    """
    return reflection2_factor(theta), GhFactor(np.array([0.0, 1.0]), 2.0)


def spectral_norm(m, iters: int = 500, tol: float = 1e-12) -> float:
    """Largest singular value by power iteration on ``M^T M``.

    The start vector is fixed to ``(1, ..., 1) / sqrt(n)`` so results are
    reproducible.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2:
        raise ValueError("spectral_norm expects a 2-D matrix")
    if not np.any(m):
        return 0.0
    gram = m.T @ m
    x = np.full(m.shape[1], 1.0 / math.sqrt(m.shape[1]))
    est = 0.0
    for _ in range(iters):
        y = gram @ x
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0
        x = y / ny
        new = float(x @ gram @ x)
        if abs(new - est) <= tol * max(new, 1e-300):
            est = new
            break
        est = new
    return math.sqrt(max(est, 0.0))


def _orthonormal_completion(u: np.ndarray, keep: np.ndarray) -> np.ndarray:
    """Replace the columns of ``u`` where ``keep`` is False by an orthonormal completion."""
    n = u.shape[0]
    basis = [u[:, j] for j in range(u.shape[1]) if keep[j]]
    extra = []
    while len(basis) + len(extra) < n:
        # the coordinate vector with the largest residual has squared norm >= (n - k) / n
        best, best_norm = None, -1.0
        for j in range(n):
            cand = np.zeros(n)
            cand[j] = 1.0
            for _ in range(2):
                for b in basis + extra:
                    cand = cand - (b @ cand) * b
            norm = np.linalg.norm(cand)
            if norm > best_norm:
                best, best_norm = cand, norm
        extra.append(best / best_norm)
    out = u.copy()
    it = iter(extra)
    for j in range(u.shape[1]):
        if not keep[j]:
            out[:, j] = next(it)
    return out


def svd_small(m, tol: float = 1e-15, max_sweeps: int = 100):
    """One-sided Jacobi SVD of a square matrix: ``M = U @ diag(S) @ V.T``.

    Column pairs are swept in fixed row-major order ``(0,1), (0,2), ...`` so
    the output is deterministic.  Singular values come out descending.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("svd_small expects a square matrix")
    n = m.shape[0]
    if n > 64:
        raise ValueError("svd_small is meant for n <= 64")
    u = m.copy()
    v = np.eye(n)
    for _ in range(max_sweeps):
        rotated = False
        for i in range(n - 1):
            for j in range(i + 1, n):
                ui, uj = u[:, i], u[:, j]
                alpha = ui @ ui
                beta = uj @ uj
                gamma = ui @ uj
                if abs(gamma) <= tol * math.sqrt(alpha * beta) or gamma == 0.0:
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = math.copysign(1.0, zeta) / (abs(zeta) + math.sqrt(1.0 + zeta * zeta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = c * t
                new_i = c * ui - s * uj
                new_j = s * ui + c * uj
                u[:, i], u[:, j] = new_i, new_j
                vi, vj = v[:, i].copy(), v[:, j].copy()
                v[:, i] = c * vi - s * vj
                v[:, j] = s * vi + c * vj
        if not rotated:
            break
    sigma = np.linalg.norm(u, axis=0)
    order = np.argsort(-sigma, kind="stable")
    sigma, u, v = sigma[order], u[:, order], v[:, order]
    scale = sigma[0] if n and sigma[0] > 0 else 1.0
    keep = sigma > 1e-13 * scale
    u = np.where(keep, u / np.where(keep, sigma, 1.0), 0.0)
    if not keep.all():
        u = _orthonormal_completion(u, keep)
    return u, sigma, v


def orthogonal_to_reflections(q, tol: float = 1e-8, skip_tol: float = 1e-10) -> list[GhFactor]:
    """Write an orthogonal matrix as a product of at most n reflections.

    Column ``i`` of the running residual is reflected onto ``e_i``; columns
    already within ``skip_tol`` of ``e_i`` are skipped, so the identity gives
    an empty list and an n-by-n permutation matrix at most n-1 factors.
    """
    q = np.asarray(q, dtype=float)
    if q.ndim != 2 or q.shape[0] != q.shape[1]:
        raise ValueError("expected a square matrix")
    n = q.shape[0]
    if np.max(np.abs(q.T @ q - np.eye(n))) > tol:
        raise ValueError("matrix is not orthogonal")
    residual = q.copy()
    factors = []
    for i in range(n):
        target = np.zeros(n)
        target[i] = 1.0
        diff = residual[:, i] - target
        norm = np.linalg.norm(diff)
        if norm < skip_tol:
            continue
        f = GhFactor(diff / norm, 2.0)
        residual = gh_apply(f, residual)
        factors.append(f)
    return factors


def gh_factorize(m, tol: float = 1e-8) -> list[GhFactor]:
    """Factor a matrix of spectral norm <= 1 into at most 3n GH factors.

    ``M = U S V^T``: U and V^T become reflections, ``S`` becomes axis-aligned
    factors ``I - (1 - s_i) e_i e_i^T``.
    """
    m = np.asarray(m, dtype=float)
    u, s, v = svd_small(m)
    if s.size and s[0] > 1.0 + tol:
        raise ValueError(f"matrix norm {s[0]!r} exceeds 1")
    n = m.shape[0]
    diag = []
    for i, sigma in enumerate(s):
        beta = 1.0 - min(float(sigma), 1.0)
        if beta < 1e-15:
            continue
        e = np.zeros(n)
        e[i] = 1.0
        diag.append(GhFactor(e, beta))
    return orthogonal_to_reflections(u, tol) + diag + orthogonal_to_reflections(v.T, tol)


def swap_householder(i: int, j: int, n: int) -> GhFactor:
    """The reflection that swaps coordinates ``i`` and ``j``."""
    if i == j:
        raise ValueError("swap needs two distinct indices")
    if not (0 <= i < n and 0 <= j < n):
        raise ValueError(f"indices {i}, {j} out of range for n={n}")
    v = np.zeros(n)
    v[i] = 1.0 / math.sqrt(2.0)
    v[j] = -1.0 / math.sqrt(2.0)
    return GhFactor(v, 2.0)


def char_poly(m) -> np.ndarray:
    """Characteristic polynomial coefficients (highest degree first), Faddeev-LeVerrier."""
    m = np.asarray(m, dtype=float)
    n = m.shape[0]
    coeffs = [1.0]
    acc = np.zeros_like(m)
    for k in range(1, n + 1):
        acc = m @ acc + coeffs[-1] * np.eye(n)
        coeffs.append(-np.trace(m @ acc) / k)
    return np.array(coeffs)


def _roots_small(m: np.ndarray) -> np.ndarray:
    k = m.shape[0]
    if k == 0:
        return np.zeros(0, dtype=complex)
    if k == 1:
        return np.array([complex(m[0, 0])])
    if k == 2:
        tr = m[0, 0] + m[1, 1]
        det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
        disc = complex(tr * tr / 4.0 - det)
        root = disc ** 0.5
        return np.array([tr / 2.0 + root, tr / 2.0 - root])
    return np.roots(char_poly(m)).astype(complex)


def gh_product_eigenvalues(factors: GhProduct) -> np.ndarray:
    """Eigenvalues of a small GH product (n <= 4).

    The product is the identity on the orthogonal complement of the span of
    its active vectors and maps that span into itself, so the spectrum is
    ``1`` repeated, plus the roots of the compressed k x k block.
    """
    n = _check_dims(factors)
    if n > 4:
        raise ValueError("eigenvalues are only computed for n <= 4")
    basis: list[np.ndarray] = []
    for f in factors:
        if f.beta == 0.0:
            continue
        cand = f.v.copy()
        for _ in range(2):
            for b in basis:
                cand = cand - (b @ cand) * b
        norm = np.linalg.norm(cand)
        if norm > 1e-9:
            basis.append(cand / norm)
    if not basis:
        return np.ones(n, dtype=complex)
    q = np.stack(basis, axis=1)
    block = q.T @ gh_product_matrix(factors) @ q
    inner = _roots_small(block)
    return np.concatenate([inner, np.ones(n - len(basis), dtype=complex)])
