#!/usr/bin/env python3
"""
Symmetric factorizations and truncated eigendecompositions

Dense paths go through scipy.linalg; the matrix-free path is a seeded randomized
subspace iteration that only needs the action v -> A v.
"""

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg as sla

from errors import ActionNotLinear, NotPositiveDefinite, NotSymmetric
from logger import get_logger

log = get_logger(__name__)


# Relative jitter levels tried in order before giving up on a Cholesky factorization
JITTER_LEVELS = (0.0, 1e-12, 1e-10, 1e-8)
SYMMETRY_TOL = 1e-8


@dataclass(frozen=True)
class SymFactor:
    """Factor L with L Lᵀ equal to the factored matrix (plus jitter)

    Lower-triangular (Cholesky) unless `lower` is False, e.g. for a symmetric square root.
    """
    L: np.ndarray
    jitter: float = 0.0
    lower: bool = True

    @property
    def dim(self) -> int:
        return self.L.shape[0]

    def apply(self, v: np.ndarray) -> np.ndarray:
        return self.L @ v

    def apply_t(self, v: np.ndarray) -> np.ndarray:
        return self.L.T @ v

    def solve(self, v: np.ndarray) -> np.ndarray:
        """L⁻¹ v"""
        if not self.lower:
            return sla.solve(self.L, v, check_finite=False)
        return sla.solve_triangular(self.L, v, lower=True, check_finite=False)

    def solve_t(self, v: np.ndarray) -> np.ndarray:
        """L⁻ᵀ v"""
        if not self.lower:
            return sla.solve(self.L.T, v, check_finite=False)
        return sla.solve_triangular(self.L, v, lower=True, trans='T', check_finite=False)

    def matrix(self) -> np.ndarray:
        return self.L @ self.L.T


@dataclass(frozen=True)
class TruncatedEig:
    values: np.ndarray
    vectors: np.ndarray

    @property
    def rank(self) -> int:
        return len(self.values)

    def reconstruct(self) -> np.ndarray:
        return (self.vectors * self.values) @ self.vectors.T


def check_symmetric(mat: np.ndarray, tol: float = SYMMETRY_TOL) -> np.ndarray:
    """Raise NotSymmetric if mat is not symmetric to tol·‖mat‖; return the symmetrized matrix"""
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise NotSymmetric(f"expected a square matrix, got shape {mat.shape}")
    scale = np.max(np.abs(mat)) if mat.size else 0.0
    asym = np.max(np.abs(mat - mat.T)) if mat.size else 0.0
    if asym > tol * max(scale, np.finfo(float).tiny):
        raise NotSymmetric(f"max asymmetry {asym:.3e} exceeds {tol:g} x {scale:.3e}")
    return 0.5 * (mat + mat.T)


def sym_factor(cov: np.ndarray) -> SymFactor:
    """Cholesky factor of an SPD (or numerically PSD) matrix with jitter escalation"""
    cov = check_symmetric(cov)
    n = cov.shape[0]
    scale = np.trace(cov) / n if n else 0.0

    for delta in JITTER_LEVELS:
        jitter = delta * scale
        try:
            L = sla.cholesky(cov + jitter * np.eye(n), lower=True, check_finite=False)
        except sla.LinAlgError:
            continue
        if not np.all(np.isfinite(L)):
            continue
        if delta > 0:
            log.warning(f"Cholesky needed jitter {jitter:.3e} (relative {delta:g}) on a {n}x{n} matrix")
        return SymFactor(L=L, jitter=jitter)

    raise NotPositiveDefinite(
        f"Cholesky failed on a {n}x{n} matrix even with relative jitter {JITTER_LEVELS[-1]:g}"
    )


def sym_sqrt_factor(cov: np.ndarray) -> SymFactor:
    """Symmetric square root V Λ^{1/2} Vᵀ of an SPD matrix"""
    cov = check_symmetric(cov)
    values, vectors = sla.eigh(cov, check_finite=False)
    if values.size and values[0] <= 0:
        raise NotPositiveDefinite(f"smallest eigenvalue {values[0]:.3e} is not positive")
    root = (vectors * np.sqrt(values)) @ vectors.T
    return SymFactor(L=0.5 * (root + root.T), lower=False)


def fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Make the first non-negligible entry of each column positive"""
    vectors = np.array(vectors, dtype=float, copy=True)
    for j in range(vectors.shape[1]):
        col = vectors[:, j]
        cutoff = 1e-8 * np.max(np.abs(col)) if col.size else 0.0
        idx = np.flatnonzero(np.abs(col) > cutoff)
        if idx.size and col[idx[0]] < 0:
            vectors[:, j] = -col
    return vectors


def _truncate(values: np.ndarray, vectors: np.ndarray, threshold: float, max_rank: int) -> TruncatedEig:
    order = np.argsort(-values, kind='stable')
    values = np.clip(values[order], 0.0, None)
    vectors = vectors[:, order]
    keep = min(int(np.count_nonzero(values >= threshold)), max_rank)
    return TruncatedEig(values=values[:keep].copy(), vectors=fix_signs(vectors[:, :keep]))


def truncated_eig_dense(mat: np.ndarray, threshold: float, max_rank: int) -> TruncatedEig:
    """Eigenpairs of a symmetric PSD matrix with value ≥ threshold, at most max_rank, descending"""
    mat = check_symmetric(mat)
    values, vectors = sla.eigh(mat, check_finite=False)
    return _truncate(values, vectors, threshold, max_rank)


def check_linearity(apply: Callable[[np.ndarray], np.ndarray], n: int, rng: np.random.Generator,
                    tol: float = 1e-8):
    """Randomized check: A(a u + b v) against a A u + b A v"""
    u, v = rng.standard_normal(n), rng.standard_normal(n)
    a, b = rng.standard_normal(2)
    lhs = apply(a * u + b * v)
    rhs = a * apply(u) + b * apply(v)
    scale = max(np.linalg.norm(rhs), np.linalg.norm(lhs), np.finfo(float).tiny)
    err = np.linalg.norm(lhs - rhs) / scale
    if err > tol:
        raise ActionNotLinear(f"linearity check mismatch {err:.3e} > {tol:g}")


def _apply_block(apply: Callable[[np.ndarray], np.ndarray], block: np.ndarray) -> np.ndarray:
    return np.column_stack([apply(block[:, j]) for j in range(block.shape[1])])


def truncated_eig_matfree(
    apply: Callable[[np.ndarray], np.ndarray],
    n: int,
    threshold: float,
    max_rank: int,
    oversample: int = 10,
    rng_seed: int = 0,
    power_iters: int = 2,
    verify_linearity: bool = False,
) -> TruncatedEig:
    """Randomized subspace iteration on a symmetric PSD action

    Sketches a k = min(n, max_rank + oversample) dimensional range with `power_iters`
    re-orthonormalized power steps, then solves the small Rayleigh-Ritz problem.
    """
    rng = np.random.default_rng(rng_seed)
    if verify_linearity:
        check_linearity(apply, n, rng)

    k = min(n, max_rank + oversample)
    if k == 0:
        return TruncatedEig(values=np.zeros(0), vectors=np.zeros((n, 0)))

    Q, _ = np.linalg.qr(_apply_block(apply, rng.standard_normal((n, k))))
    for _ in range(power_iters):
        Q, _ = np.linalg.qr(_apply_block(apply, Q))

    AQ = _apply_block(apply, Q)
    small = Q.T @ AQ
    values, coeffs = sla.eigh(0.5 * (small + small.T), check_finite=False)
    return _truncate(values, Q @ coeffs, threshold, max_rank)


def mgs(basis: np.ndarray) -> np.ndarray:
    """Modified Gram-Schmidt re-orthonormalization of the columns of basis"""
    Q = np.array(basis, dtype=float, copy=True)
    for j in range(Q.shape[1]):
        for i in range(j):
            Q[:, j] -= (Q[:, i] @ Q[:, j]) * Q[:, i]
        norm = np.linalg.norm(Q[:, j])
        if norm > 0:
            Q[:, j] /= norm
    return Q


def complete_basis(basis: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the orthogonal complement of span(basis), via Householder QR"""
    n, r = basis.shape
    if r == 0:
        return np.eye(n)
    Q, _ = sla.qr(basis, mode='full', check_finite=False)
    return Q[:, r:]


def principal_angles(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Principal angles (radians) between the column spans of a and b"""
    if a.shape[1] == 0 or b.shape[1] == 0:
        return np.zeros(0)
    return sla.subspace_angles(a, b)
