#!/usr/bin/env python3
"""
Gaussian priors on spatial grids

Covariance kernels, prior assembly (single and block-diagonal), whitening, sampling,
and the split of the prior onto LIS / complement coordinates.
"""

from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple, TYPE_CHECKING

import numpy as np
import scipy.linalg as sla
from scipy.spatial.distance import cdist

from errors import DegenerateTensor, DimensionMismatch
from linalg import SymFactor, sym_factor, sym_sqrt_factor
from logger import get_logger

if TYPE_CHECKING:
    from lis import GlobalLis

log = get_logger(__name__)


# =============================================================================
# Kernels
# =============================================================================

def _check_tensor(tensor) -> np.ndarray:
    tensor = np.asarray(tensor, dtype=float)
    if tensor.shape != (2, 2) or not np.allclose(tensor, tensor.T):
        raise DegenerateTensor(f"correlation tensor must be a symmetric 2x2 matrix, got {tensor.tolist()}")
    if np.any(np.linalg.eigvalsh(tensor) <= 0):
        raise DegenerateTensor(f"correlation tensor is not positive definite: {tensor.tolist()}")
    return tensor


def kernel_aniso_exp(s, t, sigma: float, corr_len: float, tensor) -> float:
    """σ² exp(-sqrt((s-t)ᵀ Σ⁻¹ (s-t)) / s₀)"""
    tensor = _check_tensor(tensor)
    d = np.asarray(s, dtype=float) - np.asarray(t, dtype=float)
    dist = np.sqrt(max(d @ np.linalg.solve(tensor, d), 0.0))
    return float(sigma ** 2 * np.exp(-dist / corr_len))


def kernel_sq_exp(s: float, t: float, sigma: float, corr_len: float) -> float:
    """σ exp(-(s-t)² / (2 s₀²)); the prefactor is σ, not σ²"""
    return float(sigma * np.exp(-(s - t) ** 2 / (2.0 * corr_len ** 2)))


@dataclass(frozen=True)
class AnisoExpKernel:
    """Anisotropic exponential kernel on 2-D points"""
    sigma: float
    corr_len: float
    tensor: Tuple[Tuple[float, float], Tuple[float, float]] = ((1.0, 0.0), (0.0, 1.0))

    def __post_init__(self):
        _check_tensor(self.tensor)

    def __call__(self, s, t) -> float:
        return kernel_aniso_exp(s, t, self.sigma, self.corr_len, self.tensor)

    def matrix(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        inv = np.linalg.inv(np.asarray(self.tensor, dtype=float))
        dist = cdist(points, points, 'mahalanobis', VI=inv)
        return self.sigma ** 2 * np.exp(-dist / self.corr_len)


@dataclass(frozen=True)
class SqExpKernel:
    """Squared-exponential kernel on 1-D coordinates (altitudes)"""
    sigma: float
    corr_len: float

    def __call__(self, s, t) -> float:
        return kernel_sq_exp(float(s), float(t), self.sigma, self.corr_len)

    def matrix(self, points: np.ndarray) -> np.ndarray:
        z = np.asarray(points, dtype=float).reshape(-1, 1)
        sq = cdist(z, z, 'sqeuclidean')
        return self.sigma * np.exp(-sq / (2.0 * self.corr_len ** 2))


# =============================================================================
# Prior
# =============================================================================

@dataclass(frozen=True)
class GaussianPrior:
    mean: np.ndarray
    cov: np.ndarray
    factor: SymFactor

    @property
    def dim(self) -> int:
        return len(self.mean)

    def whiten(self, x: np.ndarray) -> np.ndarray:
        """L⁻¹(x - μ)"""
        return self.factor.solve(np.asarray(x, dtype=float) - self.mean)

    def unwhiten(self, v: np.ndarray) -> np.ndarray:
        """μ + L v"""
        return self.mean + self.factor.apply(v)

    def log_density(self, x: np.ndarray) -> float:
        """Unnormalized log density, -½‖L⁻¹(x-μ)‖²"""
        w = self.whiten(x)
        return -0.5 * float(w @ w)

    def precision_apply(self, v: np.ndarray) -> np.ndarray:
        """Γ⁻¹ v = L⁻ᵀ L⁻¹ v"""
        return self.factor.solve_t(self.factor.solve(v))

    def grad(self, x: np.ndarray) -> np.ndarray:
        return -self.precision_apply(np.asarray(x, dtype=float) - self.mean)

    def marginal_std(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov))


def make_prior(mean: np.ndarray, cov: np.ndarray, symmetric_root: bool = False) -> GaussianPrior:
    """Prior with a Cholesky factor, or the symmetric square root when `symmetric_root`"""
    mean = np.asarray(mean, dtype=float).ravel()
    cov = np.asarray(cov, dtype=float)
    if cov.shape != (len(mean), len(mean)):
        raise DimensionMismatch(f"mean has length {len(mean)} but covariance is {cov.shape}")
    factor = sym_sqrt_factor(cov) if symmetric_root else sym_factor(cov)
    log.debug(f"Prior of dimension {len(mean)} factored (jitter {factor.jitter:.1e})")
    return GaussianPrior(mean=mean, cov=0.5 * (cov + cov.T), factor=factor)


def build_prior(grid: Sequence, kernel: Callable, mean) -> GaussianPrior:
    """Assemble cov[i][j] = kernel(grid[i], grid[j]) and factor it"""
    points = np.asarray(grid, dtype=float)
    if len(points) == 0:
        raise DimensionMismatch("prior grid is empty")
    if hasattr(kernel, 'matrix'):
        cov = kernel.matrix(points)
    else:
        n = len(points)
        cov = np.empty((n, n))
        for i in range(n):
            for j in range(i, n):
                cov[i, j] = cov[j, i] = kernel(points[i], points[j])
    mean = np.broadcast_to(np.asarray(mean, dtype=float), (len(points),))
    return make_prior(mean, cov)


def build_block_prior(blocks: Sequence[Tuple[Sequence, Callable, object]]) -> GaussianPrior:
    """Block-diagonal prior from independent (grid, kernel, mean) blocks"""
    covs, means = [], []
    for grid, kernel, mean in blocks:
        part = build_prior(grid, kernel, mean)
        covs.append(part.cov)
        means.append(part.mean)
    return make_prior(np.concatenate(means), sla.block_diag(*covs))


def sample(prior: GaussianPrior, rng_seed: int, count: int, xi: Optional[np.ndarray] = None) -> np.ndarray:
    """n×count matrix of prior draws μ + L ξ; pass xi to inject the standard-normal draws"""
    if xi is None:
        rng = np.random.default_rng(rng_seed)
        xi = rng.standard_normal((prior.dim, count))
    xi = np.asarray(xi, dtype=float).reshape(prior.dim, count)
    return prior.mean[:, None] + prior.factor.apply(xi)


def prior_spectrum(prior: GaussianPrior, energy: float = 0.99) -> Tuple[np.ndarray, int]:
    """Descending covariance eigenvalues and the mode count holding `energy` of the trace"""
    values = np.clip(sla.eigvalsh(prior.cov, check_finite=False)[::-1], 0.0, None)
    total = values.sum()
    if total == 0:
        return values, 0
    modes = int(np.searchsorted(np.cumsum(values) / total, energy) + 1)
    return values, min(modes, len(values))


# =============================================================================
# Factorization onto LIS / complement coordinates
# =============================================================================

@dataclass(frozen=True)
class FactoredPrior:
    """π_r = N(lis_mean, I_r) and π_⊥ = N(cs_mean, I_{n-r})"""
    lis_mean: np.ndarray
    cs_mean: np.ndarray

    def sample(self, rng: np.random.Generator, count: int) -> Tuple[np.ndarray, np.ndarray]:
        x_r = self.lis_mean[:, None] + rng.standard_normal((len(self.lis_mean), count))
        x_perp = self.cs_mean[:, None] + rng.standard_normal((len(self.cs_mean), count))
        return x_r, x_perp


def factor_prior(prior: GaussianPrior, lis: 'GlobalLis') -> FactoredPrior:
    if lis.dim != prior.dim:
        raise DimensionMismatch(f"LIS dimension {lis.dim} does not match prior dimension {prior.dim}")
    white_mean = prior.factor.solve(prior.mean)
    return FactoredPrior(
        lis_mean=lis.psi.T @ white_mean,
        cs_mean=lis.complement.T @ white_mean,
    )
