#!/usr/bin/env python3
"""
Posterior estimators

Rao-Blackwellized estimates over the approximate posterior (a chain on the LIS
coordinates times the analytic complement prior) and plain Monte Carlo averages over
full-space chains for comparison.
"""

from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np

from errors import DimensionMismatch, EmptyChain, NonDecomposable
from lis import GlobalLis
from logger import get_logger
from mcmc import Chain
from prior import GaussianPrior, factor_prior

log = get_logger(__name__)

FULL_COV_LIMIT = 2000
MODES = ('product', 'sum')


@dataclass(frozen=True)
class RbMoments:
    mean: np.ndarray
    variance: np.ndarray
    lis_variance: np.ndarray
    cs_variance: np.ndarray
    cov: Optional[np.ndarray] = None


def _states(chain: Union[Chain, np.ndarray]) -> np.ndarray:
    states = chain.states if isinstance(chain, Chain) else np.asarray(chain, dtype=float)
    if states.ndim == 1:
        states = states[:, None]
    if states.shape[0] == 0:
        raise EmptyChain("estimate requested from a chain with no states")
    return states


def _check_lis(lis: GlobalLis, prior: GaussianPrior):
    if lis.dim != prior.dim:
        raise DimensionMismatch(f"LIS dimension {lis.dim} does not match prior dimension {prior.dim}")


# =============================================================================
# Rao-Blackwellized moments
# =============================================================================

def rb_mean(lis: GlobalLis, prior: GaussianPrior, mu_r: np.ndarray) -> np.ndarray:
    """Φ_r μ̃_r + (I - Π_r) μ_pr"""
    _check_lis(lis, prior)
    mu_r = np.asarray(mu_r, dtype=float).reshape(-1)
    if len(mu_r) != lis.rank:
        raise DimensionMismatch(f"reduced mean of length {len(mu_r)} for LIS rank {lis.rank}")
    return lis.phi @ mu_r + lis.complement_apply(prior.mean)


def rb_cov(lis: GlobalLis, prior: GaussianPrior, cov_r: np.ndarray,
           full_cov_limit: int = FULL_COV_LIMIT) -> RbMoments:
    """Γ_pr + Φ_r (Γ̃_r - I) Φ_rᵀ

    Marginal variances are accumulated column-pair-wise; the n×n matrix is only formed
    when n ≤ full_cov_limit. The mean field of the result is left at zero; use rb_moments
    for both.
    """
    _check_lis(lis, prior)
    r = lis.rank
    cov_r = np.asarray(cov_r, dtype=float).reshape(r, r) if r else np.zeros((0, 0))
    if cov_r.shape != (r, r):
        raise DimensionMismatch(f"reduced covariance of shape {cov_r.shape} for LIS rank {r}")

    phi = lis.phi
    lis_variance = np.einsum('ij,jk,ik->i', phi, cov_r, phi)
    cs_variance = np.clip(np.diag(prior.cov) - np.einsum('ij,ij->i', phi, phi), 0.0, None)
    variance = np.clip(np.diag(prior.cov) + np.einsum('ij,jk,ik->i', phi, cov_r - np.eye(r), phi), 0.0, None)

    cov = None
    if prior.dim <= full_cov_limit:
        cov = prior.cov + phi @ (cov_r - np.eye(r)) @ phi.T
        cov = 0.5 * (cov + cov.T)
    else:
        log.info(f"dimension {prior.dim} above {full_cov_limit}; returning marginal variances only")
    return RbMoments(mean=np.zeros(prior.dim), variance=variance, lis_variance=lis_variance,
                     cs_variance=cs_variance, cov=cov)


def reduced_moments(chain: Union[Chain, np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
    """Sample mean and covariance of a reduced chain"""
    states = _states(chain)
    r = states.shape[1]
    mean = states.mean(axis=0)
    if states.shape[0] < 2:
        return mean, np.zeros((r, r))
    return mean, np.atleast_2d(np.cov(states, rowvar=False))


def rb_moments(lis: GlobalLis, prior: GaussianPrior, chain: Union[Chain, np.ndarray],
               full_cov_limit: int = FULL_COV_LIMIT) -> RbMoments:
    if lis.rank == 0:
        mu_r, cov_r = np.zeros(0), np.zeros((0, 0))
    else:
        mu_r, cov_r = reduced_moments(chain)
    moments = rb_cov(lis, prior, cov_r, full_cov_limit)
    return RbMoments(mean=rb_mean(lis, prior, mu_r), variance=moments.variance,
                     lis_variance=moments.lis_variance, cs_variance=moments.cs_variance, cov=moments.cov)


# =============================================================================
# Complement-subspace descriptors
#
# Each describes h_⊥ as a function of the complement coordinates x_⊥ = Ξ_⊥ᵀ x, which are
# N(Ξ_⊥ᵀ μ_pr, I) under the approximate posterior.
# =============================================================================

@dataclass(frozen=True)
class ConstantCs:
    value: float = 1.0

    def expectation(self, cs_mean: np.ndarray) -> float:
        return float(self.value)


@dataclass(frozen=True)
class LinearCs:
    """h_⊥(x_⊥) = ⟨c, x_⊥⟩ + offset"""
    coeffs: np.ndarray
    offset: float = 0.0

    def expectation(self, cs_mean: np.ndarray) -> float:
        coeffs = np.asarray(self.coeffs, dtype=float)
        if coeffs.shape != cs_mean.shape:
            raise DimensionMismatch(f"{len(coeffs)} coefficients for {len(cs_mean)} complement coordinates")
        return float(coeffs @ cs_mean) + self.offset


@dataclass(frozen=True)
class QuadraticCs:
    """h_⊥(x_⊥) = x_⊥ᵀ A x_⊥ + ⟨b, x_⊥⟩ + c, with A = I when not given"""
    matrix: Optional[np.ndarray] = None
    linear: Optional[np.ndarray] = None
    constant: float = 0.0

    def expectation(self, cs_mean: np.ndarray) -> float:
        k = len(cs_mean)
        if self.matrix is None:
            value = k + float(cs_mean @ cs_mean)
        else:
            A = np.asarray(self.matrix, dtype=float)
            if A.shape != (k, k):
                raise DimensionMismatch(f"quadratic form of shape {A.shape} for {k} complement coordinates")
            value = float(np.trace(A) + cs_mean @ A @ cs_mean)
        if self.linear is not None:
            value += LinearCs(self.linear).expectation(cs_mean)
        return value + self.constant


@dataclass(frozen=True)
class SeparableCs:
    """h_⊥(x_⊥) = Π_i f_i(x_⊥,i), integrated per coordinate by Gauss-Hermite quadrature

    `factors` is one callable for all coordinates or a sequence with one per coordinate.
    """
    factors: Union[Callable[[np.ndarray], np.ndarray], Sequence[Callable[[np.ndarray], np.ndarray]]]
    order: int = 20

    def expectation(self, cs_mean: np.ndarray) -> float:
        nodes, weights = np.polynomial.hermite_e.hermegauss(self.order)
        weights = weights / np.sqrt(2.0 * np.pi)
        factors = self.factors if isinstance(self.factors, (list, tuple)) else [self.factors] * len(cs_mean)
        if len(factors) != len(cs_mean):
            raise DimensionMismatch(f"{len(factors)} factors for {len(cs_mean)} complement coordinates")
        value = 1.0
        for f, m in zip(factors, cs_mean):
            value *= float(weights @ np.asarray(f(m + nodes), dtype=float))
        return value


CS_DESCRIPTORS = (ConstantCs, LinearCs, QuadraticCs, SeparableCs)


def rb_expectation(lis: GlobalLis, prior: GaussianPrior, h_r: Callable[[np.ndarray], float],
                   chain: Union[Chain, np.ndarray], h_perp, mode: str = 'product') -> float:
    """(1/N) Σ_k E[h | x_r^(k)] for h = h_r·h_⊥ (product) or h = h_r + h_⊥ (sum)"""
    if not isinstance(h_perp, CS_DESCRIPTORS):
        raise NonDecomposable(f"no analytic complement moments for {type(h_perp).__name__}")
    if mode not in MODES:
        raise NonDecomposable(f"unknown decomposition mode '{mode}' (expected one of {', '.join(MODES)})")
    _check_lis(lis, prior)

    # With an empty LIS, h_r is constant over the (zero-dimensional) chain
    states = _states(chain) if lis.rank else np.zeros((1, 0))
    if states.shape[1] != lis.rank:
        raise DimensionMismatch(f"chain of dimension {states.shape[1]} for LIS rank {lis.rank}")
    lis_part = float(np.mean([h_r(x) for x in states]))
    cs_part = h_perp.expectation(factor_prior(prior, lis).cs_mean)
    return lis_part * cs_part if mode == 'product' else lis_part + cs_part


def decompose_linear(lis: GlobalLis, coeffs: np.ndarray) -> Tuple[Callable[[np.ndarray], float], LinearCs]:
    """Split ⟨c, x⟩ into ⟨Φ_rᵀc, x_r⟩ + ⟨Φ_⊥ᵀc, x_⊥⟩ for use in 'sum' mode"""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (lis.dim,):
        raise DimensionMismatch(f"{len(coeffs)} coefficients for dimension {lis.dim}")
    lis_coeffs = lis.phi.T @ coeffs
    return (lambda x_r: float(lis_coeffs @ x_r)), LinearCs(lis.complement_phi.T @ coeffs)


# =============================================================================
# Standard Monte Carlo
# =============================================================================

def standard_mc(chain: Union[Chain, np.ndarray], h: Callable[[np.ndarray], float]) -> float:
    """(1/N) Σ_k h(x^(k))"""
    states = _states(chain)
    return float(np.mean([h(x) for x in states]))


def standard_moments(chain: Union[Chain, np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
    """Sample mean and marginal variance of a full-space chain"""
    states = _states(chain)
    ddof = 1 if states.shape[0] > 1 else 0
    return states.mean(axis=0), states.var(axis=0, ddof=ddof)
