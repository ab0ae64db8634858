#!/usr/bin/env python3
"""
Bayesian inverse problem abstraction

ForwardModel interface, Gaussian likelihood, misfit / log-posterior / gradient,
Gauss-Newton Hessian actions and the exact linear-Gaussian oracle.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, NamedTuple, Tuple

import numpy as np
import scipy.linalg as sla

from errors import DimensionMismatch, SingularSystem
from linalg import SymFactor, sym_factor
from logger import get_logger
from prior import GaussianPrior

log = get_logger(__name__)


class ForwardModel(ABC):
    """Parameter-to-observable map G with tangent and adjoint actions"""

    dim_param: int
    dim_obs: int

    @abstractmethod
    def apply(self, x: np.ndarray) -> np.ndarray:
        """G(x)"""

    @abstractmethod
    def jac_apply(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        """J(x) v"""

    @abstractmethod
    def jac_adjoint(self, x: np.ndarray, w: np.ndarray) -> np.ndarray:
        """J(x)ᵀ w"""

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        """Dense d×n Jacobian, from whichever of the two actions needs fewer calls"""
        if self.dim_obs <= self.dim_param:
            eye = np.eye(self.dim_obs)
            return np.column_stack([self.jac_adjoint(x, eye[:, i]) for i in range(self.dim_obs)]).T
        eye = np.eye(self.dim_param)
        return np.column_stack([self.jac_apply(x, eye[:, j]) for j in range(self.dim_param)])


# =============================================================================
# Problem
# =============================================================================

@dataclass(frozen=True)
class ForwardProblem:
    """Model, prior, noise covariance (1-D variances or full d×d) and observed data"""
    model: ForwardModel
    prior: GaussianPrior
    obs_cov: np.ndarray
    data: np.ndarray

    def __post_init__(self):
        d = self.model.dim_obs
        if self.model.dim_param != self.prior.dim:
            raise DimensionMismatch(
                f"model has {self.model.dim_param} parameters, prior has {self.prior.dim}"
            )
        if np.shape(self.data) != (d,):
            raise DimensionMismatch(f"data has shape {np.shape(self.data)}, expected ({d},)")
        if np.ndim(self.obs_cov) == 1:
            if len(self.obs_cov) != d:
                raise DimensionMismatch(f"{len(self.obs_cov)} noise variances for {d} observations")
            if np.any(np.asarray(self.obs_cov) <= 0):
                raise DimensionMismatch("noise variances must be positive")
        elif np.shape(self.obs_cov) != (d, d):
            raise DimensionMismatch(f"noise covariance has shape {np.shape(self.obs_cov)}")

    @property
    def dim(self) -> int:
        return self.prior.dim

    @property
    def diagonal_noise(self) -> bool:
        return np.ndim(self.obs_cov) == 1

    @cached_property
    def _obs_factor(self) -> SymFactor:
        log.debug(f"Factoring dense noise covariance of {len(self.data)} observations")
        return sym_factor(np.asarray(self.obs_cov, dtype=float))

    def obs_whiten(self, r: np.ndarray) -> np.ndarray:
        """Γ_obs^{-1/2} r, for a vector or column-wise for a d×k matrix"""
        if self.diagonal_noise:
            scale = 1.0 / np.sqrt(self.obs_cov)
            return r * scale if np.ndim(r) == 1 else r * scale[:, None]
        return self._obs_factor.solve(r)

    def obs_precision_apply(self, r: np.ndarray) -> np.ndarray:
        if self.diagonal_noise:
            return r / self.obs_cov
        return self._obs_factor.solve_t(self._obs_factor.solve(r))

    def obs_cov_matrix(self) -> np.ndarray:
        if self.diagonal_noise:
            return np.diag(self.obs_cov)
        return np.asarray(self.obs_cov, dtype=float)


def misfit(problem: ForwardProblem, x: np.ndarray) -> float:
    """½‖Γ_obs^{-1/2}(G(x) - y)‖²"""
    r = problem.obs_whiten(problem.model.apply(x) - problem.data)
    return 0.5 * float(r @ r)


def misfit_and_grad(problem: ForwardProblem, x: np.ndarray) -> Tuple[float, np.ndarray]:
    """Misfit and its gradient Jᵀ Γ_obs⁻¹ (G(x) - y)"""
    residual = problem.model.apply(x) - problem.data
    weighted = problem.obs_precision_apply(residual)
    return 0.5 * float(residual @ weighted), problem.model.jac_adjoint(x, weighted)


def log_likelihood(problem: ForwardProblem, x: np.ndarray) -> float:
    return -misfit(problem, x)


def log_posterior(problem: ForwardProblem, x: np.ndarray) -> float:
    """-misfit(x) - ½‖L⁻¹(x - μ_pr)‖², normalization constants dropped"""
    return -misfit(problem, x) + problem.prior.log_density(x)


def grad_log_posterior(problem: ForwardProblem, x: np.ndarray) -> np.ndarray:
    return log_posterior_and_grad(problem, x)[1]


def log_posterior_and_grad(problem: ForwardProblem, x: np.ndarray) -> Tuple[float, np.ndarray]:
    """Log posterior and its gradient from a single forward solve"""
    value, grad = misfit_and_grad(problem, x)
    w = problem.prior.whiten(x)
    return -value - 0.5 * float(w @ w), -grad - problem.prior.factor.solve_t(w)


def gn_hessian_apply(problem: ForwardProblem, x: np.ndarray, v: np.ndarray) -> np.ndarray:
    """J(x)ᵀ Γ_obs⁻¹ J(x) v"""
    jv = problem.model.jac_apply(x, v)
    return problem.model.jac_adjoint(x, problem.obs_precision_apply(jv))


def ppgnh_apply(problem: ForwardProblem, x: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Lᵀ H(x) L v"""
    factor = problem.prior.factor
    return factor.apply_t(gn_hessian_apply(problem, x, factor.apply(v)))


def ppgnh_operator(problem: ForwardProblem, x: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
    x = np.array(x, dtype=float, copy=True)
    return lambda v: ppgnh_apply(problem, x, v)


def gn_hessian_dense(problem: ForwardProblem, x: np.ndarray) -> np.ndarray:
    Jw = problem.obs_whiten(problem.model.jacobian(x))
    return Jw.T @ Jw


def ppgnh_dense(problem: ForwardProblem, x: np.ndarray) -> np.ndarray:
    L = problem.prior.factor.L
    return L.T @ gn_hessian_dense(problem, x) @ L


# =============================================================================
# Linear-Gaussian oracle
# =============================================================================

@dataclass(frozen=True)
class LinearGaussianSolution:
    mean: np.ndarray
    cov: np.ndarray


def _whitened_operator(G: np.ndarray, prior: GaussianPrior, obs_cov) -> Tuple[np.ndarray, Callable]:
    obs_cov = np.asarray(obs_cov, dtype=float)
    if obs_cov.ndim == 1:
        scale = 1.0 / np.sqrt(obs_cov)
        obs_whiten = lambda r: (r.T * scale).T
    else:
        obs_factor = sym_factor(obs_cov)
        obs_whiten = obs_factor.solve
    return obs_whiten(G @ prior.factor.L), obs_whiten


def linear_gaussian_posterior(G: np.ndarray, prior: GaussianPrior, obs_cov, y: np.ndarray) -> LinearGaussianSolution:
    """Exact posterior of y = G x + e, in whitened form Γ_pos = L (I + LᵀHL)⁻¹ Lᵀ"""
    G = np.atleast_2d(np.asarray(G, dtype=float))
    if G.shape[1] != prior.dim:
        raise DimensionMismatch(f"G has {G.shape[1]} columns, prior has dimension {prior.dim}")
    Gw, obs_whiten = _whitened_operator(G, prior, obs_cov)
    M = np.eye(prior.dim) + Gw.T @ Gw
    try:
        cho = sla.cho_factor(M, lower=True)
    except sla.LinAlgError as e:
        raise SingularSystem(f"posterior precision is not invertible: {e}") from e

    L = prior.factor.L
    rhs = Gw.T @ obs_whiten(np.asarray(y, dtype=float) - G @ prior.mean)
    mean = prior.mean + L @ sla.cho_solve(cho, rhs)
    cov = L @ sla.cho_solve(cho, L.T)
    return LinearGaussianSolution(mean=mean, cov=0.5 * (cov + cov.T))


class OptimalProjector(NamedTuple):
    """Leading eigen-directions of LᵀHL mapped to parameter space: U = L V, W = L⁻ᵀ V"""
    U: np.ndarray
    W: np.ndarray
    values: np.ndarray

    def projector(self) -> np.ndarray:
        return self.U @ self.W.T

    def approx_posterior_cov(self, prior: GaussianPrior) -> np.ndarray:
        """Γ_pr - U diag(λ/(1+λ)) Uᵀ"""
        shrink = self.values / (1.0 + self.values)
        return prior.cov - (self.U * shrink) @ self.U.T


def optimal_linear_projector(G: np.ndarray, prior: GaussianPrior, obs_cov, rank: int) -> OptimalProjector:
    G = np.atleast_2d(np.asarray(G, dtype=float))
    if not 0 <= rank <= prior.dim:
        raise DimensionMismatch(f"rank {rank} outside [0, {prior.dim}]")
    Gw, _ = _whitened_operator(G, prior, obs_cov)
    try:
        values, vectors = sla.eigh(Gw.T @ Gw)
    except sla.LinAlgError as e:
        raise SingularSystem(f"eigensolve of the whitened Hessian failed: {e}") from e
    order = np.argsort(-values, kind='stable')[:rank]
    V = vectors[:, order]
    values = np.clip(values[order], 0.0, None)
    return OptimalProjector(U=prior.factor.apply(V), W=prior.factor.solve_t(V), values=values)


# =============================================================================
# Verification utilities
# =============================================================================

def forstner_distance(A: np.ndarray, B: np.ndarray) -> float:
    """sqrt(Σ ln² σ_i) over the generalized eigenvalues of the pencil (A, B)"""
    sigma = sla.eigh(A, B, eigvals_only=True)
    if np.any(sigma <= 0):
        raise SingularSystem("matrix pencil has non-positive generalized eigenvalues")
    return float(np.sqrt(np.sum(np.log(sigma) ** 2)))


def rayleigh_quotient(u: np.ndarray, hessian: np.ndarray, prior: GaussianPrior) -> float:
    """⟨u, H u⟩ / ⟨u, Γ_pr⁻¹ u⟩"""
    return float(u @ hessian @ u) / float(u @ prior.precision_apply(u))


def check_adjoint(model: ForwardModel, x: np.ndarray, seed: int = 0, trials: int = 20) -> float:
    """Largest relative mismatch |⟨Jv,w⟩ - ⟨v,Jᵀw⟩| / (‖Jv‖‖w‖) over random pairs"""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        v = rng.standard_normal(model.dim_param)
        w = rng.standard_normal(model.dim_obs)
        jv = model.jac_apply(x, v)
        lhs, rhs = float(jv @ w), float(v @ model.jac_adjoint(x, w))
        scale = np.linalg.norm(jv) * np.linalg.norm(w)
        if scale > 0:
            worst = max(worst, abs(lhs - rhs) / scale)
        else:
            worst = max(worst, abs(rhs))
    return worst


def check_jacobian(model: ForwardModel, x: np.ndarray, seed: int = 0, trials: int = 5,
                   step: float = 1e-5) -> float:
    """Largest relative error of J v against central differences of G"""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        v = rng.standard_normal(model.dim_param)
        fd = (model.apply(x + step * v) - model.apply(x - step * v)) / (2 * step)
        jv = model.jac_apply(x, v)
        scale = max(np.linalg.norm(jv), np.finfo(float).tiny)
        worst = max(worst, np.linalg.norm(fd - jv) / scale)
    return worst


def check_gradient(target: Callable[[np.ndarray], Tuple[float, np.ndarray]], x: np.ndarray,
                   seed: int = 0, trials: int = 10, step: float = 1e-5) -> float:
    """Largest relative error of ⟨∇f, d⟩ against central differences of f in random directions"""
    rng = np.random.default_rng(seed)
    _, grad = target(x)
    worst = 0.0
    for _ in range(trials):
        d = rng.standard_normal(len(x))
        fd = (target(x + step * d)[0] - target(x - step * d)[0]) / (2 * step)
        exact = float(grad @ d)
        scale = max(abs(exact), abs(fd), np.finfo(float).tiny)
        worst = max(worst, abs(fd - exact) / scale)
    return worst
