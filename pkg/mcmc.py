#!/usr/bin/env python3
"""
Samplers, posterior mode, and chain diagnostics

- run_mala: (preconditioned, adaptive) Metropolis-adjusted Langevin algorithm
- map_point: Gauss-Newton with Armijo backtracking in whitened coordinates
- autocorrelation / ess / integrated_autocorr_time: chain diagnostics
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg as sla

from common import Stopwatch
from errors import (
    ConfigError, LisInferError, NotPositiveDefinite, SeriesTooShort, TargetEvaluationFailed,
)
from linalg import SymFactor
from logger import ProgressReporter, get_logger
from model import ForwardProblem, log_posterior_and_grad, misfit_and_grad, ppgnh_dense

log = get_logger(__name__)


# A target returns (log density, gradient) or (log density, gradient, log likelihood)
Target = Callable[[np.ndarray], Tuple]

PRECONDITIONERS = ('identity', 'fixed', 'empirical')


# =============================================================================
# Chain
# =============================================================================

@dataclass
class Chain:
    states: np.ndarray
    log_post: np.ndarray
    log_like: np.ndarray
    accepted: np.ndarray
    step_sizes: np.ndarray
    wall_times: np.ndarray
    failed: bool = False
    message: str = ''
    seed: Optional[int] = None

    @classmethod
    def empty(cls, dim: int, seed: Optional[int] = None) -> 'Chain':
        z = np.zeros(0)
        return cls(np.zeros((0, dim)), z, z.copy(), np.zeros(0, dtype=bool), z.copy(), z.copy(), seed=seed)

    @property
    def steps(self) -> int:
        return self.states.shape[0]

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    @property
    def acceptance_rate(self) -> float:
        return float(np.mean(self.accepted)) if self.steps else 0.0

    def seconds_per_step(self) -> float:
        if self.steps == 0 or self.wall_times[-1] <= 0:
            return 0.0
        return float(self.wall_times[-1] / self.steps)

    def discard(self, fraction: float = 0.5) -> 'Chain':
        """Drop the leading `fraction` of the chain as burn-in"""
        start = int(np.floor(self.steps * fraction))
        return replace(
            self,
            states=self.states[start:], log_post=self.log_post[start:], log_like=self.log_like[start:],
            accepted=self.accepted[start:], step_sizes=self.step_sizes[start:],
            wall_times=self.wall_times[start:],
        )


@dataclass
class MalaConfig:
    step_size: Optional[float] = None
    adapt: bool = True
    target_accept: float = 0.574
    adapt_decay: float = 0.6
    preconditioner: str = 'identity'
    fixed_precond: Optional[Union[np.ndarray, 'Preconditioner']] = None
    reg: float = 1e-8
    precond_every: int = 100
    timing: bool = True

    def __post_init__(self):
        if not 0.0 < self.target_accept < 1.0:
            raise ConfigError(f"target_accept must lie in (0, 1), got {self.target_accept}")
        if self.preconditioner not in PRECONDITIONERS:
            raise ConfigError(f"unknown preconditioner '{self.preconditioner}', expected one of {PRECONDITIONERS}")
        if self.preconditioner == 'fixed' and self.fixed_precond is None:
            raise ConfigError("a fixed preconditioner needs fixed_precond")
        if self.step_size is not None and self.step_size <= 0:
            raise ConfigError(f"step_size must be positive, got {self.step_size}")


# =============================================================================
# Preconditioner
# =============================================================================

@dataclass(frozen=True)
class Preconditioner:
    """Proposal covariance M = S Sᵀ, stored as S and S⁻¹"""
    sqrt: np.ndarray
    inv_sqrt: np.ndarray

    @classmethod
    def identity(cls, dim: int) -> 'Preconditioner':
        return cls(np.eye(dim), np.eye(dim))

    @classmethod
    def from_covariance(cls, cov: np.ndarray, reg: float = 1e-8) -> 'Preconditioner':
        """Cholesky of cov + reg·trace/dim·I"""
        cov = 0.5 * (np.asarray(cov, dtype=float) + np.asarray(cov, dtype=float).T)
        dim = cov.shape[0]
        cov = cov + reg * np.trace(cov) / max(dim, 1) * np.eye(dim)
        try:
            S = sla.cholesky(cov, lower=True)
        except sla.LinAlgError as e:
            raise NotPositiveDefinite(f"preconditioner covariance is not positive definite: {e}") from e
        return cls(S, sla.solve_triangular(S, np.eye(dim), lower=True))

    @classmethod
    def from_whitened_hessian(cls, prior_factor: SymFactor, hessian: np.ndarray) -> 'Preconditioner':
        """Inverse of L⁻ᵀ(I + H̃)L⁻¹: with I + H̃ = R Rᵀ, S = L R⁻ᵀ and S⁻¹ = Rᵀ L⁻¹"""
        dim = hessian.shape[0]
        try:
            R = sla.cholesky(np.eye(dim) + 0.5 * (hessian + hessian.T), lower=True)
        except sla.LinAlgError as e:
            raise NotPositiveDefinite(f"posterior Hessian is not positive definite: {e}") from e
        S = prior_factor.L @ sla.solve_triangular(R, np.eye(dim), lower=True, trans='T')
        L_inv = prior_factor.solve(np.eye(dim))
        return cls(S, R.T @ L_inv)

    def apply_cov(self, v: np.ndarray) -> np.ndarray:
        return self.sqrt @ (self.sqrt.T @ v)


def map_preconditioner(problem: ForwardProblem, x_map: np.ndarray) -> Preconditioner:
    """Inverse Gauss-Newton log-posterior Hessian at the posterior mode"""
    return Preconditioner.from_whitened_hessian(problem.prior.factor, ppgnh_dense(problem, x_map))


class _Welford:
    """Running mean and covariance"""

    def __init__(self, dim: int):
        self.count = 0
        self.mean = np.zeros(dim)
        self._m2 = np.zeros((dim, dim))

    def update(self, x: np.ndarray):
        self.count += 1
        delta = x - self.mean
        self.mean += delta / self.count
        self._m2 += np.outer(delta, x - self.mean)

    def cov(self) -> np.ndarray:
        return self._m2 / max(self.count - 1, 1)


# =============================================================================
# MALA
# =============================================================================

def _evaluate(target: Target, x: np.ndarray) -> Tuple[float, np.ndarray, float]:
    out = target(x)
    logp, grad = float(out[0]), np.asarray(out[1], dtype=float)
    loglike = float(out[2]) if len(out) > 2 else np.nan
    return logp, grad, loglike


def run_mala(
    target: Target,
    dim: int,
    config: MalaConfig,
    init: np.ndarray,
    steps: int,
    seed: int,
    label: str = 'mala',
    report_every: int = 1000,
) -> Chain:
    """Metropolis-adjusted Langevin chain

    Proposal y = x + (h/2) M ∇log π(x) + sqrt(h) S ξ with M = S Sᵀ. With adaptation on,
    log h follows a Robbins-Monro recursion toward target_accept with gain k^(-adapt_decay);
    the 'empirical' preconditioner is refreshed from the running chain covariance.
    Target failures end the chain early with failed=True instead of raising.
    """
    if steps <= 0:
        return Chain.empty(dim, seed)

    rng = np.random.default_rng(seed)
    clock = Stopwatch(config.timing)
    h = config.step_size if config.step_size is not None else (1.0 / max(dim, 1)) ** (1.0 / 3.0)
    if config.preconditioner == 'fixed':
        precond = config.fixed_precond
        if not isinstance(precond, Preconditioner):
            precond = Preconditioner.from_covariance(precond, config.reg)
    else:
        precond = Preconditioner.identity(dim)
    welford = _Welford(dim) if config.preconditioner == 'empirical' else None

    states = np.empty((steps, dim))
    log_post = np.empty(steps)
    log_like = np.empty(steps)
    accepted = np.zeros(steps, dtype=bool)
    step_sizes = np.empty(steps)
    wall_times = np.empty(steps)

    x = np.array(init, dtype=float, copy=True)
    try:
        logp, grad, loglike = _evaluate(target, x)
        if not np.isfinite(logp) or not np.all(np.isfinite(grad)):
            raise TargetEvaluationFailed("target is not finite at the initial state")
    except LisInferError as e:
        log.warning(f"{label}: {e}")
        chain = Chain.empty(dim, seed)
        chain.failed, chain.message = True, f"initial state: {e}"
        return chain

    def log_q(to, frm, grad_frm, h_cur):
        mean = frm + 0.5 * h_cur * precond.apply_cov(grad_frm)
        z = precond.inv_sqrt @ (to - mean)
        return -0.5 * float(z @ z) / h_cur

    progress = ProgressReporter(log, label, steps, every=report_every)
    done = steps
    failure = ''
    for k in range(steps):
        y = x + 0.5 * h * precond.apply_cov(grad) + np.sqrt(h) * (precond.sqrt @ rng.standard_normal(dim))
        try:
            logp_y, grad_y, loglike_y = _evaluate(target, y)
        except LisInferError as e:
            done, failure = k, f"target evaluation failed at step {k}: {e}"
            log.warning(failure)
            break

        alpha = 0.0
        if np.isfinite(logp_y) and np.all(np.isfinite(grad_y)):
            log_alpha = logp_y - logp + log_q(x, y, grad_y, h) - log_q(y, x, grad, h)
            alpha = 1.0 if log_alpha >= 0 else float(np.exp(log_alpha))
            if rng.uniform() < alpha:
                x, logp, grad, loglike = y, logp_y, grad_y, loglike_y
                accepted[k] = True

        states[k] = x
        log_post[k] = logp
        log_like[k] = loglike
        step_sizes[k] = h
        wall_times[k] = clock.elapsed()

        if config.adapt:
            gain = (k + 1) ** (-config.adapt_decay)
            h = float(np.exp(np.log(h) + gain * (alpha - config.target_accept)))
            if welford is not None:
                welford.update(x)
                if (k + 1) % config.precond_every == 0 and welford.count > dim + 1:
                    try:
                        precond = Preconditioner.from_covariance(welford.cov(), config.reg)
                    except NotPositiveDefinite:
                        log.debug(f"{label}: empirical covariance not usable at step {k + 1}")
        progress.update(k + 1, f"accept {np.mean(accepted[:k + 1]):.3f} h {h:.3g}")

    return Chain(
        states=states[:done], log_post=log_post[:done], log_like=log_like[:done],
        accepted=accepted[:done], step_sizes=step_sizes[:done], wall_times=wall_times[:done],
        failed=bool(failure), message=failure, seed=seed,
    )


def run_chains(
    target: Target,
    dim: int,
    config: MalaConfig,
    inits: Sequence[np.ndarray],
    steps: int,
    seeds: Sequence[int],
    max_workers: int = 1,
) -> List[Chain]:
    """Independent chains with distinct seeds, run concurrently; results keep input order"""
    with ThreadPoolExecutor(max_workers=max(1, max_workers)) as executor:
        futures = [
            executor.submit(run_mala, target, dim, config, init, steps, seed, f"chain {i}")
            for i, (init, seed) in enumerate(zip(inits, seeds))
        ]
        return [f.result() for f in futures]


def posterior_target(problem: ForwardProblem) -> Target:
    """Full-space target returning (log posterior, gradient, log likelihood)"""
    def target(x):
        value, grad = misfit_and_grad(problem, x)
        w = problem.prior.whiten(x)
        return -value - 0.5 * float(w @ w), -grad - problem.prior.factor.solve_t(w), -value
    return target


# =============================================================================
# Posterior mode
# =============================================================================

@dataclass
class MapResult:
    x: np.ndarray
    log_post: float
    grad_norm: float
    iterations: int
    converged: bool


def map_point(problem: ForwardProblem, init: Optional[np.ndarray] = None, tol: float = 1e-6,
              max_iters: int = 50) -> MapResult:
    """Gauss-Newton with Armijo backtracking on the negative log posterior

    Works in whitened coordinates v = L⁻¹(x - μ_pr), where the Gauss-Newton matrix is
    I + LᵀJᵀΓ_obs⁻¹JL. Stops when ‖∇log π(x)‖ ≤ tol·(1 + ‖∇log π(init)‖).
    """
    prior = problem.prior
    L = prior.factor.L
    x = np.array(prior.mean if init is None else init, dtype=float, copy=True)

    value, grad = log_posterior_and_grad(problem, x)
    stop = tol * (1.0 + np.linalg.norm(grad))
    it = 0
    for it in range(1, max_iters + 1):
        if np.linalg.norm(grad) <= stop:
            return MapResult(x, value, float(np.linalg.norm(grad)), it - 1, True)

        Jw = problem.obs_whiten(problem.model.jacobian(x) @ L)
        gn = np.eye(prior.dim) + Jw.T @ Jw
        g_white = -L.T @ grad
        try:
            step = -sla.cho_solve(sla.cho_factor(gn, lower=True), g_white)
        except sla.LinAlgError:
            step = -g_white
        slope = float(g_white @ step)

        alpha = 1.0
        for _ in range(30):
            x_try = x + alpha * (L @ step)
            try:
                value_try, grad_try = log_posterior_and_grad(problem, x_try)
            except LisInferError:
                value_try = -np.inf
            if np.isfinite(value_try) and -value_try <= -value + 1e-4 * alpha * slope:
                break
            alpha *= 0.5
        else:
            log.debug(f"MAP line search stalled at iteration {it}")
            break

        x, value, grad = x_try, value_try, grad_try
        log.debug(f"MAP iteration {it}: log posterior {value:.6g}, |grad| {np.linalg.norm(grad):.3e}")

    grad_norm = float(np.linalg.norm(grad))
    return MapResult(x, value, grad_norm, it, grad_norm <= stop)


# =============================================================================
# Diagnostics
# =============================================================================

def autocorrelation(series: np.ndarray, max_lag: int) -> np.ndarray:
    """Normalized autocorrelation ρ(0..max_lag) by direct sums; a constant series gives ρ ≡ 1"""
    x = np.asarray(series, dtype=float)
    n = len(x)
    if n <= max_lag or n < 2:
        raise SeriesTooShort(f"series of length {n} is too short for lag {max_lag}")
    centred = x - x.mean()
    denom = float(centred @ centred)
    if denom <= 0:
        return np.ones(max_lag + 1)
    return np.array([float(centred[:n - k] @ centred[k:]) / denom for k in range(max_lag + 1)])


def _fft_autocorrelation(x: np.ndarray) -> np.ndarray:
    n = len(x)
    centred = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    spectrum = np.fft.rfft(centred, size)
    acov = np.fft.irfft(spectrum * np.conj(spectrum), size)[:n]
    return acov / acov[0]


def ess(series: np.ndarray) -> float:
    """Effective sample size by Geyer's initial positive sequence; a constant series gives 1"""
    x = np.asarray(series, dtype=float)
    n = len(x)
    if n < 4:
        raise SeriesTooShort(f"series of length {n} is too short for an ESS estimate")
    if np.ptp(x) == 0:
        return 1.0
    rho = _fft_autocorrelation(x)
    tau = -1.0
    prev = np.inf
    for k in range(0, n - 1, 2):
        pair = rho[k] + rho[k + 1]
        if pair <= 0:
            break
        pair = min(pair, prev)
        tau += 2.0 * pair
        prev = pair
    return float(n / max(tau, 1e-12)) if tau > 0 else float(n)


def integrated_autocorr_time(series: np.ndarray) -> float:
    return len(series) / ess(series)


def mc_standard_error(series: np.ndarray) -> float:
    x = np.asarray(series, dtype=float)
    return float(np.std(x, ddof=1) / np.sqrt(ess(x)))
