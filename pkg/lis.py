#!/usr/bin/env python3
"""
Likelihood-informed subspace construction

Local LIS from the prior-preconditioned Gauss-Newton Hessian at one point, the global
LIS from the sample average of local packets, projector algebra between parameter
space and (LIS, complement) coordinates, the reduced posterior, and the adaptive
construction loop driven by subspace MCMC.
"""

import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import List, Optional, Sequence, Tuple

import numpy as np

from common import Stopwatch, derive_seed
from config import get_thread_limit, linearity_check_enabled
from errors import DimensionMismatch, InvalidThreshold, MapNotFound
from linalg import complete_basis, fix_signs, mgs, truncated_eig_matfree
from logger import ProgressReporter, get_logger
from mcmc import Chain, MalaConfig, MapResult, autocorrelation, map_point, run_mala
from model import ForwardProblem, misfit, misfit_and_grad, ppgnh_operator
from prior import GaussianPrior

log = get_logger(__name__)


# =============================================================================
# Local and global LIS
# =============================================================================

@dataclass(frozen=True)
class EigenPacket:
    """Truncated ppGNH eigenpairs at one sample point (whitened coordinates)"""
    point: np.ndarray
    values: np.ndarray
    vectors: np.ndarray

    @property
    def rank(self) -> int:
        return len(self.values)


def local_lis(problem: ForwardProblem, x: np.ndarray, tau_loc: float, max_rank: int = 40,
              seed: int = 0, oversample: int = 10) -> EigenPacket:
    """Eigenpairs of Lᵀ H(x) L with value ≥ tau_loc"""
    if tau_loc <= 0:
        raise InvalidThreshold(f"tau_loc must be positive, got {tau_loc}")
    eig = truncated_eig_matfree(
        ppgnh_operator(problem, x), problem.dim, tau_loc, max_rank,
        oversample=oversample, rng_seed=seed, verify_linearity=linearity_check_enabled(),
    )
    log.debug(f"local LIS: {eig.rank} eigenvalues >= {tau_loc:g}")
    return EigenPacket(point=np.array(x, dtype=float, copy=True), values=eig.values, vectors=eig.vectors)


@dataclass(frozen=True)
class LisAccumulator:
    """Σ_k V_k Λ_k V_kᵀ held as F Fᵀ with F the concatenated scaled bases"""
    factor: np.ndarray
    count: int = 0
    compressed_rank: int = 0

    @classmethod
    def empty(cls, dim: int) -> 'LisAccumulator':
        return cls(factor=np.zeros((dim, 0)))

    @property
    def dim(self) -> int:
        return self.factor.shape[0]

    def mean(self) -> np.ndarray:
        """Dense Ŝ_m = F Fᵀ / m"""
        return self.factor @ self.factor.T / max(self.count, 1)


def _compress(factor: np.ndarray) -> np.ndarray:
    U, s, _ = np.linalg.svd(factor, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return factor[:, :0]
    keep = s ** 2 > 1e-14 * s[0] ** 2
    return U[:, keep] * s[keep]


def accumulate(acc: LisAccumulator, packet: EigenPacket) -> LisAccumulator:
    if packet.vectors.shape[0] != acc.dim:
        raise DimensionMismatch(f"packet dimension {packet.vectors.shape[0]} does not match {acc.dim}")
    factor = np.hstack([acc.factor, packet.vectors * np.sqrt(packet.values)])
    compressed = acc.compressed_rank
    if factor.shape[1] > max(4 * compressed, 1) or factor.shape[1] > acc.dim:
        factor = _compress(factor)
        compressed = factor.shape[1]
    return LisAccumulator(factor=factor, count=acc.count + 1, compressed_rank=compressed)


@dataclass(frozen=True)
class GlobalLis:
    psi: np.ndarray
    gamma: np.ndarray
    phi: np.ndarray
    xi: np.ndarray
    sample_count: int
    prior: GaussianPrior

    @property
    def dim(self) -> int:
        return self.psi.shape[0]

    @property
    def rank(self) -> int:
        return self.psi.shape[1]

    @cached_property
    def complement(self) -> np.ndarray:
        """Ψ_⊥, orthonormal completion of Ψ_r (Householder QR)"""
        return complete_basis(self.psi)

    @cached_property
    def complement_phi(self) -> np.ndarray:
        return self.prior.factor.apply(self.complement)

    @cached_property
    def complement_xi(self) -> np.ndarray:
        return self.prior.factor.solve_t(self.complement)

    def projector(self) -> np.ndarray:
        """Dense Π_r = Φ_r Ξ_rᵀ"""
        return self.phi @ self.xi.T

    def project_apply(self, x: np.ndarray) -> np.ndarray:
        return self.phi @ (self.xi.T @ x)

    def complement_apply(self, x: np.ndarray) -> np.ndarray:
        """(I - Π_r) x"""
        return x - self.project_apply(x)

    @cached_property
    def complement_mean(self) -> np.ndarray:
        """(I - Π_r) μ_pr"""
        return self.complement_apply(self.prior.mean)

    def to_full(self, x_r: np.ndarray) -> np.ndarray:
        """Φ_r x_r + (I - Π_r) μ_pr"""
        return self.phi @ x_r + self.complement_mean


def make_global_lis(psi: np.ndarray, gamma: np.ndarray, prior: GaussianPrior, sample_count: int) -> GlobalLis:
    return GlobalLis(
        psi=psi, gamma=np.asarray(gamma, dtype=float),
        phi=prior.factor.apply(psi), xi=prior.factor.solve_t(psi),
        sample_count=sample_count, prior=prior,
    )


def global_lis(acc: LisAccumulator, prior: GaussianPrior, tau_g: float) -> GlobalLis:
    """Eigenvectors of Ŝ_m with eigenvalue ≥ tau_g, via an SVD of F/√m"""
    if acc.count < 1:
        raise DimensionMismatch("global LIS needs at least one packet")
    if acc.dim != prior.dim:
        raise DimensionMismatch(f"accumulator dimension {acc.dim} does not match prior {prior.dim}")
    if acc.factor.shape[1] == 0:
        return make_global_lis(np.zeros((acc.dim, 0)), np.zeros(0), prior, acc.count)
    U, s, _ = np.linalg.svd(acc.factor / np.sqrt(acc.count), full_matrices=False)
    gamma = s ** 2
    keep = int(np.count_nonzero(gamma >= tau_g))
    psi = mgs(fix_signs(U[:, :keep]))
    return make_global_lis(psi, gamma[:keep], prior, acc.count)


def project(lis: GlobalLis, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(Ξ_rᵀ x, Ξ_⊥ᵀ x)"""
    x = np.asarray(x, dtype=float)
    if x.shape[0] != lis.dim:
        raise DimensionMismatch(f"vector of length {x.shape[0]} for a {lis.dim}-dimensional LIS")
    white = lis.prior.factor.solve(x)
    return lis.psi.T @ white, lis.complement.T @ white


def reconstruct(lis: GlobalLis, x_r: np.ndarray, x_perp: np.ndarray) -> np.ndarray:
    """Φ_r x_r + Φ_⊥ x_⊥"""
    if len(x_r) != lis.rank or len(x_perp) != lis.dim - lis.rank:
        raise DimensionMismatch(
            f"coordinates ({len(x_r)}, {len(x_perp)}) do not split dimension {lis.dim} at rank {lis.rank}"
        )
    return lis.prior.factor.apply(lis.psi @ x_r + lis.complement @ x_perp)


# =============================================================================
# Reduced posterior
# =============================================================================

class ReducedPosterior:
    """π̃(x_r | y) ∝ exp(-misfit(Φ_r x_r + (I - Π_r) μ_pr)) N(x_r; Ξ_rᵀ μ_pr, I)

    Calling it returns (log density, gradient, log likelihood), the MCMC target form.
    """

    def __init__(self, problem: ForwardProblem, lis: GlobalLis):
        self.problem = problem
        self.lis = lis
        self.lis_mean = lis.xi.T @ problem.prior.mean

    @property
    def dim(self) -> int:
        return self.lis.rank

    def log_density(self, x_r: np.ndarray) -> float:
        d = x_r - self.lis_mean
        return -misfit(self.problem, self.lis.to_full(x_r)) - 0.5 * float(d @ d)

    def grad(self, x_r: np.ndarray) -> np.ndarray:
        return self(x_r)[1]

    def __call__(self, x_r: np.ndarray):
        value, grad = misfit_and_grad(self.problem, self.lis.to_full(x_r))
        d = x_r - self.lis_mean
        return -value - 0.5 * float(d @ d), -self.lis.phi.T @ grad - d, -value


def reduced_log_posterior(problem: ForwardProblem, lis: GlobalLis, x_r: np.ndarray) -> float:
    return ReducedPosterior(problem, lis).log_density(x_r)


def reduced_grad_log_posterior(problem: ForwardProblem, lis: GlobalLis, x_r: np.ndarray) -> np.ndarray:
    return ReducedPosterior(problem, lis).grad(x_r)


# =============================================================================
# Convergence diagnostic
# =============================================================================

def weighted_subspace_distance(a: GlobalLis, b: GlobalLis) -> float:
    """sqrt(1 - ‖(Ψ_a D_a)ᵀ(Ψ_b D_b)‖_F²) with D = diag((γ/Σγ)^{1/4}); 1.0 if either LIS is empty"""
    if a.dim != b.dim:
        raise DimensionMismatch(f"subspaces live in dimensions {a.dim} and {b.dim}")
    if a.rank == 0 or b.rank == 0:
        return 1.0
    ya = a.psi * (a.gamma / a.gamma.sum()) ** 0.25
    yb = b.psi * (b.gamma / b.gamma.sum()) ** 0.25
    overlap = np.linalg.norm(ya.T @ yb, 'fro') ** 2
    return float(np.sqrt(min(max(1.0 - overlap, 0.0), 2.0)))


# =============================================================================
# Adaptive construction
# =============================================================================

@dataclass
class AdaptConfig:
    tau_loc: float = 0.1
    tau_g: Optional[float] = None
    subchain_len: int = 200
    max_iters: int = 200
    dist_tol: float = 0.0
    max_hessians: Optional[int] = None
    max_rank: int = 40
    oversample: int = 10
    seed: int = 0
    conditional_update: bool = False
    map_tol: float = 1e-6
    map_max_iters: int = 50
    mala: MalaConfig = field(default_factory=MalaConfig)
    timing: bool = True

    @property
    def threshold(self) -> float:
        return self.tau_loc if self.tau_g is None else self.tau_g


@dataclass
class TraceRow:
    iteration: int
    rank: int
    distance: float
    hessian_evals: int
    wall_time: float
    eigenvalues: List[float]
    acceptance: float = float('nan')
    lag1: float = float('nan')


@dataclass
class AdaptResult:
    lis: GlobalLis
    trace: List[TraceRow]
    converged: bool
    budget_exhausted: bool
    samples: List[np.ndarray]
    map_result: MapResult
    accumulator: LisAccumulator


def _subchain_config(base: MalaConfig, lis: GlobalLis, step_size: Optional[float]) -> MalaConfig:
    """Reduced-posterior chains are preconditioned by the Gauss-Newton covariance diag(1/(1+γ))"""
    return MalaConfig(
        step_size=step_size, adapt=base.adapt, target_accept=base.target_accept,
        adapt_decay=base.adapt_decay, preconditioner='fixed',
        fixed_precond=np.diag(1.0 / (1.0 + lis.gamma)), reg=base.reg, timing=base.timing,
    )


def _conditional_update(problem: ForwardProblem, lis: GlobalLis, x_new: np.ndarray, x_prev: np.ndarray,
                        rng: np.random.Generator) -> Tuple[np.ndarray, bool]:
    """One Metropolized independence step in the complement with the complement prior as proposal"""
    prior = problem.prior
    lis_part = lis.project_apply(x_new)
    current = lis_part + lis.complement_apply(x_prev)
    xi = rng.standard_normal(prior.dim)
    xi -= lis.psi @ (lis.psi.T @ xi)
    proposal = lis_part + lis.complement_mean + prior.factor.apply(xi)
    log_ratio = misfit(problem, current) - misfit(problem, proposal)
    if np.log(rng.uniform()) < log_ratio:
        return proposal, True
    return current, False


def adapt_lis(problem: ForwardProblem, config: AdaptConfig, init: Optional[np.ndarray] = None) -> AdaptResult:
    """Adaptive global LIS construction with subspace MCMC

    Starts from the packet at the posterior mode, then repeatedly runs a short reduced-posterior
    chain, maps its last state back to parameter space, adds that point's packet, and rebuilds
    the global LIS. Stops on weighted distance < dist_tol, on the Hessian budget, or after
    max_iters iterations.
    """
    clock = Stopwatch(config.timing)
    tau_g = config.threshold
    prior = problem.prior

    map_result = map_point(problem, init, config.map_tol, config.map_max_iters)
    if not np.all(np.isfinite(map_result.x)) or not np.isfinite(map_result.log_post):
        raise MapNotFound("posterior mode search produced a non-finite point")
    if not map_result.converged:
        log.warning(f"MAP search stopped after {map_result.iterations} iterations "
                    f"with |grad| {map_result.grad_norm:.3e}; continuing from the best iterate")

    x_cur = map_result.x
    acc = accumulate(LisAccumulator.empty(prior.dim),
                     local_lis(problem, x_cur, config.tau_loc, config.max_rank,
                               derive_seed(config.seed, 'packet', 0), config.oversample))
    hessian_evals = 1
    lis = global_lis(acc, prior, tau_g)
    samples = [x_cur]
    trace = [TraceRow(0, lis.rank, float('nan'), hessian_evals, clock.elapsed(), lis.gamma.tolist())]
    log.info(f"Initial LIS from the posterior mode: dimension {lis.rank}")

    theta = lis.xi.T @ x_cur
    step_size = config.mala.step_size
    converged = budget_exhausted = False
    rng = np.random.default_rng(derive_seed(config.seed, 'conditional'))
    progress = ProgressReporter(log, 'LIS iteration', config.max_iters, every=10)

    for k in range(1, config.max_iters + 1):
        acceptance = lag1 = float('nan')
        if lis.rank == 0:
            # The reduced posterior is the prior; draw the next point from it
            draw = np.random.default_rng(derive_seed(config.seed, 'lis', k)).standard_normal(prior.dim)
            x_new = prior.unwhiten(draw)
        else:
            chain = run_mala(ReducedPosterior(problem, lis), lis.rank, _subchain_config(config.mala, lis, step_size),
                             theta, config.subchain_len, derive_seed(config.seed, 'lis', k),
                             label=f'subchain {k}', report_every=max(config.subchain_len, 1))
            if chain.steps:
                theta = chain.states[-1]
                acceptance = chain.acceptance_rate
                step_size = float(chain.step_sizes[-1])
                if chain.steps > 1 and np.ptp(chain.log_post) > 0:
                    lag1 = float(autocorrelation(chain.log_post, 1)[1])
            if chain.failed:
                log.warning(f"subchain {k} stopped early: {chain.message}")
            x_new = lis.to_full(theta)

        if config.conditional_update:
            x_new, moved = _conditional_update(problem, lis, x_new, x_cur, rng)
            log.debug(f"conditional complement update {'accepted' if moved else 'rejected'}")

        acc = accumulate(acc, local_lis(problem, x_new, config.tau_loc, config.max_rank,
                                        derive_seed(config.seed, 'packet', k), config.oversample))
        hessian_evals += 1
        new_lis = global_lis(acc, prior, tau_g)
        distance = weighted_subspace_distance(lis, new_lis)
        if lis.rank == 0 or new_lis.rank == 0:
            log.warning(f"iteration {k}: empty LIS, distance set to {distance:g}")

        lis, x_cur = new_lis, x_new
        samples.append(x_new)
        theta = lis.xi.T @ x_new
        trace.append(TraceRow(k, lis.rank, distance, hessian_evals, clock.elapsed(),
                              lis.gamma.tolist(), acceptance, lag1))
        progress.update(k, f"r={lis.rank} distance={distance:.3e}")

        if distance < config.dist_tol:
            converged = True
            log.info(f"LIS converged after {k} iterations (distance {distance:.3e})")
            break
        if config.max_hessians is not None and hessian_evals >= config.max_hessians:
            budget_exhausted = True
            log.warning(f"Hessian budget of {config.max_hessians} exhausted after {k} iterations")
            break

    return AdaptResult(lis, trace, converged, budget_exhausted, samples, map_result, acc)


def lis_from_samples(problem: ForwardProblem, samples: Sequence[np.ndarray], tau_loc: float,
                     tau_g: Optional[float] = None, max_rank: int = 40, oversample: int = 10,
                     seed: int = 0, max_workers: Optional[int] = None) -> GlobalLis:
    """Global LIS from a given sample set, packets evaluated concurrently"""
    samples = [np.asarray(s, dtype=float) for s in samples]
    workers = max_workers or get_thread_limit()
    lock = threading.Lock()
    packets: List[Optional[EigenPacket]] = [None] * len(samples)

    def work(index: int):
        packet = local_lis(problem, samples[index], tau_loc, max_rank,
                           derive_seed(seed, 'packet', index), oversample)
        with lock:
            packets[index] = packet

    with ThreadPoolExecutor(max_workers=workers) as executor:
        for future in [executor.submit(work, i) for i in range(len(samples))]:
            future.result()

    # Accumulate in sample order so the result does not depend on thread scheduling
    acc = LisAccumulator.empty(problem.dim)
    for packet in packets:
        acc = accumulate(acc, packet)
    return global_lis(acc, problem.prior, tau_loc if tau_g is None else tau_g)
