#!/usr/bin/env python3
"""
Unit tests for mcmc.py module
"""

import pytest
import sys
import os
import numpy as np

# Add parent directory to path for imports
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from errors import ConfigError, ForwardSolveFailed, SeriesTooShort
from mcmc import (
    Chain, MalaConfig, Preconditioner, autocorrelation, ess, integrated_autocorr_time,
    map_point, map_preconditioner, mc_standard_error, posterior_target, run_chains, run_mala,
)
from model import ForwardProblem, linear_gaussian_posterior, log_posterior_and_grad
from prior import make_prior
from tests.fixtures.problems import linear_setup


def standard_normal(x):
    return -0.5 * float(x @ x), -x


def scaled_normal(scales):
    prec = 1.0 / np.asarray(scales) ** 2

    def target(x):
        return -0.5 * float(x @ (prec * x)), -prec * x
    return target


def ar1(phi, n, seed=0):
    rng = np.random.default_rng(seed)
    x = np.empty(n)
    x[0] = rng.standard_normal()
    for k in range(1, n):
        x[k] = phi * x[k - 1] + np.sqrt(1 - phi ** 2) * rng.standard_normal()
    return x


class TestChain:
    """Tests for the Chain container"""

    def test_empty(self):
        chain = Chain.empty(3, seed=4)
        assert chain.steps == 0
        assert chain.dim == 3
        assert chain.acceptance_rate == 0.0
        assert chain.seconds_per_step() == 0.0

    def test_discard(self):
        chain = run_mala(standard_normal, 2, MalaConfig(timing=False), np.zeros(2), 11, seed=0)
        kept = chain.discard(0.5)
        assert kept.steps == 6
        np.testing.assert_array_equal(kept.states, chain.states[5:])
        assert chain.discard(0.0).steps == 11


class TestMalaConfig:
    """Tests for MalaConfig validation"""

    def test_bad_values(self):
        with pytest.raises(ConfigError):
            MalaConfig(target_accept=1.0)
        with pytest.raises(ConfigError):
            MalaConfig(preconditioner='adaptive')
        with pytest.raises(ConfigError):
            MalaConfig(preconditioner='fixed')
        with pytest.raises(ConfigError):
            MalaConfig(step_size=0.0)


class TestRunMala:
    """Tests for the MALA sampler"""

    def test_standard_normal_moments(self):
        chain = run_mala(standard_normal, 2, MalaConfig(timing=False), np.zeros(2), 20000, seed=1)
        kept = chain.discard(0.2)
        np.testing.assert_allclose(kept.states.mean(axis=0), 0.0, atol=0.1)
        np.testing.assert_allclose(kept.states.var(axis=0), 1.0, atol=0.15)
        assert not chain.failed

    @pytest.mark.slow
    def test_one_dimensional_long_run(self):
        chain = run_mala(standard_normal, 1, MalaConfig(timing=False), np.zeros(1), 100000, seed=6)
        states = chain.discard(0.1).states[:, 0]
        assert abs(states.mean()) <= 0.02
        assert 0.95 <= states.var() <= 1.05

    @pytest.mark.slow
    def test_correlated_gaussian_within_standard_errors(self):
        mean = np.array([1.0, -2.0])
        cov = np.array([[2.0, 0.9], [0.9, 0.5]])
        prec = np.linalg.inv(cov)

        def target(x):
            d = x - mean
            return -0.5 * float(d @ prec @ d), -prec @ d
        chain = run_mala(target, 2, MalaConfig(timing=False), mean.copy(), 100000, seed=8)
        states = chain.discard(0.1).states
        for j in range(2):
            assert abs(states[:, j].mean() - mean[j]) <= 3 * mc_standard_error(states[:, j])
            sq = (states[:, j] - mean[j]) ** 2
            assert abs(sq.mean() - cov[j, j]) <= 3 * mc_standard_error(sq)

    def test_ten_dimensional_acceptance(self):
        chain = run_mala(standard_normal, 10, MalaConfig(timing=False), np.zeros(10), 5000, seed=7)
        assert 0.45 <= chain.discard(0.5).acceptance_rate <= 0.7

    def test_adaptation_reaches_target_acceptance(self):
        chain = run_mala(standard_normal, 5, MalaConfig(timing=False), np.zeros(5), 5000, seed=2)
        assert abs(chain.discard(0.5).acceptance_rate - 0.574) < 0.1

    def test_fixed_step_is_kept(self):
        config = MalaConfig(step_size=0.3, adapt=False, timing=False)
        chain = run_mala(standard_normal, 2, config, np.zeros(2), 50, seed=0)
        np.testing.assert_array_equal(chain.step_sizes, 0.3)

    def test_log_likelihood_is_nan_for_two_tuple_targets(self):
        chain = run_mala(standard_normal, 2, MalaConfig(timing=False), np.zeros(2), 5, seed=0)
        assert np.all(np.isnan(chain.log_like))

    def test_fixed_preconditioner_from_covariance(self):
        scales = np.array([10.0, 0.1])
        config = MalaConfig(preconditioner='fixed', fixed_precond=np.diag(scales ** 2), timing=False)
        chain = run_mala(scaled_normal(scales), 2, config, np.zeros(2), 20000, seed=3)
        np.testing.assert_allclose(chain.discard(0.2).states.std(axis=0), scales, rtol=0.15)

    def test_empirical_preconditioner_runs(self):
        scales = np.array([5.0, 0.2])
        config = MalaConfig(preconditioner='empirical', precond_every=200, timing=False)
        chain = run_mala(scaled_normal(scales), 2, config, np.zeros(2), 4000, seed=4)
        assert chain.steps == 4000
        assert chain.discard(0.5).acceptance_rate > 0.3

    def test_deterministic_without_timing(self):
        a = run_mala(standard_normal, 3, MalaConfig(timing=False), np.zeros(3), 200, seed=9)
        b = run_mala(standard_normal, 3, MalaConfig(timing=False), np.zeros(3), 200, seed=9)
        np.testing.assert_array_equal(a.states, b.states)
        np.testing.assert_array_equal(a.wall_times, 0.0)

    def test_zero_steps(self):
        assert run_mala(standard_normal, 2, MalaConfig(), np.zeros(2), 0, seed=0).steps == 0

    def test_failure_truncates_chain(self):
        def fragile(x):
            if x[0] > 1.0:
                raise ForwardSolveFailed("solver diverged")
            return standard_normal(x)
        chain = run_mala(fragile, 1, MalaConfig(timing=False), np.zeros(1), 5000, seed=0)
        assert chain.failed
        assert 'step' in chain.message
        assert chain.steps < 5000

    def test_non_finite_initial_state(self):
        chain = run_mala(lambda x: (np.nan, x), 2, MalaConfig(), np.zeros(2), 10, seed=0)
        assert chain.failed
        assert chain.steps == 0

    def test_non_finite_proposal_is_rejected(self):
        def walled(x):
            if x[0] < 0:
                return -np.inf, -x
            return standard_normal(x)
        chain = run_mala(walled, 1, MalaConfig(timing=False), np.array([0.5]), 2000, seed=5)
        assert not chain.failed
        assert np.all(chain.states[:, 0] >= 0)


class TestRunChains:
    """Tests for concurrent independent chains"""

    def test_matches_serial_runs_in_order(self):
        config = MalaConfig(timing=False)
        inits = [np.zeros(2), np.ones(2)]
        chains = run_chains(standard_normal, 2, config, inits, 100, [11, 12], max_workers=2)
        for chain, init, seed in zip(chains, inits, [11, 12]):
            single = run_mala(standard_normal, 2, config, init, 100, seed)
            np.testing.assert_array_equal(chain.states, single.states)
            assert chain.seed == seed


class TestPosteriorAndMap:
    """Tests for the full-space target and the posterior mode"""

    def test_posterior_target_agrees(self):
        problem = linear_setup(mean=0.1).problem
        x = np.random.default_rng(0).standard_normal(problem.dim)
        logp, grad, loglike = posterior_target(problem)(x)
        ref_logp, ref_grad = log_posterior_and_grad(problem, x)
        assert logp == pytest.approx(ref_logp)
        np.testing.assert_allclose(grad, ref_grad, rtol=1e-10, atol=1e-10)
        assert loglike >= logp

    def test_map_of_linear_problem_is_posterior_mean(self):
        problem = linear_setup(mean=0.2).problem
        exact = linear_gaussian_posterior(problem.model.matrix, problem.prior, problem.obs_cov, problem.data)
        result = map_point(problem)
        assert result.converged
        assert result.iterations <= 2
        np.testing.assert_allclose(result.x, exact.mean, rtol=1e-6, atol=1e-6)
        assert map_point(problem, init=result.x).iterations == 0

    def test_map_preconditioner_of_linear_problem_is_posterior_covariance(self):
        problem = linear_setup().problem
        exact = linear_gaussian_posterior(problem.model.matrix, problem.prior, problem.obs_cov, problem.data)
        precond = map_preconditioner(problem, np.zeros(problem.dim))
        np.testing.assert_allclose(precond.apply_cov(np.eye(problem.dim)), exact.cov, rtol=1e-6, atol=1e-10)
        np.testing.assert_allclose(precond.inv_sqrt @ precond.sqrt, np.eye(problem.dim), atol=1e-8)

    def test_map_preconditioner_with_symmetric_prior_root(self):
        problem = linear_setup().problem
        prior = make_prior(problem.prior.mean, problem.prior.cov, symmetric_root=True)
        twin = ForwardProblem(problem.model, prior, problem.obs_cov, problem.data)
        exact = linear_gaussian_posterior(problem.model.matrix, problem.prior, problem.obs_cov, problem.data)
        precond = map_preconditioner(twin, np.zeros(problem.dim))
        np.testing.assert_allclose(precond.apply_cov(np.eye(problem.dim)), exact.cov, rtol=1e-6, atol=1e-10)
        np.testing.assert_allclose(precond.inv_sqrt @ precond.sqrt, np.eye(problem.dim), atol=1e-8)

    def test_preconditioner_from_covariance(self):
        cov = np.array([[4.0, 1.0], [1.0, 2.0]])
        precond = Preconditioner.from_covariance(cov, reg=0.0)
        np.testing.assert_allclose(precond.apply_cov(np.eye(2)), cov)


class TestDiagnostics:
    """Tests for autocorrelation, ESS and standard errors"""

    def test_autocorrelation_of_ar1(self):
        rho = autocorrelation(ar1(0.8, 20000), 5)
        assert rho[0] == pytest.approx(1.0)
        assert rho[1] == pytest.approx(0.8, abs=0.03)
        assert rho[2] == pytest.approx(0.64, abs=0.04)

    def test_white_noise_lag_one(self):
        rho = autocorrelation(np.random.default_rng(3).standard_normal(100000), 1)
        assert abs(rho[1]) <= 0.02

    def test_ar1_lag_one_at_full_length(self):
        rho = autocorrelation(ar1(0.9, 100000, seed=4), 1)
        assert 0.88 <= rho[1] <= 0.92

    def test_constant_series(self):
        np.testing.assert_array_equal(autocorrelation(np.full(10, 3.0), 4), 1.0)
        assert ess(np.full(10, 3.0)) == 1.0

    def test_too_short(self):
        with pytest.raises(SeriesTooShort):
            autocorrelation(np.arange(5.0), 5)
        with pytest.raises(SeriesTooShort):
            ess(np.arange(3.0))

    def test_ess_of_independent_draws(self):
        x = np.random.default_rng(0).standard_normal(10000)
        assert ess(x) == pytest.approx(10000, rel=0.2)

    def test_ess_of_ar1(self):
        # IACT of AR(1) is (1 + φ)/(1 - φ)
        x = ar1(0.9, 50000, seed=1)
        assert integrated_autocorr_time(x) == pytest.approx(19.0, rel=0.3)

    def test_mc_standard_error(self):
        x = np.random.default_rng(2).standard_normal(10000)
        assert mc_standard_error(x) == pytest.approx(0.01, rel=0.2)


if __name__ == '__main__':
    pytest.main([__file__, '-v'])
