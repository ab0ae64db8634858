#!/usr/bin/env python3
"""
lisinfer - likelihood-informed subspace inference for Bayesian inverse problems

Subcommands:
    build-lis   adaptive LIS construction (or LIS from an existing full-space chain)
    sample      MALA in the LIS (with --lis) or in the full parameter space
    estimate    Rao-Blackwellized (with --lis) or standard posterior moments
    diagnose    autocorrelation and effective sample size of chain benchmarks
    verify      derivative checks, chain spot checks and the linear oracle comparison
"""

import argparse
import sys
from functools import partial
from typing import List, Optional, Tuple

import numpy as np

from common import Colors, derive_seed, format_duration, print_section, Stopwatch
from config import get_output_dir, get_thread_limit, load_run_config
from errors import ConfigError, LisInferError, TargetEvaluationFailed, exit_code_for
from estimators import rb_moments, standard_moments
from formats import (
    chain_summary, prior_fingerprint, read_chain, read_lis, write_chain, write_csv, write_json,
    write_lis, write_matrix,
)
from linalg import principal_angles
from lis import AdaptConfig, GlobalLis, ReducedPosterior, adapt_lis, lis_from_samples
from logger import get_logger, is_debug, setup_logging
from mcmc import (
    Chain, MalaConfig, autocorrelation, ess, map_point, map_preconditioner,
    mc_standard_error, posterior_target, run_chains,
)
from model import (
    check_adjoint, check_gradient, check_jacobian, log_posterior_and_grad, optimal_linear_projector,
)
from models import ProblemSetup, build_problem
from prior import sample as prior_sample

log = get_logger(__name__)

# LIS basis vectors used as chain benchmarks (1-based)
BENCHMARK_VECTORS = (1, 3, 5)
VERIFY_POINTS = 5


# =============================================================================
# Shared plumbing
# =============================================================================

class Run:
    """Resolved config, problem and output directory for one subcommand"""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.cfg = load_run_config(args.config, {'seed': args.seed})
        self.timing = not args.no_timing
        self.out = get_output_dir(args.out, self.cfg)
        self.out.mkdir(parents=True, exist_ok=True)
        write_json(self.out / 'config.json', self.cfg)
        self.setup: ProblemSetup = build_problem(self.cfg)

    @property
    def problem(self):
        return self.setup.problem

    @property
    def seed(self) -> int:
        return self.cfg['seed']

    def load_lis(self) -> Optional[GlobalLis]:
        if not self.args.lis:
            return None
        lis = read_lis(self.args.lis, self.problem.prior)
        log.info(f"Loaded LIS of dimension {lis.rank} from {self.args.lis}")
        return lis

    def load_chains(self) -> List[Tuple[Chain, dict]]:
        if not self.args.chain:
            raise ConfigError(f"'{self.args.command}' needs at least one --chain file")
        return [read_chain(path) for path in self.args.chain]

    def mala_config(self, preconditioner: str = 'identity', fixed=None) -> MalaConfig:
        m = self.cfg['mcmc']
        return MalaConfig(
            step_size=m['step_size'], adapt=m['adapt'], target_accept=m['target_accept'],
            adapt_decay=m['adapt_decay'], preconditioner=preconditioner, fixed_precond=fixed,
            reg=m['reg'], precond_every=m['precond_every'], timing=self.timing,
        )

    def adapt_config(self) -> AdaptConfig:
        c = self.cfg['lis']
        return AdaptConfig(
            tau_loc=c['tau_loc'], tau_g=c['tau_g'], subchain_len=c['subchain_len'],
            max_iters=c['max_iters'], dist_tol=c['dist_tol'], max_hessians=c['max_hessians'],
            max_rank=c['max_rank'], oversample=c['oversample'], seed=derive_seed(self.seed, 'lis'),
            conditional_update=c['conditional_update'], map_tol=self.cfg['map']['tol'],
            map_max_iters=self.cfg['map']['max_iters'], mala=self.mala_config(), timing=self.timing,
        )


def _check_kind(meta: dict, lis: Optional[GlobalLis], path: str):
    kind = meta.get('kind', 'full')
    if kind == 'subspace' and lis is None:
        raise ConfigError(f"{path} is a subspace chain; pass the LIS it was sampled in with --lis")
    if kind == 'subspace' and meta.get('dim') != lis.rank:
        raise ConfigError(f"{path} has dimension {meta.get('dim')} but the LIS has dimension {lis.rank}")


def _pooled_states(chains: List[Tuple[Chain, dict]], burn_in: float) -> np.ndarray:
    kept = [chain.discard(burn_in).states for chain, _ in chains]
    return np.vstack(kept) if kept else np.zeros((0, 0))


# =============================================================================
# build-lis
# =============================================================================

def cmd_build_lis(run: Run):
    problem, setup = run.problem, run.setup
    write_matrix(run.out / 'truth.mat', setup.true_x)
    write_matrix(run.out / 'data.mat', problem.data)
    clock = Stopwatch(run.timing)

    if run.args.chain:
        # LIS from the states of existing full-space chains
        c = run.cfg['lis']
        chains = run.load_chains()
        for _, meta in chains:
            if meta.get('kind', 'full') != 'full':
                raise ConfigError("build-lis from chains needs full-space chains")
        states = _pooled_states(chains, run.cfg['mcmc']['burn_in'])
        if len(states) > c['chain_samples']:
            states = states[np.linspace(0, len(states) - 1, c['chain_samples']).round().astype(int)]
        lis = lis_from_samples(problem, list(states), c['tau_loc'], c['tau_g'], c['max_rank'],
                               c['oversample'], derive_seed(run.seed, 'lis'), get_thread_limit())
        summary = {'source': 'chains', 'samples': len(states)}
        trace = []
    else:
        result = adapt_lis(problem, run.adapt_config())
        lis, trace = result.lis, result.trace
        write_matrix(run.out / 'map.mat', result.map_result.x)
        summary = {
            'source': 'adaptive', 'converged': result.converged,
            'budget_exhausted': result.budget_exhausted, 'iterations': len(trace) - 1,
            'hessian_evals': trace[-1].hessian_evals, 'map_converged': result.map_result.converged,
        }

    write_lis(run.out / 'lis.bin', lis)
    write_csv(run.out / 'trace.csv',
              ['iter', 'r', 'distance', 'hessian_evals', 'wall_time', 'acceptance', 'lag1'],
              [(t.iteration, t.rank, t.distance, t.hessian_evals, t.wall_time, t.acceptance, t.lag1)
               for t in trace])
    write_csv(run.out / 'eigenvalues.csv', ['index', 'gamma'],
              [(i + 1, g) for i, g in enumerate(lis.gamma)])
    summary.update({'dim': lis.dim, 'rank': lis.rank, 'sample_count': lis.sample_count,
                    'problem': run.setup.kind})
    summary.update(prior_fingerprint(problem.prior))
    write_json(run.out / 'lis.json', summary)

    print_section("LIS")
    print(f"  Dimension:  {Colors.BOLD}{lis.rank}{Colors.RESET} of {lis.dim}")
    if lis.rank:
        print(f"  Eigenvalues: {lis.gamma[0]:.3g} ... {lis.gamma[-1]:.3g}")
    if trace and len(trace) > 1:
        print(f"  Distance:   {trace[-1].distance:.3e} after {len(trace) - 1} iterations")
    if run.timing:
        print(f"  {Colors.DIM}Elapsed {format_duration(clock.elapsed())}{Colors.RESET}")
    print(f"  Written to {run.out}")


# =============================================================================
# sample
# =============================================================================

def _subspace_preconditioner(run: Run, lis: GlobalLis) -> MalaConfig:
    choice = run.cfg['mcmc']['subspace_preconditioner']
    if choice == 'gauss_newton':
        return run.mala_config('fixed', np.diag(1.0 / (1.0 + lis.gamma)))
    return run.mala_config(choice)


def _full_preconditioner(run: Run, x_map: np.ndarray) -> MalaConfig:
    choice = run.cfg['mcmc']['full_preconditioner']
    if choice == 'map_hessian':
        return run.mala_config('fixed', map_preconditioner(run.problem, x_map))
    return run.mala_config(choice)


def cmd_sample(run: Run):
    problem = run.problem
    lis = run.load_lis()
    m = run.cfg['mcmc']
    n_chains = run.args.chains or m['chains']

    x_map = map_point(problem, None, run.cfg['map']['tol'], run.cfg['map']['max_iters']).x
    if lis is not None:
        target, dim = ReducedPosterior(problem, lis), lis.rank
        config = _subspace_preconditioner(run, lis)
        init = lis.xi.T @ x_map
        meta = {'kind': 'subspace', **prior_fingerprint(problem.prior), 'lis_rank': lis.rank}
    else:
        target, dim = posterior_target(problem), problem.dim
        config = _full_preconditioner(run, x_map)
        init = x_map
        meta = {'kind': 'full'}
    meta['problem'] = run.setup.kind
    meta['mcmc'] = m

    seeds = [derive_seed(run.seed, 'mcmc', i) for i in range(n_chains)]
    log.info(f"Running {n_chains} {meta['kind']} chain(s) of {m['steps']} steps in dimension {dim}")
    chains = run_chains(target, dim, config, [init] * n_chains, m['steps'], seeds,
                        min(n_chains, get_thread_limit()))

    print_section(f"{meta['kind'].capitalize()} MCMC")
    failed = []
    for i, chain in enumerate(chains):
        path = run.out / f'chain_{i}.chn'
        write_chain(path, chain, {**meta, 'chain_index': i})
        status = f"{Colors.RED}failed{Colors.RESET}" if chain.failed else f"{Colors.GREEN}ok{Colors.RESET}"
        print(f"  chain {i}: {chain.steps} steps, acceptance {chain.acceptance_rate:.3f} [{status}]")
        if chain.failed:
            failed.append(f"chain {i}: {chain.message}")
    if failed:
        raise TargetEvaluationFailed("; ".join(failed))


# =============================================================================
# estimate
# =============================================================================

def _mcse(series: np.ndarray) -> np.ndarray:
    if series.shape[0] < 4:
        return np.full(series.shape[1], np.nan)
    return np.array([mc_standard_error(series[:, j]) for j in range(series.shape[1])])


def cmd_estimate(run: Run):
    problem = run.problem
    lis = run.load_lis()
    chains = run.load_chains()
    for (_, meta), path in zip(chains, run.args.chain):
        _check_kind(meta, lis, path)
    kinds = {meta.get('kind', 'full') for _, meta in chains}
    if len(kinds) > 1:
        raise ConfigError("cannot pool subspace and full-space chains")
    kind = kinds.pop()
    states = _pooled_states(chains, run.cfg['mcmc']['burn_in'])

    summary = {'grid_shape': list(run.setup.grid_shape), 'problem': run.setup.kind,
               'steps': int(states.shape[0]), 'chains': len(chains), 'dim': problem.dim}
    if kind == 'subspace':
        moments = rb_moments(lis, problem.prior, states, run.cfg['estimate']['full_cov_limit'])
        mean, variance = moments.mean, moments.variance
        write_matrix(run.out / 'lis_variance.mat', moments.lis_variance)
        write_matrix(run.out / 'cs_variance.mat', moments.cs_variance)
        if moments.cov is not None:
            write_matrix(run.out / 'cov.mat', moments.cov)
        mcse = _mcse(states @ lis.phi.T) if lis.rank else np.zeros(problem.dim)
        summary.update({'estimator': 'rao_blackwell', 'lis_rank': lis.rank})
    else:
        mean, variance = standard_moments(states)
        mcse = _mcse(states)
        summary['estimator'] = 'standard'
    write_matrix(run.out / 'mean.mat', mean)
    write_matrix(run.out / 'variance.mat', variance)
    write_matrix(run.out / 'mcse.mat', mcse)
    summary.update({
        'mean_range': [float(mean.min()), float(mean.max())],
        'variance_range': [float(variance.min()), float(variance.max())],
        'truth_rmse': float(np.sqrt(np.mean((mean - run.setup.true_x) ** 2))),
    })
    write_json(run.out / 'estimate.json', summary)

    print_section(f"Posterior estimate ({summary['estimator'].replace('_', '-')})")
    print(f"  {summary['steps']} states from {len(chains)} chain(s)")
    print(f"  RMSE to truth: {summary['truth_rmse']:.4g}")


# =============================================================================
# diagnose
# =============================================================================

def _benchmarks(chain: Chain, meta: dict, lis: Optional[GlobalLis]) -> List[Tuple[str, np.ndarray]]:
    series = [('log_likelihood', chain.log_like)]
    if lis is None:
        return series
    coords = chain.states if meta.get('kind') == 'subspace' else chain.states @ lis.xi
    for k in BENCHMARK_VECTORS:
        if k <= lis.rank:
            series.append((f'lis_{k}', coords[:, k - 1]))
    return series


def cmd_diagnose(run: Run):
    lis = run.load_lis()
    chains = run.load_chains()
    max_lag_cfg = run.cfg['estimate']['max_lag']
    acf_rows, ess_rows = [], []

    print_section("Chain diagnostics")
    for index, ((chain, meta), path) in enumerate(zip(chains, run.args.chain)):
        _check_kind(meta, lis, path)
        kept = chain.discard(run.cfg['mcmc']['burn_in'])
        seconds = kept.seconds_per_step() if run.timing else 0.0
        max_lag = min(max_lag_cfg, kept.steps - 1)
        for name, series in _benchmarks(kept, meta, lis):
            rho = autocorrelation(series, max_lag)
            acf_rows.extend((index, name, lag, lag * seconds, value) for lag, value in enumerate(rho))
            n_eff = ess(series)
            per_second = n_eff / (kept.steps * seconds) if seconds > 0 else 0.0
            ess_rows.append((index, name, kept.steps, n_eff, kept.steps / n_eff, per_second))
            print(f"  chain {index} {name:<15} ESS {n_eff:10.1f}  IACT {kept.steps / n_eff:8.2f}")

    write_csv(run.out / 'autocorr.csv', ['chain', 'benchmark', 'lag', 'lag_seconds', 'autocorrelation'], acf_rows)
    write_csv(run.out / 'ess.csv', ['chain', 'benchmark', 'steps', 'ess', 'iact', 'ess_per_second'], ess_rows)


# =============================================================================
# verify
# =============================================================================

def cmd_verify(run: Run):
    problem = run.problem
    model = problem.model
    seed = derive_seed(run.seed, 'verify')
    points = prior_sample(problem.prior, seed, VERIFY_POINTS).T
    target = partial(log_posterior_and_grad, problem)

    report = {
        'adjoint': max(check_adjoint(model, x, derive_seed(seed, 'adjoint', i)) for i, x in enumerate(points)),
        'jacobian': max(check_jacobian(model, x, derive_seed(seed, 'jacobian', i)) for i, x in enumerate(points)),
        'gradient': max(check_gradient(target, x, derive_seed(seed, 'gradient', i)) for i, x in enumerate(points)),
        'problem': run.setup.kind,
    }

    lis = run.load_lis()
    if lis is not None and run.setup.kind == 'linear':
        oracle = optimal_linear_projector(model.jacobian(problem.prior.mean), problem.prior,
                                          problem.obs_cov, lis.rank)
        white = problem.prior.factor.solve(oracle.U)
        angles = principal_angles(lis.psi, white) if lis.rank else np.zeros(0)
        report['max_principal_angle'] = float(angles.max()) if len(angles) else 0.0

    if run.args.chain:
        checks = []
        for (chain, meta), path in zip(run.load_chains(), run.args.chain):
            _check_kind(meta, lis, path)
            evaluate = ReducedPosterior(problem, lis) if meta.get('kind') == 'subspace' else posterior_target(problem)
            # 1% of the rows, at least one, spread over the chain
            rows = np.unique(np.linspace(0, chain.steps - 1, max(1, chain.steps // 100)).astype(int)) if chain.steps else []
            worst = 0.0
            for row in rows:
                recomputed = float(evaluate(chain.states[row])[0])
                worst = max(worst, abs(recomputed - chain.log_post[row]) / max(1.0, abs(recomputed)))
            stats = chain_summary(chain)
            checks.append({'chain': str(path), 'rows_checked': len(rows),
                           'max_rel_error': worst, 'log_post_mean': stats.get('log_post_mean'),
                           'sidecar_log_post_mean': meta.get('log_post_mean')})
        report['chains'] = checks

    write_json(run.out / 'verify.json', report)
    print_section("Verification")
    for key in ('adjoint', 'jacobian', 'gradient', 'max_principal_angle'):
        if key in report:
            print(f"  {key:<20} {report[key]:.3e}")


COMMANDS = {
    'build-lis': cmd_build_lis,
    'sample': cmd_sample,
    'estimate': cmd_estimate,
    'diagnose': cmd_diagnose,
    'verify': cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='lisinfer',
        description='Likelihood-informed subspace inference for Bayesian inverse problems',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
    lisinfer build-lis --config elliptic.json --out runs/elliptic
    lisinfer sample --config elliptic.json --lis runs/elliptic/lis.bin --out runs/elliptic
    lisinfer estimate --config elliptic.json --lis runs/elliptic/lis.bin --chain runs/elliptic/chain_0.chn
    lisinfer diagnose --config elliptic.json --chain runs/full/chain_0.chn --chain runs/full/chain_1.chn
    lisinfer verify --config linear.json --lis runs/linear/lis.bin

build-lis with --chain thins the pooled post-burn-in states to at most lis.chain_samples.
        """
    )
    parser.add_argument('command', choices=sorted(COMMANDS), help='Subcommand to run')
    parser.add_argument('--config', help='JSON run config (default: built-in defaults)')
    parser.add_argument('--lis', help='LIS file written by build-lis')
    parser.add_argument('--chain', action='append', default=[], help='Chain file (repeatable)')
    parser.add_argument('--out', help='Output directory (default: LISINFER_OUTPUT_DIR or config output_dir)')
    parser.add_argument('--seed', type=int, help='Override the run seed')
    parser.add_argument('--chains', type=int, help='Number of concurrent chains for sample')
    parser.add_argument('--no-timing', action='store_true',
                        help='Write wall-clock columns as 0.0 (byte-reproducible outputs)')
    parser.add_argument('--log-file', help='Also write DEBUG logs to this file')
    parser.add_argument(
        '-v', '--verbose',
        action='count',
        default=0,
        help='Increase verbosity (use -v for info, -vv for debug)'
    )
    return parser


def main(argv: Optional[List[str]] = None):
    args = build_parser().parse_args(argv)
    setup_logging(verbosity=args.verbose, log_file=args.log_file)

    try:
        if args.chains is not None and args.chains < 1:
            raise ConfigError("--chains must be at least 1")
        COMMANDS[args.command](Run(args))
    except LisInferError as e:
        if is_debug():
            log.exception(f"{args.command} failed")
        print(f"{Colors.RED}Error: {e}{Colors.RESET}", file=sys.stderr)
        sys.exit(exit_code_for(e))


if __name__ == '__main__':
    main()
