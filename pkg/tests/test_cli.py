#!/usr/bin/env python3
"""
Unit tests for lisinfer.py command-line interface
"""

import pytest
import sys
import os
import json
import numpy as np
from unittest.mock import patch

# Add parent directory to path for imports
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import config
from formats import read_chain, read_json, read_lis, read_matrix
from lisinfer import build_parser, main
from models import build_problem
from config import resolve_config

LINEAR_RUN = {
    'problem': 'linear',
    'seed': 3,
    'lis': {'subchain_len': 20, 'max_iters': 3},
    'mcmc': {'steps': 300, 'burn_in': 0.2},
    'estimate': {'max_lag': 20},
}


@pytest.fixture(autouse=True)
def isolated_user_config(tmp_path):
    with patch.object(config, 'CONFIG_FILE', tmp_path / 'no-user-config.json'):
        yield


@pytest.fixture
def run_config(tmp_path):
    path = tmp_path / 'linear.json'
    path.write_text(json.dumps(LINEAR_RUN))
    return str(path)


def run_cli(*argv):
    main(['--no-timing', *argv])


def exit_code(*argv):
    with pytest.raises(SystemExit) as exc:
        run_cli(*argv)
    return exc.value.code


class TestParser:
    """Tests for argument parsing"""

    def test_repeatable_chain_and_verbosity(self):
        args = build_parser().parse_args(['diagnose', '--chain', 'a.chn', '--chain', 'b.chn', '-vv'])
        assert args.chain == ['a.chn', 'b.chn']
        assert args.verbose == 2
        assert not args.no_timing

    def test_unknown_command(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(['plot'])


class TestBuildLis:
    """Tests for the build-lis subcommand"""

    def test_writes_artifacts(self, tmp_path, run_config):
        out = tmp_path / 'run'
        run_cli('build-lis', '--config', run_config, '--out', str(out))
        for name in ('config.json', 'truth.mat', 'data.mat', 'map.mat', 'lis.bin', 'trace.csv',
                     'eigenvalues.csv', 'lis.json'):
            assert (out / name).exists(), name
        summary = read_json(out / 'lis.json')
        assert summary['rank'] == 6
        assert summary['iterations'] == 3
        trace = (out / 'trace.csv').read_text().splitlines()
        assert trace[0] == 'iter,r,distance,hessian_evals,wall_time,acceptance,lag1'
        assert len(trace) == 5
        prior = build_problem(resolve_config(LINEAR_RUN)).problem.prior
        assert read_lis(out / 'lis.bin', prior).rank == 6

    def test_byte_reproducible(self, tmp_path, run_config):
        for name in ('a', 'b'):
            run_cli('build-lis', '--config', run_config, '--out', str(tmp_path / name))
        for name in ('lis.bin', 'trace.csv', 'eigenvalues.csv', 'lis.json', 'map.mat'):
            assert (tmp_path / 'a' / name).read_bytes() == (tmp_path / 'b' / name).read_bytes(), name

    def test_seed_override_changes_data(self, tmp_path, run_config):
        run_cli('build-lis', '--config', run_config, '--out', str(tmp_path / 'a'))
        run_cli('build-lis', '--config', run_config, '--out', str(tmp_path / 'b'), '--seed', '4')
        assert read_json(tmp_path / 'b' / 'config.json')['seed'] == 4
        assert not np.array_equal(read_matrix(tmp_path / 'a' / 'data.mat'), read_matrix(tmp_path / 'b' / 'data.mat'))


class TestPipeline:
    """build-lis, sample, estimate, diagnose and verify on the linear problem"""

    @pytest.fixture
    def lis_run(self, tmp_path, run_config):
        out = tmp_path / 'run'
        run_cli('build-lis', '--config', run_config, '--out', str(out))
        return out

    def test_subspace_chain_and_rb_estimate(self, tmp_path, run_config, lis_run):
        lis_path = str(lis_run / 'lis.bin')
        run_cli('sample', '--config', run_config, '--lis', lis_path, '--out', str(lis_run), '--chains', '2')
        chain, meta = read_chain(lis_run / 'chain_1.chn')
        assert meta['kind'] == 'subspace'
        assert meta['chain_index'] == 1
        assert chain.dim == 6 and chain.steps == 300

        est = tmp_path / 'est'
        run_cli('estimate', '--config', run_config, '--lis', lis_path, '--out', str(est),
                '--chain', str(lis_run / 'chain_0.chn'), '--chain', str(lis_run / 'chain_1.chn'))
        summary = read_json(est / 'estimate.json')
        assert summary['estimator'] == 'rao_blackwell'
        assert summary['steps'] == 2 * 240
        for name in ('mean.mat', 'variance.mat', 'mcse.mat', 'lis_variance.mat', 'cs_variance.mat', 'cov.mat'):
            assert (est / name).exists(), name
        assert read_matrix(est / 'mean.mat').shape == (20, 1)

    def test_full_chain_standard_estimate_and_diagnose(self, tmp_path, run_config, lis_run):
        full = tmp_path / 'full'
        run_cli('sample', '--config', run_config, '--out', str(full))
        _, meta = read_chain(full / 'chain_0.chn')
        assert meta['kind'] == 'full'

        run_cli('estimate', '--config', run_config, '--out', str(full), '--chain', str(full / 'chain_0.chn'))
        assert read_json(full / 'estimate.json')['estimator'] == 'standard'

        diag = tmp_path / 'diag'
        run_cli('diagnose', '--config', run_config, '--lis', str(lis_run / 'lis.bin'), '--out', str(diag),
                '--chain', str(full / 'chain_0.chn'))
        ess_rows = (diag / 'ess.csv').read_text().splitlines()
        assert ess_rows[0] == 'chain,benchmark,steps,ess,iact,ess_per_second'
        assert [row.split(',')[1] for row in ess_rows[1:]] == ['log_likelihood', 'lis_1', 'lis_3', 'lis_5']
        acf_rows = (diag / 'autocorr.csv').read_text().splitlines()
        assert len(acf_rows) == 1 + 4 * 21

    def test_verify(self, tmp_path, run_config, lis_run):
        out = tmp_path / 'verify'
        run_cli('sample', '--config', run_config, '--lis', str(lis_run / 'lis.bin'), '--out', str(lis_run))
        run_cli('verify', '--config', run_config, '--lis', str(lis_run / 'lis.bin'), '--out', str(out),
                '--chain', str(lis_run / 'chain_0.chn'))
        report = read_json(out / 'verify.json')
        assert report['adjoint'] < 1e-10
        assert report['gradient'] < 1e-5
        assert report['max_principal_angle'] < 1e-6
        assert report['chains'][0]['rows_checked'] == 3
        assert report['chains'][0]['max_rel_error'] < 1e-10

    def test_zero_step_chain(self, tmp_path, run_config, lis_run):
        path = tmp_path / 'zero.json'
        path.write_text(json.dumps({**LINEAR_RUN, 'mcmc': {'steps': 0}}))
        run_cli('sample', '--config', str(path), '--lis', str(lis_run / 'lis.bin'), '--out', str(tmp_path / 'z'))
        chain, meta = read_chain(tmp_path / 'z' / 'chain_0.chn')
        assert chain.steps == 0 and chain.dim == 6
        assert meta['steps'] == 0 and not meta['failed']

    def test_reruns_byte_identical(self, tmp_path, run_config, lis_run):
        lis_path = str(lis_run / 'lis.bin')
        for name in ('a', 'b'):
            out = tmp_path / name
            run_cli('sample', '--config', run_config, '--lis', lis_path, '--out', str(out), '--chains', '2')
            chains = ['--chain', str(tmp_path / 'a' / 'chain_0.chn'), '--chain', str(tmp_path / 'a' / 'chain_1.chn')]
            run_cli('estimate', '--config', run_config, '--lis', lis_path, '--out', str(out / 'est'), *chains)
            run_cli('diagnose', '--config', run_config, '--lis', lis_path, '--out', str(out / 'diag'), *chains)
            run_cli('verify', '--config', run_config, '--lis', lis_path, '--out', str(out / 'verify'), *chains)
        for name in ('chain_0.chn', 'chain_0.aux.mat', 'chain_0.json', 'chain_1.chn', 'chain_1.aux.mat',
                     'chain_1.json', 'est/mean.mat', 'est/variance.mat', 'est/mcse.mat', 'est/cov.mat',
                     'est/estimate.json', 'diag/autocorr.csv', 'diag/ess.csv', 'verify/verify.json'):
            assert (tmp_path / 'a' / name).read_bytes() == (tmp_path / 'b' / name).read_bytes(), name

    def test_build_lis_from_capped_chain_states(self, tmp_path, run_config):
        full = tmp_path / 'full'
        run_cli('sample', '--config', run_config, '--out', str(full))
        path = tmp_path / 'capped.json'
        path.write_text(json.dumps({**LINEAR_RUN, 'lis': {'max_iters': 1, 'chain_samples': 7}}))
        out = tmp_path / 'lis'
        run_cli('build-lis', '--config', str(path), '--out', str(out), '--chain', str(full / 'chain_0.chn'))
        summary = read_json(out / 'lis.json')
        assert summary['source'] == 'chains'
        assert summary['samples'] == 7


class TestExitCodes:
    """Tests for error reporting through exit codes"""

    def test_unknown_config_key(self, tmp_path):
        path = tmp_path / 'bad.json'
        path.write_text(json.dumps({'lis': {'tau': 1.0}}))
        assert exit_code('build-lis', '--config', str(path), '--out', str(tmp_path / 'o')) == 2

    def test_missing_config_file(self, tmp_path):
        assert exit_code('build-lis', '--config', str(tmp_path / 'none.json')) == 2

    def test_estimate_needs_chains(self, tmp_path, run_config):
        assert exit_code('estimate', '--config', run_config, '--out', str(tmp_path / 'o')) == 2

    def test_missing_chain_file(self, tmp_path, run_config, capsys):
        missing = tmp_path / 'nowhere' / 'chain_0.chn'
        assert exit_code('estimate', '--config', run_config, '--out', str(tmp_path / 'o'),
                         '--chain', str(missing)) == 2
        assert str(missing) in capsys.readouterr().err

    def test_bad_chain_count(self, tmp_path, run_config):
        assert exit_code('sample', '--config', run_config, '--out', str(tmp_path / 'o'), '--chains', '0') == 2

    def test_lis_for_other_prior(self, tmp_path, run_config):
        run_cli('build-lis', '--config', run_config, '--out', str(tmp_path / 'a'))
        other = tmp_path / 'other.json'
        other.write_text(json.dumps({**LINEAR_RUN, 'linear': {'corr_len': 0.5}}))
        code = exit_code('sample', '--config', str(other), '--lis', str(tmp_path / 'a' / 'lis.bin'),
                         '--out', str(tmp_path / 'b'))
        assert code == 2

    def test_subspace_chain_without_lis(self, tmp_path, run_config):
        run_cli('build-lis', '--config', run_config, '--out', str(tmp_path))
        run_cli('sample', '--config', run_config, '--lis', str(tmp_path / 'lis.bin'), '--out', str(tmp_path))
        code = exit_code('estimate', '--config', run_config, '--out', str(tmp_path / 'e'),
                         '--chain', str(tmp_path / 'chain_0.chn'))
        assert code == 2

    def test_chain_too_short_is_numerical(self, tmp_path):
        path = tmp_path / 'short.json'
        path.write_text(json.dumps({**LINEAR_RUN, 'mcmc': {'steps': 3}}))
        run_cli('sample', '--config', str(path), '--out', str(tmp_path))
        code = exit_code('diagnose', '--config', str(path), '--out', str(tmp_path / 'd'),
                         '--chain', str(tmp_path / 'chain_0.chn'))
        assert code == 3


if __name__ == '__main__':
    pytest.main([__file__, '-v'])
