#!/usr/bin/env python3
"""
Configuration management for lisinfer

Run settings come from a JSON run config validated against the built-in DEFAULTS tree.
Machine-level settings are resolved in this order:
1. Command-line option (passed in by the caller)
2. Environment variables
3. User config file at ~/.lisinfer/config.json
4. Built-in default
"""

import copy
import json
import math
import os
from pathlib import Path
from typing import Any, Dict, Optional

from errors import ConfigError, InputFileError
from logger import get_logger

log = get_logger(__name__)

CONFIG_FILE = Path.home() / '.lisinfer' / 'config.json'

PROBLEMS = ('elliptic', 'gomos', 'linear')


# =============================================================================
# Run config defaults
# =============================================================================

DEFAULTS: Dict[str, Any] = {
    'problem': 'elliptic',
    'seed': 0,
    'output_dir': 'runs',
    'elliptic': {
        'nx': 24,
        'ny': 8,
        'sources': 'corners',
        'plume_width': 0.05,
        'sensor_spacing': 1.0 / 3.0,
        'snr': 10.0,
        'dense_limit': 3000,
        'cache_size': 8,
    },
    'gomos': {
        'n_gas': 4,
        'n_alts': 12,
        'n_lambda': 30,
        'earth_radius': 6370.0,
        'bottom_km': 10.0,
        'top_km': 60.0,
        'tangent': 'midpoint',
        'optical_depths': [0.5, 0.05, 0.02, 1e-10],
        'mid_log_density': [27.0, 25.0, 23.0, 21.0],
        'scale_height': 15.0,
        'snr': 100.0,
    },
    'linear': {
        'n': 20,
        'd': 12,
        'eigenvalues': [100.0, 30.0, 10.0, 3.0, 1.0, 0.3],
        'noise_std': 0.1,
        'corr_len': 0.3,
    },
    'prior': {
        'sigma': 1.15,
        'corr_len': 0.18,
        'tensor': [[0.55, -0.45], [-0.45, 0.55]],
        'mean': 0.0,
        'gas_sigma': [5.22, 9.79, 23.66, 83.18],
        'gas_corr_len': 10.0,
        'gas_mean': None,
    },
    'lis': {
        'tau_loc': 0.1,
        'tau_g': None,
        'subchain_len': 200,
        'max_iters': 200,
        'chain_samples': 200,
        'dist_tol': 0.0,
        'max_hessians': None,
        'max_rank': 40,
        'oversample': 10,
        'conditional_update': False,
    },
    'map': {
        'tol': 1e-6,
        'max_iters': 50,
    },
    'mcmc': {
        'steps': 5000,
        'step_size': None,
        'adapt': True,
        'target_accept': 0.574,
        'adapt_decay': 0.6,
        'reg': 1e-8,
        'precond_every': 100,
        'burn_in': 0.5,
        'chains': 1,
        'subspace_preconditioner': 'gauss_newton',
        'full_preconditioner': 'map_hessian',
    },
    'estimate': {
        'full_cov_limit': 2000,
        'max_lag': 200,
    },
}

# Types for keys whose default is null
NULLABLE = {
    ('lis', 'tau_g'): float,
    ('lis', 'max_hessians'): int,
    ('mcmc', 'step_size'): float,
    ('prior', 'gas_mean'): list,
}

CHOICES = {
    ('problem',): PROBLEMS,
    ('elliptic', 'sources'): ('corners', 'boundary'),
    ('gomos', 'tangent'): ('midpoint', 'bottom'),
    ('mcmc', 'subspace_preconditioner'): ('gauss_newton', 'identity', 'empirical'),
    ('mcmc', 'full_preconditioner'): ('map_hessian', 'identity', 'empirical'),
}


def _type_ok(value, expected: type) -> bool:
    if expected is float:
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if expected is int:
        return isinstance(value, int) and not isinstance(value, bool)
    return isinstance(value, expected)


def _validate(tree: dict, defaults: dict, path: tuple = ()) -> dict:
    """Merge `tree` over `defaults`, rejecting unknown keys and mistyped values"""
    merged = copy.deepcopy(defaults)
    for key, value in tree.items():
        where = path + (key,)
        name = '.'.join(where)
        if key not in defaults:
            raise ConfigError(f"Unknown config key '{name}'")
        default = defaults[key]
        if isinstance(default, dict):
            if not isinstance(value, dict):
                raise ConfigError(f"Config key '{name}' must be an object")
            merged[key] = _validate(value, default, where)
            continue
        if value is None:
            if default is not None:
                raise ConfigError(f"Config key '{name}' may not be null")
        else:
            expected = NULLABLE.get(where, type(default))
            if not _type_ok(value, expected):
                raise ConfigError(
                    f"Config key '{name}' must be {expected.__name__}, got {type(value).__name__}"
                )
            if where in CHOICES and value not in CHOICES[where]:
                raise ConfigError(
                    f"Config key '{name}' must be one of {', '.join(CHOICES[where])}, got '{value}'"
                )
        merged[key] = value
    return merged


def _check_ranges(cfg: dict):
    if cfg['lis']['tau_loc'] <= 0:
        raise ConfigError("lis.tau_loc must be positive")
    if cfg['lis']['tau_g'] is not None and cfg['lis']['tau_g'] < 0:
        raise ConfigError("lis.tau_g must be non-negative")
    if not 0.0 <= cfg['mcmc']['burn_in'] < 1.0:
        raise ConfigError("mcmc.burn_in must be in [0, 1)")
    if cfg['mcmc']['chains'] < 1:
        raise ConfigError("mcmc.chains must be at least 1")
    if cfg['mcmc']['steps'] < 0:
        raise ConfigError("mcmc.steps must be non-negative")
    for section in ('elliptic', 'gomos'):
        if not math.isfinite(cfg[section]['snr']) or cfg[section]['snr'] <= 0:
            raise ConfigError(f"{section}.snr must be positive and finite")
    for section, key in (('lis', 'subchain_len'), ('lis', 'max_iters'), ('lis', 'max_rank'),
                         ('lis', 'chain_samples'), ('elliptic', 'nx'), ('elliptic', 'ny')):
        if cfg[section][key] < 1:
            raise ConfigError(f"{section}.{key} must be at least 1")


def resolve_config(tree: Optional[dict] = None) -> dict:
    """Fully resolved run config from a (partial) tree"""
    cfg = _validate(tree or {}, DEFAULTS)
    _check_ranges(cfg)
    return cfg


def load_run_config(path: Optional[str] = None, overrides: Optional[dict] = None) -> dict:
    """Read a run config file (optional) and apply command-line overrides

    Args:
        path: JSON run config; None means built-in defaults only
        overrides: top-level keys set from the command line (e.g. {'seed': 3})

    Returns:
        The fully resolved config tree
    """
    tree: dict = {}
    if path is not None:
        try:
            with open(path, 'r') as f:
                content = f.read().strip()
        except OSError as e:
            raise InputFileError(path, e.strerror or str(e)) from e
        if content:
            try:
                tree = json.loads(content)
            except json.JSONDecodeError as e:
                raise InputFileError(path, f"not valid JSON: {e}") from e
        if not isinstance(tree, dict):
            raise InputFileError(path, "top level must be a JSON object")
    tree = dict(tree)
    for key, value in (overrides or {}).items():
        if value is not None:
            tree[key] = value
    cfg = resolve_config(tree)
    log.debug(f"Resolved config for problem '{cfg['problem']}' with seed {cfg['seed']}")
    return cfg


# =============================================================================
# Machine-level settings
# =============================================================================

def _load_config() -> dict:
    """Load user config file, returns empty dict on error"""
    if not CONFIG_FILE.exists():
        return {}

    try:
        with open(CONFIG_FILE, 'r') as f:
            content = f.read().strip()
            if content:
                return json.loads(content)
    except json.JSONDecodeError as e:
        log.error(f"Config file {CONFIG_FILE} is not valid JSON: {e}")
    except Exception as e:
        log.warning(f"Unable to load config: {e}")

    return {}


def get_thread_limit() -> int:
    """Worker cap for thread pools (LISINFER_THREADS or 'threads' in the user config)

    Returns:
        Positive worker count, defaulting to the CPU count
    """
    # Priority 1: Environment variable
    env_threads = os.environ.get('LISINFER_THREADS')
    if env_threads:
        try:
            return max(int(env_threads), 1)
        except ValueError:
            raise ConfigError(f"LISINFER_THREADS must be an integer, got '{env_threads}'")

    # Priority 2: Config file
    threads = _load_config().get('threads')
    if isinstance(threads, int) and threads > 0:
        return threads

    return os.cpu_count() or 1


def get_output_dir(cli_value: Optional[str] = None, run_config: Optional[dict] = None) -> Path:
    """Run directory: --out, then LISINFER_OUTPUT_DIR, then the config files, then 'runs'"""
    if cli_value:
        return Path(cli_value)

    env_dir = os.environ.get('LISINFER_OUTPUT_DIR')
    if env_dir:
        return Path(env_dir)

    if run_config and run_config.get('output_dir') not in (None, DEFAULTS['output_dir']):
        return Path(run_config['output_dir'])

    user_dir = _load_config().get('output_dir')
    if user_dir:
        return Path(user_dir).expanduser()

    return Path(DEFAULTS['output_dir'])


def linearity_check_enabled() -> bool:
    """LISINFER_DEBUG_LINEARITY=1 (or 'debug_linearity' in the user config)"""
    env_flag = os.environ.get('LISINFER_DEBUG_LINEARITY')
    if env_flag is not None:
        return env_flag.strip().lower() in ('1', 'true', 'yes', 'on')
    return bool(_load_config().get('debug_linearity', False))
