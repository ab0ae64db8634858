#!/usr/bin/env python3
"""
Artifact formats for lisinfer run directories

All binary artifacts are little-endian: a 4-byte magic, `<u8` header fields, then
row-major `<f8` payloads. JSON is written sorted and indented, CSV with round-trippable
floats.
"""

import hashlib
import json
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from common import format_float
from errors import ArtifactMismatch, InputFileError
from lis import GlobalLis, make_global_lis
from logger import get_logger
from mcmc import Chain
from prior import GaussianPrior

log = get_logger(__name__)

PathLike = Union[str, Path]


# =============================================================================
# Magic numbers
# =============================================================================

MATRIX_MAGIC = b"MAT1"
CHAIN_MAGIC = b"CHN1"
LIS_MAGIC = b"LIS1"

# Columns of the per-step companion matrix of a chain
AUX_COLUMNS = ('log_post', 'log_likelihood', 'accepted', 'step_size', 'wall_time')

HASH_BYTES = 32


# =============================================================================
# Low-level helpers
# =============================================================================

def _header(*fields: int) -> bytes:
    return np.asarray(fields, dtype='<u8').tobytes()


def _payload(mat: np.ndarray) -> bytes:
    return np.ascontiguousarray(mat, dtype='<f8').tobytes()


def _read_bytes(path: PathLike) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as e:
        raise InputFileError(path, e.strerror or str(e)) from e


class _Reader:
    """Sequential reader over an artifact's bytes with truncation checks"""

    def __init__(self, path: PathLike, data: bytes, magic: bytes):
        self.path = path
        self.data = data
        if data[:4] != magic:
            raise InputFileError(path, f"expected magic {magic.decode()}, found {data[:4]!r}")
        self.offset = 4

    def take(self, nbytes: int) -> bytes:
        end = self.offset + nbytes
        if end > len(self.data):
            raise InputFileError(self.path, "file is truncated")
        chunk = self.data[self.offset:end]
        self.offset = end
        return chunk

    def ints(self, count: int) -> List[int]:
        return [int(v) for v in np.frombuffer(self.take(8 * count), dtype='<u8')]

    def floats(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * count), dtype='<f8').astype(float)

    def finish(self):
        if self.offset != len(self.data):
            raise InputFileError(self.path, f"{len(self.data) - self.offset} trailing bytes")


# =============================================================================
# MAT1
# =============================================================================

def write_matrix(path: PathLike, mat: np.ndarray):
    mat = np.asarray(mat, dtype=float)
    if mat.ndim == 1:
        mat = mat[:, None]
    Path(path).write_bytes(MATRIX_MAGIC + _header(*mat.shape) + _payload(mat))


def read_matrix(path: PathLike) -> np.ndarray:
    reader = _Reader(path, _read_bytes(path), MATRIX_MAGIC)
    rows, cols = reader.ints(2)
    mat = reader.floats(rows * cols).reshape(rows, cols)
    reader.finish()
    return mat


# =============================================================================
# JSON / CSV
# =============================================================================

def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"cannot serialize {type(value).__name__}")


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + '\n'


def write_json(path: PathLike, obj):
    Path(path).write_text(dump_json(obj))


def read_json(path: PathLike) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise InputFileError(path, e.strerror or str(e)) from e
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise InputFileError(path, f"not valid JSON: {e}") from e


def _cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format_float(float(value))
    return str(value)


def write_csv(path: PathLike, header: Sequence[str], rows: Iterable[Sequence]):
    lines = [','.join(header)]
    lines.extend(','.join(_cell(v) for v in row) for row in rows)
    Path(path).write_text('\n'.join(lines) + '\n')


# =============================================================================
# CHN1
# =============================================================================

def chain_paths(path: PathLike) -> Tuple[Path, Path, Path]:
    """(states, per-step companion, sidecar) for a chain file like chain_0.chn"""
    path = Path(path)
    stem = path.with_suffix('')
    return path, stem.with_name(stem.name + '.aux.mat'), stem.with_suffix('.json')


def chain_summary(chain: Chain) -> dict:
    summary = {
        'dim': chain.dim,
        'steps': chain.steps,
        'acceptance_rate': chain.acceptance_rate,
        'failed': chain.failed,
        'message': chain.message,
        'seed': chain.seed,
    }
    if chain.steps:
        summary['log_post_mean'] = float(np.mean(chain.log_post))
        summary['log_post_std'] = float(np.std(chain.log_post))
        summary['final_step_size'] = float(chain.step_sizes[-1])
    return summary


def write_chain(path: PathLike, chain: Chain, meta: Optional[dict] = None):
    """States as CHN1, per-step values as MAT1, and a JSON sidecar"""
    states_path, aux_path, meta_path = chain_paths(path)
    states_path.write_bytes(CHAIN_MAGIC + _header(chain.dim, chain.steps) + _payload(chain.states))
    aux = np.column_stack([chain.log_post, chain.log_like, chain.accepted.astype(float),
                           chain.step_sizes, chain.wall_times]) if chain.steps else np.zeros((0, len(AUX_COLUMNS)))
    write_matrix(aux_path, aux)
    sidecar = chain_summary(chain)
    sidecar['aux_columns'] = list(AUX_COLUMNS)
    sidecar.update(meta or {})
    write_json(meta_path, sidecar)


def read_chain(path: PathLike) -> Tuple[Chain, dict]:
    states_path, aux_path, meta_path = chain_paths(path)
    reader = _Reader(states_path, _read_bytes(states_path), CHAIN_MAGIC)
    dim, steps = reader.ints(2)
    states = reader.floats(dim * steps).reshape(steps, dim)
    reader.finish()

    meta = read_json(meta_path) if meta_path.exists() else {}
    if aux_path.exists():
        aux = read_matrix(aux_path)
        if aux.shape != (steps, len(AUX_COLUMNS)):
            raise InputFileError(aux_path, f"shape {aux.shape} does not match a {steps}-step chain")
    else:
        log.debug(f"No companion file for {states_path}; per-step values set to NaN")
        aux = np.full((steps, len(AUX_COLUMNS)), np.nan)
        aux[:, 2] = 0.0
    chain = Chain(
        states=states, log_post=aux[:, 0], log_like=aux[:, 1], accepted=aux[:, 2] > 0.5,
        step_sizes=aux[:, 3], wall_times=aux[:, 4],
        failed=bool(meta.get('failed', False)), message=str(meta.get('message', '')), seed=meta.get('seed'),
    )
    return chain, meta


# =============================================================================
# LIS1
# =============================================================================

def prior_hashes(prior: GaussianPrior) -> Tuple[bytes, bytes]:
    """SHA-256 of the prior mean and covariance as little-endian doubles"""
    return (hashlib.sha256(_payload(prior.mean)).digest(),
            hashlib.sha256(_payload(prior.cov)).digest())


def prior_fingerprint(prior: GaussianPrior) -> Dict[str, str]:
    mean_hash, cov_hash = prior_hashes(prior)
    return {'prior_mean_sha256': mean_hash.hex(), 'prior_cov_sha256': cov_hash.hex()}


def write_lis(path: PathLike, lis: GlobalLis):
    mean_hash, cov_hash = prior_hashes(lis.prior)
    Path(path).write_bytes(
        LIS_MAGIC + _header(lis.dim, lis.rank, lis.sample_count)
        + _payload(lis.psi) + _payload(lis.gamma) + mean_hash + cov_hash
    )


def read_lis(path: PathLike, prior: GaussianPrior) -> GlobalLis:
    """Load a LIS and bind it to `prior`; the stored prior hashes must match"""
    reader = _Reader(path, _read_bytes(path), LIS_MAGIC)
    n, r, m = reader.ints(3)
    psi = reader.floats(n * r).reshape(n, r)
    gamma = reader.floats(r)
    mean_hash, cov_hash = reader.take(HASH_BYTES), reader.take(HASH_BYTES)
    reader.finish()

    if n != prior.dim:
        raise ArtifactMismatch(f"{path}: LIS dimension {n} does not match the configured prior ({prior.dim})")
    expected_mean, expected_cov = prior_hashes(prior)
    if mean_hash != expected_mean or cov_hash != expected_cov:
        raise ArtifactMismatch(f"{path}: LIS was built for a different prior")
    return make_global_lis(psi, gamma, prior, m)
