#!/usr/bin/env python3
"""
Built-in benchmark problems

- EllipticModel: groundwater pressure from log-permeability on [0,3]x[0,1]
  (bilinear finite elements, zero-flux boundary, zero-mean boundary pressure)
- GomosModel: stellar occultation transmissions through spherical layers (Beer's law)
- LinearModel: dense matrix forward map with a prescribed whitened Hessian spectrum

plus synthetic data generation and the problem builders used by the CLI.
"""

import threading
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from common import derive_seed
from errors import ConfigError, ForwardSolveFailed, RadiiNotAscending
from logger import get_logger
from model import ForwardModel, ForwardProblem
from prior import AnisoExpKernel, GaussianPrior, SqExpKernel, build_block_prior, build_prior, sample

log = get_logger(__name__)


# =============================================================================
# Linear model
# =============================================================================

class LinearModel(ForwardModel):
    def __init__(self, matrix: np.ndarray):
        self.matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
        self.dim_obs, self.dim_param = self.matrix.shape

    def apply(self, x):
        return self.matrix @ x

    def jac_apply(self, x, v):
        return self.matrix @ v

    def jac_adjoint(self, x, w):
        return self.matrix.T @ w

    def jacobian(self, x):
        return self.matrix.copy()


# =============================================================================
# Elliptic model
# =============================================================================

# Q1 reference stiffness parts, local node order (0,0), (1,0), (1,1), (0,1)
_KX = np.array([[2, -2, -1, 1],
                [-2, 2, 1, -1],
                [-1, 1, 2, -2],
                [1, -1, -2, 2]], dtype=float)
_KY = np.array([[2, 1, -1, -2],
                [1, 2, -2, -1],
                [-1, -2, 2, 1],
                [-2, -1, 1, 2]], dtype=float)

_GAUSS_PTS = np.array([-1.0, 1.0]) / np.sqrt(3.0)


@dataclass(frozen=True)
class Plume:
    """Gaussian source (weight > 0) or sink (weight < 0)"""
    center: Tuple[float, float]
    width: float
    weight: float

    def __call__(self, points: np.ndarray) -> np.ndarray:
        d2 = np.sum((points - np.asarray(self.center)) ** 2, axis=-1)
        return self.weight * np.exp(-d2 / (2.0 * self.width ** 2))


def corner_plumes(length: float = 3.0, height: float = 1.0, width: float = 0.05) -> List[Plume]:
    corners = [(0.0, 0.0), (length, 0.0), (length, height), (0.0, height)]
    return [Plume(c, width, w) for c, w in zip(corners, (1.0, 2.0, 3.0, -6.0))]


def boundary_plumes(length: float = 3.0, height: float = 1.0, width: float = 0.05,
                    spacing: float = 0.5) -> List[Plume]:
    """Unit sources every `spacing` along the boundary, two sinks of weight 3.5"""
    perimeter = 2 * (length + height)
    plumes = []
    for arc in np.arange(0.0, perimeter - 1e-12, spacing):
        if arc <= length:
            c = (arc, 0.0)
        elif arc <= length + height:
            c = (length, arc - length)
        elif arc <= 2 * length + height:
            c = (2 * length + height - arc, height)
        else:
            c = (0.0, perimeter - arc)
        plumes.append(Plume(c, width, 1.0))
    plumes.append(Plume((0.5, 1.0), width, -3.5))
    plumes.append(Plume((2.0, 0.5), width, -3.5))
    return plumes


def sensor_grid(spacing: float, length: float = 3.0, height: float = 1.0) -> np.ndarray:
    """Evenly spaced sensors over [0,1]x[0,height] and [length-1,length]x[0,height]"""
    count = int(round(1.0 / spacing)) + 1
    ticks = np.linspace(0.0, 1.0, count)
    ys = np.linspace(0.0, height, int(round(height / spacing)) + 1)
    points = []
    for x0 in (0.0, length - 1.0):
        for y in ys:
            for t in ticks:
                points.append((x0 + t, y))
    return np.array(points)


@dataclass
class _SolveState:
    kappa: np.ndarray
    solve: Callable[[np.ndarray], np.ndarray]
    pressure: np.ndarray
    local_flux: np.ndarray      # K_ref p_e per element, shape (ne, 4)


class EllipticModel(ForwardModel):
    """-div(exp(x) grad p) = f on [0,length]x[0,height] with per-element log-permeability x

    The zero-mean boundary condition is imposed with a Lagrange multiplier row, so the
    augmented system stays symmetric. Factorizations are cached per parameter vector.
    """

    def __init__(
        self,
        nx: int,
        ny: int,
        sensors: Optional[np.ndarray] = None,
        sources: Optional[Sequence[Plume]] = None,
        source_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        length: float = 3.0,
        height: float = 1.0,
        dense_limit: int = 3000,
        cache_size: int = 8,
    ):
        self.nx, self.ny = nx, ny
        self.length, self.height = length, height
        self.hx, self.hy = length / nx, height / ny
        self.dense_limit = dense_limit
        self._cache_size = max(1, cache_size)
        self._cache: "OrderedDict[bytes, _SolveState]" = OrderedDict()
        self._lock = threading.Lock()

        xs = np.linspace(0.0, length, nx + 1)
        ys = np.linspace(0.0, height, ny + 1)
        gx, gy = np.meshgrid(xs, ys)
        self.nodes = np.column_stack([gx.ravel(), gy.ravel()])
        self.n_nodes = len(self.nodes)

        ii, jj = np.meshgrid(np.arange(nx), np.arange(ny))
        base = (jj * (nx + 1) + ii).ravel()
        self.conn = np.column_stack([base, base + 1, base + nx + 2, base + nx + 1])
        self.centers = np.column_stack([
            ((ii + 0.5) * self.hx).ravel(),
            ((jj + 0.5) * self.hy).ravel(),
        ])

        self.k_ref = self.hy / (6.0 * self.hx) * _KX + self.hx / (6.0 * self.hy) * _KY
        self.boundary_mass = self._boundary_mass()
        if source_fn is None:
            plumes = list(sources) if sources is not None else corner_plumes(length, height)
            source_fn = lambda pts: np.sum([p(pts) for p in plumes], axis=0)
        self.load = self._load_vector(source_fn)

        if sensors is None:
            sensors = sensor_grid(1.0 / 3.0, length, height)
        self.sensors = np.asarray(sensors, dtype=float)
        d2 = np.sum((self.sensors[:, None, :] - self.nodes[None, :, :]) ** 2, axis=-1)
        self.sensor_nodes = np.argmin(d2, axis=1)

        self.dim_param = nx * ny
        self.dim_obs = len(self.sensor_nodes)

        rows = np.repeat(self.conn, 4, axis=1).ravel()
        cols = np.tile(self.conn, (1, 4)).ravel()
        self._triplet_index = (rows, cols)

    # -- assembly ------------------------------------------------------------

    def _boundary_mass(self) -> np.ndarray:
        """∫_{∂Ω} φ_i ds by the trapezoid rule on boundary edges"""
        c = np.zeros(self.n_nodes)
        nx, ny = self.nx, self.ny
        bottom = np.arange(nx + 1)
        top = ny * (nx + 1) + np.arange(nx + 1)
        left = np.arange(ny + 1) * (nx + 1)
        right = left + nx
        for edge_nodes, h in ((bottom, self.hx), (top, self.hx), (left, self.hy), (right, self.hy)):
            np.add.at(c, edge_nodes[:-1], 0.5 * h)
            np.add.at(c, edge_nodes[1:], 0.5 * h)
        return c

    def _load_vector(self, source_fn) -> np.ndarray:
        """2x2 Gauss quadrature of ∫ f φ_i, made compatible by removing its area-weighted mean"""
        f = np.zeros(self.n_nodes)
        mass = np.zeros(self.n_nodes)
        weight = 0.25 * self.hx * self.hy
        corners = self.nodes[self.conn[:, 0]]
        for gx in _GAUSS_PTS:
            for gy in _GAUSS_PTS:
                u, v = 0.5 * (gx + 1.0), 0.5 * (gy + 1.0)
                shape = np.array([(1 - u) * (1 - v), u * (1 - v), u * v, (1 - u) * v])
                pts = corners + np.array([u * self.hx, v * self.hy])
                vals = source_fn(pts)
                np.add.at(f, self.conn, weight * vals[:, None] * shape[None, :])
                np.add.at(mass, self.conn, weight * np.broadcast_to(shape, self.conn.shape))
        return f - mass * (f.sum() / mass.sum())

    def stiffness(self, kappa: np.ndarray) -> sp.csr_matrix:
        """Global stiffness matrix from COO triplets"""
        vals = (kappa[:, None, None] * self.k_ref[None, :, :]).ravel()
        rows, cols = self._triplet_index
        return sp.coo_matrix((vals, (rows, cols)), shape=(self.n_nodes, self.n_nodes)).tocsr()

    def augmented_system(self, kappa: np.ndarray) -> sp.csc_matrix:
        c = self.boundary_mass[:, None]
        return sp.bmat([[self.stiffness(kappa), c], [c.T, None]], format='csc')

    # -- solves --------------------------------------------------------------

    def _factorize(self, x: np.ndarray) -> _SolveState:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim_param,):
            raise ForwardSolveFailed(f"expected {self.dim_param} log-permeabilities, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ForwardSolveFailed("log-permeability contains non-finite values")

        key = x.tobytes()
        with self._lock:
            state = self._cache.get(key)
            if state is not None:
                self._cache.move_to_end(key)
                return state

        kappa = np.exp(x)
        system = self.augmented_system(kappa)
        try:
            if system.shape[0] <= self.dense_limit:
                lu = sla.lu_factor(system.toarray(), check_finite=False)
                solve = lambda b: sla.lu_solve(lu, b, check_finite=False)
            else:
                solve = spla.splu(system).solve
        except (sla.LinAlgError, RuntimeError) as e:
            raise ForwardSolveFailed(f"pressure system factorization failed: {e}") from e

        rhs = np.append(self.load, 0.0)
        sol = solve(rhs)
        if not np.all(np.isfinite(sol)):
            raise ForwardSolveFailed("pressure solve produced non-finite values")
        pressure = sol[:-1]
        state = _SolveState(kappa=kappa, solve=solve, pressure=pressure,
                            local_flux=pressure[self.conn] @ self.k_ref.T)

        with self._lock:
            self._cache[key] = state
            while len(self._cache) > self._cache_size:
                self._cache.popitem(last=False)
        return state

    def solve_pressure(self, x: np.ndarray) -> np.ndarray:
        return self._factorize(x).pressure.copy()

    def system_residual(self, x: np.ndarray) -> float:
        """Relative residual of the augmented FEM system at the computed pressure"""
        state = self._factorize(x)
        system = self.augmented_system(state.kappa)
        sol = state.solve(np.append(self.load, 0.0))
        rhs = np.append(self.load, 0.0)
        return float(np.linalg.norm(system @ sol - rhs) / max(np.linalg.norm(rhs), np.finfo(float).tiny))

    def boundary_integral(self, pressure: np.ndarray) -> float:
        return float(self.boundary_mass @ pressure)

    # -- ForwardModel --------------------------------------------------------

    def apply(self, x):
        return self._factorize(x).pressure[self.sensor_nodes].copy()

    def jac_apply(self, x, v):
        """Tangent solve: A δp = -Σ_e v_e κ_e K_ref p_e"""
        state = self._factorize(x)
        local = -(np.asarray(v, dtype=float) * state.kappa)[:, None] * state.local_flux
        rhs = np.zeros(self.n_nodes + 1)
        np.add.at(rhs, self.conn, local)
        return state.solve(rhs)[:-1][self.sensor_nodes]

    def jac_adjoint(self, x, w):
        """Adjoint solve A z = Mᵀw, then (Jᵀw)_e = -κ_e z_eᵀ K_ref p_e"""
        state = self._factorize(x)
        rhs = np.zeros(self.n_nodes + 1)
        np.add.at(rhs, self.sensor_nodes, np.asarray(w, dtype=float))
        z = state.solve(rhs)[:-1]
        return -state.kappa * np.einsum('ea,ea->e', z[self.conn], state.local_flux)


# =============================================================================
# GOMOS model
# =============================================================================

def gomos_geometry(layer_radii, tangent: str = 'midpoint') -> np.ndarray:
    """Chord lengths A[line][layer] of each line of sight through each spherical shell

    Line j is tangent at the midpoint (or bottom) of layer j, so it only crosses
    layers at or above j and A is zero below the diagonal.
    """
    radii = np.asarray(layer_radii, dtype=float)
    if radii.ndim != 1 or len(radii) < 2:
        raise RadiiNotAscending("need at least two layer radii")
    if np.any(radii <= 0) or np.any(np.diff(radii) <= 0):
        raise RadiiNotAscending(f"layer radii must be positive and strictly ascending: {radii.tolist()}")
    if tangent == 'midpoint':
        r_tan = 0.5 * (radii[:-1] + radii[1:])
    elif tangent == 'bottom':
        r_tan = radii[:-1].copy()
    else:
        raise ConfigError(f"unknown tangent placement '{tangent}'")

    inner, outer = radii[:-1], radii[1:]
    rt2 = r_tan[:, None] ** 2
    chord_out = np.sqrt(np.maximum(outer[None, :] ** 2 - rt2, 0.0))
    chord_in = np.sqrt(np.maximum(inner[None, :] ** 2 - rt2, 0.0))
    A = 2.0 * (chord_out - chord_in)
    A[outer[None, :] <= r_tan[:, None]] = 0.0
    return A


class GomosModel(ForwardModel):
    """Transmissions T = exp(-C Bᵀ Aᵀ), observed as vec(T)

    x holds log-densities gas-major (all altitudes of gas 1, then gas 2, ...);
    B = exp(x) reshaped to n_alts x n_gas.
    """

    EXP_CLAMP = 700.0

    def __init__(self, cross_sections: np.ndarray, geometry: np.ndarray):
        self.C = np.asarray(cross_sections, dtype=float)
        self.A = np.asarray(geometry, dtype=float)
        self.n_lambda, self.n_gas = self.C.shape
        self.n_alts = self.A.shape[0]
        self.dim_param = self.n_gas * self.n_alts
        self.dim_obs = self.n_lambda * self.n_alts

    def densities_t(self, x: np.ndarray) -> np.ndarray:
        """Bᵀ, shape n_gas x n_alts"""
        x = np.asarray(x, dtype=float)
        if np.any(x > self.EXP_CLAMP):
            log.warning(f"log-density above {self.EXP_CLAMP:g} clamped to avoid overflow")
            x = np.minimum(x, self.EXP_CLAMP)
        return np.exp(x).reshape(self.n_gas, self.n_alts)

    def transmissions(self, x: np.ndarray) -> np.ndarray:
        """T, shape n_lambda x n_alts"""
        return np.exp(-self.C @ self.densities_t(x) @ self.A.T)

    def apply(self, x):
        return self.transmissions(x).ravel(order='F')

    def jac_apply(self, x, v):
        bt = self.densities_t(x)
        T = np.exp(-self.C @ bt @ self.A.T)
        dbt = bt * np.asarray(v, dtype=float).reshape(self.n_gas, self.n_alts)
        return (-T * (self.C @ dbt @ self.A.T)).ravel(order='F')

    def jac_adjoint(self, x, w):
        bt = self.densities_t(x)
        T = np.exp(-self.C @ bt @ self.A.T)
        W = np.asarray(w, dtype=float).reshape(self.n_alts, self.n_lambda).T
        return (bt * (self.C.T @ (-T * W) @ self.A)).ravel()

    def jacobian(self, x):
        """Dense -diag(vec T) (A⊗C) diag(vec Bᵀ), columns permuted to gas-major order"""
        bt = self.densities_t(x)
        t_vec = np.exp(-self.C @ bt @ self.A.T).ravel(order='F')
        kron = np.kron(self.A, self.C)
        J_alt_major = -t_vec[:, None] * kron * bt.ravel(order='F')[None, :]
        src = np.arange(self.dim_param).reshape(self.n_alts, self.n_gas).T.ravel()
        return J_alt_major[:, src]


def synthetic_cross_sections(n_lambda: int, n_gas: int, seed: int, bumps: int = 3) -> np.ndarray:
    """Smooth positive spectra: per gas a sum of Gaussians in wavelength with distinct centers"""
    rng = np.random.default_rng(seed)
    grid = np.linspace(0.0, 1.0, n_lambda)
    C = np.empty((n_lambda, n_gas))
    for g in range(n_gas):
        centers = (g + rng.uniform(0.1, 0.9, bumps)) / n_gas
        widths = rng.uniform(0.05, 0.2, bumps)
        amps = rng.uniform(0.5, 1.5, bumps)
        C[:, g] = 1e-3 + np.sum(amps * np.exp(-(grid[:, None] - centers) ** 2 / (2 * widths ** 2)), axis=1)
    return C


# =============================================================================
# Synthetic data
# =============================================================================

@dataclass(frozen=True)
class SyntheticData:
    data: np.ndarray
    sigma: float
    noise_free: np.ndarray
    seed: int


def synth_data(model: ForwardModel, true_x: np.ndarray, snr: float, seed: int) -> SyntheticData:
    """data = G(true_x) + N(0, σ² I) with σ = max|G(true_x)| / snr"""
    if not snr > 0:
        raise ConfigError(f"snr must be positive, got {snr}")
    clean = model.apply(true_x)
    sigma = float(np.max(np.abs(clean)) / snr) if np.isfinite(snr) else 0.0
    noise = np.random.default_rng(seed).standard_normal(len(clean))
    return SyntheticData(data=clean + sigma * noise, sigma=sigma, noise_free=clean, seed=seed)


# =============================================================================
# Problem builders
# =============================================================================

@dataclass
class ProblemSetup:
    """A ready-to-run inverse problem plus the metadata written next to its outputs"""
    kind: str
    problem: ForwardProblem
    true_x: np.ndarray
    sigma: float
    grid_shape: Tuple[int, ...]
    labels: Dict[str, object] = field(default_factory=dict)


def elliptic_prior(model: EllipticModel, prior_cfg: dict) -> GaussianPrior:
    kernel = AnisoExpKernel(
        sigma=prior_cfg['sigma'],
        corr_len=prior_cfg['corr_len'],
        tensor=tuple(tuple(row) for row in prior_cfg['tensor']),
    )
    return build_prior(model.centers, kernel, prior_cfg['mean'])


def build_elliptic_problem(cfg: dict, seed: int) -> ProblemSetup:
    ecfg, pcfg = cfg['elliptic'], cfg['prior']
    layout = ecfg['sources']
    if layout == 'corners':
        plumes = corner_plumes(width=ecfg['plume_width'])
    elif layout == 'boundary':
        plumes = boundary_plumes(width=ecfg['plume_width'])
    else:
        raise ConfigError(f"unknown elliptic source layout '{layout}'")

    model = EllipticModel(
        ecfg['nx'], ecfg['ny'],
        sensors=sensor_grid(ecfg['sensor_spacing']),
        sources=plumes,
        dense_limit=ecfg['dense_limit'],
        cache_size=ecfg['cache_size'],
    )
    prior = elliptic_prior(model, pcfg)
    true_x = sample(prior, derive_seed(seed, 'truth'), 1)[:, 0]
    synth = synth_data(model, true_x, ecfg['snr'], derive_seed(seed, 'noise'))
    problem = ForwardProblem(model, prior, np.full(model.dim_obs, synth.sigma ** 2), synth.data)
    log.info(f"Elliptic problem: {ecfg['nx']}x{ecfg['ny']} elements, {model.dim_obs} sensors, "
             f"noise sigma {synth.sigma:.4g}")
    return ProblemSetup('elliptic', problem, true_x, synth.sigma, (ecfg['ny'], ecfg['nx']),
                        {'sensors': int(model.dim_obs), 'sources': layout})


def build_gomos_problem(cfg: dict, seed: int) -> ProblemSetup:
    gcfg, pcfg = cfg['gomos'], cfg['prior']
    n_gas, n_alts = gcfg['n_gas'], gcfg['n_alts']
    if len(pcfg['gas_sigma']) != n_gas or len(gcfg['optical_depths']) != n_gas \
            or len(gcfg['mid_log_density']) != n_gas:
        raise ConfigError(f"per-gas lists must all have {n_gas} entries")

    edges = np.linspace(gcfg['bottom_km'], gcfg['top_km'], n_alts + 1)
    altitudes = 0.5 * (edges[:-1] + edges[1:])
    A = gomos_geometry(gcfg['earth_radius'] + edges, gcfg['tangent'])

    mid = np.asarray(gcfg['mid_log_density'], dtype=float)
    z_mid = 0.5 * (gcfg['bottom_km'] + gcfg['top_km'])
    true_x = (mid[:, None] - (altitudes[None, :] - z_mid) / gcfg['scale_height']).ravel()

    C = synthetic_cross_sections(gcfg['n_lambda'], n_gas, derive_seed(seed, 'cross_sections'))
    # Scale each gas so the line tangent mid-profile sees the configured mean optical depth
    mid_line = n_alts // 2
    columns = (A @ np.exp(true_x).reshape(n_gas, n_alts).T)[mid_line]
    C *= np.asarray(gcfg['optical_depths'], dtype=float) / (C.mean(axis=0) * columns)

    model = GomosModel(C, A)
    means = pcfg['gas_mean'] if pcfg['gas_mean'] is not None else mid.tolist()
    prior = build_block_prior([
        (altitudes, SqExpKernel(sigma=pcfg['gas_sigma'][g], corr_len=pcfg['gas_corr_len']), means[g])
        for g in range(n_gas)
    ])
    synth = synth_data(model, true_x, gcfg['snr'], derive_seed(seed, 'noise'))
    problem = ForwardProblem(model, prior, np.full(model.dim_obs, synth.sigma ** 2), synth.data)
    log.info(f"GOMOS problem: {n_gas} gases x {n_alts} layers, {gcfg['n_lambda']} wavelengths")
    return ProblemSetup('gomos', problem, true_x, synth.sigma, (n_gas, n_alts),
                        {'altitudes_km': altitudes.tolist()})


def make_linear_problem(n: int = 20, d: int = 12, eigenvalues: Sequence[float] = (100.0, 30.0, 10.0, 3.0, 1.0, 0.3),
                        noise_std: float = 0.1, corr_len: float = 0.3, mean: float = 0.0,
                        seed: int = 0) -> ProblemSetup:
    """Linear problem whose whitened Hessian LᵀHL has exactly the given nonzero spectrum

    G = Γ_obs^{1/2} Q diag(√λ) Vᵀ L⁻¹ with random orthonormal Q (d×k) and V (n×k).
    """
    eigenvalues = np.asarray(eigenvalues, dtype=float)
    k = len(eigenvalues)
    if k > min(n, d):
        raise ConfigError(f"{k} eigenvalues do not fit a {d}x{n} operator")

    grid = np.column_stack([np.linspace(0.0, 1.0, n), np.zeros(n)])
    prior = build_prior(grid, AnisoExpKernel(sigma=1.0, corr_len=corr_len), mean)

    rng = np.random.default_rng(derive_seed(seed, 'operator'))
    Q, _ = np.linalg.qr(rng.standard_normal((d, k)))
    V, _ = np.linalg.qr(rng.standard_normal((n, k)))
    core = (Q * np.sqrt(eigenvalues)) @ V.T
    G = noise_std * prior.factor.solve_t(core.T).T
    model = LinearModel(G)

    true_x = sample(prior, derive_seed(seed, 'truth'), 1)[:, 0]
    noise = np.random.default_rng(derive_seed(seed, 'noise')).standard_normal(d)
    data = G @ true_x + noise_std * noise
    problem = ForwardProblem(model, prior, np.full(d, noise_std ** 2), data)
    return ProblemSetup('linear', problem, true_x, noise_std, (n,),
                        {'eigenvalues': eigenvalues.tolist()})


def build_linear_problem(cfg: dict, seed: int) -> ProblemSetup:
    lcfg = cfg['linear']
    return make_linear_problem(
        n=lcfg['n'], d=lcfg['d'], eigenvalues=lcfg['eigenvalues'],
        noise_std=lcfg['noise_std'], corr_len=lcfg['corr_len'],
        mean=cfg['prior']['mean'], seed=seed,
    )


BUILDERS = {
    'elliptic': build_elliptic_problem,
    'gomos': build_gomos_problem,
    'linear': build_linear_problem,
}


def build_problem(cfg: dict) -> ProblemSetup:
    kind = cfg['problem']
    if kind not in BUILDERS:
        raise ConfigError(f"unknown problem '{kind}', expected one of {sorted(BUILDERS)}")
    return BUILDERS[kind](cfg, cfg['seed'])
