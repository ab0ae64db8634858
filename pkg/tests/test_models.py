#!/usr/bin/env python3
"""
Unit tests for models.py module
"""

import pytest
import sys
import os
import numpy as np

# Add parent directory to path for imports
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from errors import ConfigError, ForwardSolveFailed, RadiiNotAscending
from model import check_adjoint, check_gradient, check_jacobian, log_posterior_and_grad
from models import (
    EllipticModel, GomosModel, Plume, boundary_plumes, build_problem, corner_plumes, gomos_geometry,
    sensor_grid, synth_data, synthetic_cross_sections,
)
from tests.fixtures.problems import linear_setup, small_elliptic_setup, small_gomos_setup


class TestSourcesAndSensors:
    """Tests for source layouts and sensor grids"""

    def test_corner_plumes(self):
        plumes = corner_plumes()
        assert [p.weight for p in plumes] == [1.0, 2.0, 3.0, -6.0]
        assert plumes[2].center == (3.0, 1.0)

    def test_boundary_plumes(self):
        plumes = boundary_plumes()
        sources = [p for p in plumes if p.weight > 0]
        sinks = [p for p in plumes if p.weight < 0]
        assert len(sources) == 16
        assert [s.center for s in sinks] == [(0.5, 1.0), (2.0, 0.5)]
        assert all(s.weight == -3.5 for s in sinks)

    def test_plume_peak(self):
        plume = Plume((1.0, 0.5), 0.05, 2.0)
        assert plume(np.array([[1.0, 0.5]]))[0] == pytest.approx(2.0)

    @pytest.mark.parametrize('spacing,count', [(1 / 3, 32), (1 / 6, 98), (1 / 12, 338), (1 / 24, 1250)])
    def test_sensor_counts(self, spacing, count):
        assert len(sensor_grid(spacing)) == count

    def test_sensors_in_observed_regions(self):
        pts = sensor_grid(1 / 6)
        left = pts[:, 0] <= 1.0
        right = pts[:, 0] >= 2.0
        assert np.all(left | right)


class TestEllipticModel:
    """Tests for the FEM pressure model and its derivatives"""

    @pytest.fixture
    def model(self):
        return EllipticModel(6, 2)

    def test_dimensions(self, model):
        assert model.dim_param == 12
        assert model.dim_obs == 32
        assert model.n_nodes == 21

    def test_load_is_compatible(self, model):
        # Zero total load so the Lagrange multiplier vanishes
        assert abs(model.load.sum()) < 1e-12 * np.abs(model.load).sum()
        x = np.zeros(model.dim_param)
        state = model._factorize(x)
        sol = state.solve(np.append(model.load, 0.0))
        assert abs(sol[-1]) < 1e-8 * max(np.abs(sol[:-1]).max(), 1.0)

    def test_zero_mean_boundary(self, model):
        x = np.random.default_rng(0).standard_normal(model.dim_param)
        p = model.solve_pressure(x)
        assert abs(model.boundary_integral(p)) < 1e-10 * np.abs(p).max()
        assert model.system_residual(x) < 1e-10

    def test_constant_permeability_scaling(self, model):
        x = np.zeros(model.dim_param)
        np.testing.assert_allclose(model.apply(x + np.log(2.0)), 0.5 * model.apply(x), rtol=1e-10, atol=1e-14)

    def test_adjoint_and_jacobian(self, model):
        rng = np.random.default_rng(1)
        for k in range(3):
            x = 0.5 * rng.standard_normal(model.dim_param)
            assert check_adjoint(model, x, seed=k) < 1e-8
            assert check_jacobian(model, x, seed=k) < 1e-5

    def test_dense_jacobian_matches_actions(self, model):
        x = np.random.default_rng(2).standard_normal(model.dim_param) * 0.3
        J = model.jacobian(x)
        v = np.random.default_rng(3).standard_normal(model.dim_param)
        np.testing.assert_allclose(J @ v, model.jac_apply(x, v), rtol=1e-8, atol=1e-12)

    def test_sparse_path_matches_dense(self):
        dense = EllipticModel(6, 2, dense_limit=10 ** 6)
        sparse = EllipticModel(6, 2, dense_limit=0)
        x = np.random.default_rng(4).standard_normal(12) * 0.3
        np.testing.assert_allclose(sparse.apply(x), dense.apply(x), rtol=1e-10, atol=1e-12)

    def test_cache_bounded(self):
        model = EllipticModel(4, 2, cache_size=2)
        for k in range(5):
            model.apply(np.full(model.dim_param, 0.1 * k))
        assert len(model._cache) == 2

    def test_non_finite_parameter(self, model):
        x = np.zeros(model.dim_param)
        x[0] = np.nan
        with pytest.raises(ForwardSolveFailed):
            model.apply(x)

    def test_wrong_length(self, model):
        with pytest.raises(ForwardSolveFailed):
            model.apply(np.zeros(5))

    def test_manufactured_solution_second_order(self):
        # p = cos(pi s1 / 3) cos(pi s2) has zero normal flux and zero boundary mean on [0,3]x[0,1]
        exact = lambda pts: np.cos(np.pi * pts[:, 0] / 3.0) * np.cos(np.pi * pts[:, 1])
        source = lambda pts: (np.pi ** 2 / 9.0 + np.pi ** 2) * exact(pts)
        errors = []
        for nx, ny in ((12, 4), (24, 8), (48, 16), (96, 32)):
            model = EllipticModel(nx, ny, source_fn=source)
            p = model.solve_pressure(np.zeros(model.dim_param))
            errors.append(np.sqrt(np.mean((p - exact(model.nodes)) ** 2)))
        ratios = np.array(errors[:-1]) / np.array(errors[1:])
        assert np.all((ratios >= 3.0) & (ratios <= 5.0)), ratios


class TestGomosGeometry:
    """Tests for line-of-sight chord lengths"""

    def test_upper_triangular_positive_diagonal(self):
        A = gomos_geometry(6370.0 + np.linspace(10.0, 60.0, 6))
        assert A.shape == (5, 5)
        np.testing.assert_allclose(np.tril(A, -1), 0.0)
        assert np.all(np.diag(A) > 0)

    def test_bottom_tangent_chord(self):
        radii = np.array([100.0, 110.0, 120.0])
        A = gomos_geometry(radii, tangent='bottom')
        assert A[0, 0] == pytest.approx(2.0 * np.sqrt(110.0 ** 2 - 100.0 ** 2))

    def test_not_ascending(self):
        with pytest.raises(RadiiNotAscending):
            gomos_geometry([100.0, 90.0, 120.0])
        with pytest.raises(RadiiNotAscending):
            gomos_geometry([100.0])

    def test_unknown_tangent(self):
        with pytest.raises(ConfigError):
            gomos_geometry([1.0, 2.0], tangent='top')

    def test_chord_rows_span_the_top_shell(self):
        radii = 6370.0 + np.linspace(10.0, 60.0, 6)
        A = gomos_geometry(radii)
        r_tan = 0.5 * (radii[:-1] + radii[1:])
        np.testing.assert_allclose(A.sum(axis=1), 2.0 * np.sqrt(radii[-1] ** 2 - r_tan ** 2), rtol=1e-12)


class TestGomosModel:
    """Tests for the Beer's law transmission model"""

    @pytest.fixture
    def model(self):
        A = gomos_geometry(6370.0 + np.linspace(10.0, 60.0, 5)) * 1e-6
        C = synthetic_cross_sections(8, 3, seed=0)
        return GomosModel(C, A)

    def test_transmissions_in_unit_interval(self, model):
        T = model.transmissions(np.zeros(model.dim_param))
        assert T.shape == (8, 4)
        assert np.all((T > 0) & (T <= 1))

    def test_adjoint_and_jacobian(self, model):
        x = np.random.default_rng(0).standard_normal(model.dim_param)
        assert check_adjoint(model, x) < 1e-8
        assert check_jacobian(model, x) < 1e-5

    def test_dense_jacobian_matches_actions(self, model):
        x = np.random.default_rng(1).standard_normal(model.dim_param)
        v = np.random.default_rng(2).standard_normal(model.dim_param)
        np.testing.assert_allclose(model.jacobian(x) @ v, model.jac_apply(x, v), rtol=1e-10, atol=1e-14)

    def test_apply_matches_kronecker_form(self, model):
        x = np.random.default_rng(3).standard_normal(model.dim_param)
        bt = np.exp(x).reshape(model.n_gas, model.n_alts)
        dense = np.exp(-np.kron(model.A, model.C) @ bt.ravel(order='F'))
        np.testing.assert_allclose(model.apply(x), dense, rtol=1e-12)

    def test_transmissions_decrease_with_density(self, model):
        x = 0.5 * np.random.default_rng(4).standard_normal(model.dim_param)
        T = model.transmissions(x)
        for k in range(model.dim_param):
            bumped = x.copy()
            bumped[k] += 0.5
            T_new = model.transmissions(bumped)
            assert np.all(T_new <= T)
            assert np.any(T_new < T)

    def test_exponent_clamped(self, model):
        x = np.full(model.dim_param, 800.0)
        T = model.transmissions(x)
        assert np.all(np.isfinite(T))

    def test_cross_sections_positive_and_seeded(self):
        C = synthetic_cross_sections(30, 4, seed=5)
        assert np.all(C > 0)
        np.testing.assert_array_equal(C, synthetic_cross_sections(30, 4, seed=5))


class TestSyntheticData:
    """Tests for synth_data"""

    def test_noise_level_from_snr(self):
        model = EllipticModel(4, 2)
        x = np.zeros(model.dim_param)
        synth = synth_data(model, x, 10.0, seed=0)
        assert synth.sigma == pytest.approx(np.abs(model.apply(x)).max() / 10.0)

    def test_infinite_snr_is_noise_free(self):
        model = EllipticModel(4, 2)
        x = np.zeros(model.dim_param)
        synth = synth_data(model, x, np.inf, seed=0)
        np.testing.assert_array_equal(synth.data, synth.noise_free)

    def test_non_positive_snr(self):
        with pytest.raises(ConfigError):
            synth_data(EllipticModel(4, 2), np.zeros(8), 0.0, seed=0)


class TestProblemBuilders:
    """Tests for the config-driven problem builders"""

    def test_elliptic(self):
        setup = small_elliptic_setup()
        assert setup.kind == 'elliptic'
        assert setup.problem.dim == 12
        assert setup.grid_shape == (2, 6)
        x = setup.problem.prior.mean
        assert check_gradient(lambda z: log_posterior_and_grad(setup.problem, z), x) < 1e-5

    def test_elliptic_boundary_layout(self):
        setup = small_elliptic_setup(sources='boundary', sensor_spacing=1 / 6)
        assert setup.problem.model.dim_obs == 98

    def test_gomos(self):
        setup = small_gomos_setup()
        problem = setup.problem
        assert problem.dim == 16
        assert problem.model.dim_obs == 32
        assert check_adjoint(problem.model, setup.true_x) < 1e-8

    def test_linear_is_seeded(self):
        a, b = linear_setup(seed=3), linear_setup(seed=3)
        np.testing.assert_array_equal(a.problem.data, b.problem.data)
        assert not np.array_equal(a.problem.data, linear_setup(seed=4).problem.data)

    def test_linear_too_many_eigenvalues(self):
        with pytest.raises(ConfigError):
            linear_setup(n=4, d=3)

    def test_unknown_problem(self):
        with pytest.raises(ConfigError):
            build_problem({'problem': 'heat', 'seed': 0})


if __name__ == '__main__':
    pytest.main([__file__, '-v'])
