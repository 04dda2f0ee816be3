import numpy as np
import pytest

from femforge.heat import (HeatMaterial, assemble_capacity, assemble_conductivity,
                           assemble_heat_load, diffusion_matrix, heat_step, implicit_euler_step,
                           mass_matrix)
from femforge.mesh import NeumannBc, NodalField, dirichlet_constraints, DirichletBc, generate_grid
from femforge.oracles import slab_temperature
from femforge.verification import heat_slab_error, manufactured_errors

UNIT_MASS = np.array([[4, 2, 1, 2], [2, 4, 2, 1], [1, 2, 4, 2], [2, 1, 2, 4]]) / 36.0


class TestOperators:
    def test_unit_square_mass(self, unit_square):
        np.testing.assert_allclose(mass_matrix(unit_square).to_dense(), UNIT_MASS, atol=1e-15)

    def test_capacity_scales(self, unit_square):
        m = assemble_capacity(unit_square, HeatMaterial(rho=2.0, c=1.0))
        np.testing.assert_allclose(m.to_dense(), 2 * UNIT_MASS, atol=1e-15)

    def test_mass_total_is_area(self):
        m = generate_grid(3, 5, 2.0, 1.5)
        assert mass_matrix(m, 3.0).values.sum() == pytest.approx(3.0 * 3.0)

    def test_conductivity_kills_constants(self):
        m = generate_grid(4, 3, 1.0, 2.0)
        k = assemble_conductivity(m, HeatMaterial(kx=2.0, ky=0.5))
        np.testing.assert_allclose(k.matvec(np.ones(m.n_nodes)), 0.0, atol=1e-12)
        assert k.is_symmetric(1e-15)

    def test_unit_square_conductivity(self, unit_square):
        k = diffusion_matrix(unit_square).to_dense()
        expected = np.array([[4, -1, -2, -1], [-1, 4, -1, -2], [-2, -1, 4, -1],
                             [-1, -2, -1, 4]]) / 6.0
        np.testing.assert_allclose(k, expected, atol=1e-15)
        np.testing.assert_allclose(np.diag(k), 2.0 / 3.0)

    def test_zero_conductivity(self, unit_square):
        assert not np.any(diffusion_matrix(unit_square, 0.0, 0.0).values)


class TestLoads:
    def test_uniform_source(self, unit_square):
        f = assemble_heat_load(unit_square, HeatMaterial(Q=1.0))
        np.testing.assert_allclose(f, 0.25)

    def test_inward_edge_flux(self, unit_square):
        # outward normal flux -q means q flows in
        f = assemble_heat_load(unit_square, HeatMaterial(), [NeumannBc("left", -3.0)])
        np.testing.assert_allclose(f, [1.5, 0, 0, 1.5])

    def test_zero_inputs(self, unit_square):
        assert not np.any(assemble_heat_load(unit_square, HeatMaterial(), [NeumannBc("top", 0.0)]))

    def test_callable_source(self, unit_square):
        f = assemble_heat_load(unit_square, HeatMaterial(), source=lambda x, y: x)
        assert f.sum() == pytest.approx(0.5)


class TestTimeStepping:
    def test_uniform_equilibrium(self):
        m = generate_grid(5, 5, 1, 1)
        mat = HeatMaterial()
        t0 = NodalField("T", np.full(m.n_nodes, 0.7))
        t1, _ = heat_step(t0, 0.1, assemble_capacity(m, mat), assemble_conductivity(m, mat),
                          assemble_heat_load(m, mat))
        np.testing.assert_allclose(t1.values, 0.7, rtol=1e-14)

    def test_large_step_gives_linear_profile(self):
        m = generate_grid(10, 2, 1.0, 0.2)
        mat = HeatMaterial()
        cons = dirichlet_constraints(m, [DirichletBc("left", 0, 0.0), DirichletBc("right", 0, 1.0)],
                                     1.0)
        t, _ = implicit_euler_step(np.zeros(m.n_nodes), 1e12, assemble_capacity(m, mat),
                                   assemble_conductivity(m, mat), np.zeros(m.n_nodes), cons)
        np.testing.assert_allclose(t, m.nodes[:, 0], atol=1e-8)

    def test_rejects_nonpositive_dt(self, unit_square):
        m = mass_matrix(unit_square)
        with pytest.raises(ValueError):
            implicit_euler_step(np.zeros(4), 0.0, m, m, np.zeros(4))

    def test_slab_against_series(self):
        assert heat_slab_error() < 1e-2

    def test_manufactured_second_order(self):
        errors = manufactured_errors()
        assert min(a / b for a, b in zip(errors, errors[1:])) >= 3.5


class TestOracle:
    def test_series_limits(self):
        x = np.linspace(0, 1, 11)
        np.testing.assert_allclose(slab_temperature(x, 1e-6)[1:], 0.0, atol=1e-12)
        np.testing.assert_allclose(slab_temperature(x, 50.0), 1.0, atol=1e-10)
        assert slab_temperature(np.array([0.0]), 0.3)[0] == pytest.approx(1.0)

    def test_series_insulated_end(self):
        h = 1e-6
        t = slab_temperature(np.array([1.0 - h, 1.0]), 0.2)
        assert abs(t[1] - t[0]) / h < 1e-3
