import numpy as np
import pytest

from femforge.mechanics import (KME, PLANE_STRAIN, PLANE_STRESS, ElasticModel, MaterialPointState,
                                MechanicsFailure, MechanicsProblem, PowerLaw,
                                SingularMaterialError, assemble_internal_force,
                                assemble_stiffness, assemble_traction, continuum_tangent,
                                continuum_tangent_batch, deviatoric, elastic_matrix,
                                hydrostatic_stress, newton_solve, out_of_plane, return_map,
                                return_map_batch, von_mises)
from femforge.mesh import DirichletBc, NeumannBc, generate_grid
from femforge.oracles import consistency_increment
from femforge.verification import patch_error, uniaxial_curve

STEEL = ElasticModel(210e3, 0.3, PLANE_STRAIN)


def tension_bcs(value):
    return [DirichletBc("left", 0, 0.0), DirichletBc("bottom", 1, 0.0),
            DirichletBc("right", 0, [[0, 0.0], [1, value]])]


class TestElasticity:
    def test_plane_strain_matrix(self):
        c = elastic_matrix(ElasticModel(1.0, 0.25, PLANE_STRAIN))
        assert (c[0, 0], c[0, 1], c[2, 2]) == pytest.approx((1.2, 0.4, 0.4))

    @pytest.mark.parametrize("mode", [PLANE_STRAIN, PLANE_STRESS])
    def test_zero_poisson_decouples(self, mode):
        np.testing.assert_allclose(elastic_matrix(ElasticModel(2.0, 0.0, mode)),
                                   np.diag([2.0, 2.0, 1.0]))

    def test_plane_stress_matrix(self):
        assert elastic_matrix(ElasticModel(1.0, 0.3, PLANE_STRESS))[0, 0] == pytest.approx(1 / 0.91)

    def test_incompressible_plane_strain_rejected(self):
        with pytest.raises(SingularMaterialError):
            ElasticModel(1.0, 0.5, PLANE_STRAIN)
        ElasticModel(1.0, 0.5, PLANE_STRESS)

    def test_out_of_plane(self):
        assert out_of_plane(ElasticModel(1.0, 0.3), [1.0, 1.0, 0.0]) == pytest.approx(0.6)
        assert out_of_plane(ElasticModel(1.0, 0.3), [0.0, 0.0, 0.0]) == 0.0
        assert out_of_plane(ElasticModel(1.0, 0.3, PLANE_STRESS), [1.0, 0.0, 0.0]) == \
            pytest.approx(-0.3)

    def test_hydrostatic(self):
        assert hydrostatic_stress(ElasticModel(1.0, 0.3), [1.0, 2.0, 0.0]) == pytest.approx(1.3)
        assert hydrostatic_stress(ElasticModel(1.0, 0.3, PLANE_STRESS), [1.0, 2.0, 0.0]) == \
            pytest.approx(1.0)
        assert hydrostatic_stress(STEEL, [0.0, 0.0, 5.0]) == 0.0
        assert hydrostatic_stress(STEEL, [1.0, 2.0, 6.0, 4.0]) == pytest.approx(3.0)

    def test_von_mises(self):
        assert von_mises([-7.0, 0, 0, 0]) == pytest.approx(7.0)
        assert von_mises([0, 0, 0, 2.0]) == pytest.approx(2 * np.sqrt(3))
        assert von_mises([4.0, 4.0, 4.0, 0]) == pytest.approx(0.0, abs=1e-12)

    def test_deviatoric(self):
        np.testing.assert_allclose(deviatoric([3.0, 0, 0, 0]), [2.0, -1.0, -1.0, 0.0])
        np.testing.assert_allclose(deviatoric([2.0, 2.0, 2.0, 0]), 0.0)
        np.testing.assert_allclose(deviatoric([0, 0, 0, 5.0]), [0, 0, 0, 5.0])


class TestHardening:
    def test_calibrated_at_zero(self):
        assert PowerLaw(300.0, 500.0, 0.3, 1e-6).evaluate(0.0)[0] == 0.0
        assert KME(300.0).evaluate(0.0)[0] == pytest.approx(0.0, abs=1e-12)

    def test_power_law_value(self):
        assert PowerLaw(300.0, 100.0, 0.5, 0.0).evaluate(0.04)[0] == pytest.approx(20.0)

    def test_power_law_slope(self):
        law = PowerLaw(300.0, 700.0, 0.4, 1e-5)
        h = 1e-7
        fd = (law.evaluate(0.02 + h)[0] - law.evaluate(0.02 - h)[0]) / (2 * h)
        assert law.evaluate(0.02)[1] == pytest.approx(fd, rel=1e-6)

    def test_kme_saturation(self):
        law = KME(300.0)
        expected = law.alpha_t * law.M_taylor * law.G_ref * law.b_burgers * (
            law.k1 / law.k2 - np.sqrt(law.rho_0))
        assert law.saturation() == pytest.approx(expected)
        assert law.evaluate(50.0)[0] == pytest.approx(expected, rel=1e-12)
        assert law.saturation() > 0

    def test_kme_density_ode(self):
        law = KME(300.0)
        p, h = 0.1, 1e-6
        rho = lambda q: law.rho_bar(q) * (law.k1 / law.k2) ** 2  # noqa: E731
        drho = (rho(p + h) - rho(p - h)) / (2 * h)
        assert drho == pytest.approx(law.k1 * np.sqrt(rho(p)) - law.k2 * rho(p), rel=1e-6)
        assert law.rho_bar(100.0) == pytest.approx(1.0)

    @pytest.mark.parametrize("kwargs", [dict(sigma_y0=0.0), dict(sigma_y0=1.0, K_h=-1.0),
                                        dict(sigma_y0=1.0, n_h=0.0)])
    def test_invalid_power_law(self, kwargs):
        with pytest.raises(ValueError):
            PowerLaw(**kwargs)

    def test_invalid_kme(self):
        with pytest.raises(ValueError):
            KME(300.0, k2=0.0)


class TestReturnMap:
    def test_elastic_branch(self):
        law = PowerLaw(300.0, 1000.0)
        state, dp, ok = return_map(STEEL, law, MaterialPointState(), [1e-4, 0.0, 0.0])
        assert ok and dp == 0.0 and not state.plastic
        np.testing.assert_array_equal(state.plastic_strain, 0.0)
        np.testing.assert_allclose(state.stress[[0, 1, 3]], elastic_matrix(STEEL) @ [1e-4, 0, 0])

    def test_linear_hardening_closed_form(self):
        h, sy = 2000.0, 250.0
        law = PowerLaw(sy, h, 1.0, 0.0)
        old = MaterialPointState(p=0.002, plastic_strain=[0.001, -0.0005, -0.0005, 0.0])
        strain = np.array([0.006, -0.002, 0.0, 0.0])
        s_tr = (strain - old.plastic_strain) @ STEEL.c4().T
        expected = (von_mises(s_tr) - sy - h * old.p) / (3 * STEEL.G + h)
        state, dp, ok = return_map(STEEL, law, old, strain)
        assert ok
        assert dp == pytest.approx(expected, rel=1e-12)
        assert state.p == pytest.approx(old.p + expected, rel=1e-12)

    @pytest.mark.parametrize("law", [PowerLaw(300.0, 600.0, 0.4, 1e-6), KME(300.0),
                                     PowerLaw(300.0, 100.0, 0.5, 0.0)])
    def test_matches_bisection(self, law):
        rng = np.random.default_rng(11)
        strain = rng.normal(scale=4e-3, size=(30, 4))
        strain[:, 2] = 0.0
        r = return_map_batch(STEEL, law, strain, np.zeros(4), 0.0)
        s_tr = strain @ STEEL.c4().T
        for k in range(len(strain)):
            ref = consistency_increment(von_mises(s_tr[k]), STEEL.G, law.sigma_y0,
                                        lambda p: law.evaluate(p)[0], 0.0)
            assert r.dp[k] == pytest.approx(ref, abs=1e-10)
        assert r.plastic.any() and r.converged.all()

    def test_degraded_consistency(self):
        law = PowerLaw(300.0, 500.0, 0.5, 1e-6)
        strain = np.array([[0.01, -0.004, 0.0, 0.003]])
        r = return_map_batch(STEEL, law, strain, np.zeros(4), 0.0, g_d=0.4)
        H, _ = law.evaluate(r.p)
        residual = 0.4 * von_mises(strain @ STEEL.c4().T) - 3 * STEEL.G * 0.4 * r.dp - H - 300.0
        assert abs(residual[0]) <= 1e-8 * 300.0
        np.testing.assert_allclose(r.stress, 0.4 * r.stress_eff)

    def test_invariants(self):
        law = PowerLaw(300.0, 600.0, 0.4, 1e-6)
        rng = np.random.default_rng(5)
        eps_p, p = np.zeros((40, 4)), np.zeros(40)
        path = np.cumsum(rng.normal(scale=1e-3, size=(8, 40, 4)), axis=0)
        path[..., 2] = 0.0
        for strain in path:
            r = return_map_batch(STEEL, law, strain, eps_p, p)
            assert np.all(r.p >= p)
            assert np.abs(r.plastic_strain[:, :3].sum(axis=1)).max() < 1e-10
            H, _ = law.evaluate(r.p)
            f = von_mises(r.stress_eff) - 300.0 - H
            assert f.max() <= 1e-8 * 300.0
            eps_p, p = r.plastic_strain, r.p

    def test_plane_stress_rejected(self):
        with pytest.raises(ValueError):
            return_map_batch(ElasticModel(1.0, 0.3, PLANE_STRESS), PowerLaw(1.0), np.zeros(4),
                             np.zeros(4), 0.0)


class TestTangent:
    def test_elastic_tangent(self):
        state = MaterialPointState(g_d=0.3)
        np.testing.assert_array_equal(continuum_tangent(STEEL, PowerLaw(300.0), state),
                                      0.3 * elastic_matrix(STEEL))

    @pytest.mark.parametrize("h", [0.0, 1500.0])
    def test_rank_one_form(self, h):
        stress = np.array([320.0, -80.0, 140.0, 60.0])
        c = continuum_tangent_batch(STEEL, PowerLaw(300.0, h), stress, 0.01, True)[0]
        # tensor form: C - 4 G^2 N (x) N / (3 G + H'), N = 3/2 s / sigma_eq
        s = deviatoric(stress)
        n = 1.5 * s[[0, 1, 3]] / von_mises(stress)
        expected = elastic_matrix(STEEL) - 4 * STEEL.G ** 2 * np.outer(n, n) / (3 * STEEL.G + h)
        np.testing.assert_allclose(c, expected, rtol=1e-12, atol=1e-9)

    def test_perfect_plasticity_keeps_equivalent_stress(self):
        # s'_zz = 0, so the in-plane flow direction carries the whole check
        stress = np.array([150.0, -150.0, 0.0, 40.0])
        c = continuum_tangent_batch(STEEL, PowerLaw(300.0), stress, 0.0, True)[0]
        n = 1.5 * deviatoric(stress)[[0, 1, 3]] / von_mises(stress)
        n[2] *= 2.0
        rng = np.random.default_rng(0)
        for d_eps in rng.normal(size=(5, 3)):
            d_sigma = c @ d_eps
            assert abs(n @ d_sigma) <= 1e-8 * np.linalg.norm(d_sigma)

    def test_symmetric(self):
        c = continuum_tangent_batch(STEEL, KME(300.0), np.array([[400.0, 10.0, 150.0, -90.0]]),
                                    0.05, True)[0]
        np.testing.assert_allclose(c, c.T, rtol=1e-13)


class TestAssembly:
    def test_rigid_modes(self, unit_square):
        k = assemble_stiffness(unit_square, elastic_matrix(STEEL))
        x, y = unit_square.nodes.T
        for mode in (np.tile([1.0, 0.0], 4), np.tile([0.0, 1.0], 4),
                     np.column_stack([-y, x]).ravel()):
            assert np.abs(k.matvec(mode)).max() <= 1e-12 * np.abs(k.values).max()
        assert k.is_symmetric(1e-9)

    def test_uniform_stress_nodal_forces(self, unit_square):
        f = assemble_internal_force(unit_square, np.array([5.0, 0.0, 0.0]))
        np.testing.assert_allclose(f.reshape(4, 2), [[-2.5, 0], [2.5, 0], [2.5, 0], [-2.5, 0]],
                                   atol=1e-14)

    def test_zero_stress(self, unit_square):
        assert not np.any(assemble_internal_force(unit_square, np.zeros(4)))

    def test_traction_resultant(self):
        m = generate_grid(3, 2, 3.0, 1.0)
        f = assemble_traction(m, [NeumannBc("top", [0.5, -2.0])])
        assert f[0::2].sum() == pytest.approx(1.5)
        assert f[1::2].sum() == pytest.approx(-6.0)


class TestGlobalSolver:
    @pytest.mark.parametrize("mode", [PLANE_STRAIN, PLANE_STRESS])
    def test_patch(self, mode):
        assert patch_error(mode) <= 1e-10

    def test_elastic_one_iteration(self):
        m = generate_grid(3, 2, 1.0, 1.0)
        res = newton_solve(m, STEEL, None, tension_bcs(1e-3))
        assert res[0].report.iterations == 1 and res[0].report.converged

    def test_uniaxial_curve(self):
        fe, oracle = uniaxial_curve()
        err = np.abs(fe - oracle).max() / np.abs(oracle).max()
        assert err <= 1e-3

    def test_reactions_balance_traction(self):
        m = generate_grid(4, 2, 2.0, 1.0)
        prob = MechanicsProblem(m, ElasticModel(1e3, 0.25, PLANE_STRESS), None,
                                [DirichletBc("left", 0, 0.0), DirichletBc("bottom", 1, 0.0)],
                                [NeumannBc("right", [3.0, 0.0])])
        prob.advance(1.0)
        # reactions are -f_int, so the support reads the applied resultant 3 * 1
        assert prob.reaction_force("left", 0) == pytest.approx(3.0, rel=1e-8)
        r = prob.reactions()
        fixed = prob.constrained_dofs()
        np.testing.assert_allclose(r[fixed], -prob.f_int[fixed])
        assert not np.any(np.delete(r, fixed))

    def test_plastic_run_monotone_p_and_convergence(self):
        m = generate_grid(4, 2, 1.0, 0.5)
        res = newton_solve(m, STEEL, PowerLaw(300.0, 600.0, 0.4, 1e-6), tension_bcs(0.01),
                           increments=np.linspace(0.1, 1.0, 10))
        p_prev = np.zeros_like(res[0].state.p)
        for r in res:
            assert r.report.converged
            assert np.all(r.state.p >= p_prev - 1e-15)
            p_prev = r.state.p
            norms = r.report.residual_norms
            assert all(b < a for a, b in zip(norms[1:], norms[2:]))
        assert p_prev.max() > 0

    def test_impossible_tolerance_fails_with_report(self):
        m = generate_grid(2, 1, 1.0, 0.5)
        prob = MechanicsProblem(m, STEEL, PowerLaw(300.0, 600.0, 0.4, 1e-6), tension_bcs(0.01),
                                tol_r=0.0, max_iter=4, max_cuts=1)
        with pytest.raises(MechanicsFailure) as info:
            prob.advance(1.0)
        assert info.value.step == 1.0
        assert info.value.report.cuts >= 1 and info.value.report.residual_norms
        assert prob.step == 0.0 and not np.any(prob.u)

    def test_plane_stress_plasticity_rejected(self):
        with pytest.raises(ValueError):
            MechanicsProblem(generate_grid(1, 1, 1, 1), ElasticModel(1.0, 0.3, PLANE_STRESS),
                             PowerLaw(1.0))
