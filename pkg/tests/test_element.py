import numpy as np
import pytest

from femforge.element import (CORNERS, DegenerateElementError, b_matrix, geometry_at, gradient,
                              interpolate, mesh_geometry, quadrature_2x2, shape_derivatives_local,
                              shape_table, shape_values)

UNIT = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


class TestShapeFunctions:
    def test_center_values(self):
        np.testing.assert_allclose(shape_values((0, 0)), [0.25] * 4, atol=1e-15)

    def test_corner_kronecker(self):
        for j, corner in enumerate(CORNERS):
            np.testing.assert_allclose(shape_values(corner), np.eye(4)[j], atol=1e-15)

    def test_hand_substitution(self):
        np.testing.assert_allclose(shape_values((0.5, -0.5)), [0.1875, 0.5625, 0.1875, 0.0625],
                                   atol=1e-15)

    def test_local_derivatives_at_center(self):
        np.testing.assert_allclose(shape_derivatives_local((0, 0))[0], [-0.25, 0.25, 0.25, -0.25])

    def test_derivative_rows_sum_to_zero(self):
        rng = np.random.default_rng(0)
        for xi in rng.uniform(-1, 1, (20, 2)):
            np.testing.assert_allclose(shape_derivatives_local(xi).sum(axis=1), 0.0, atol=1e-15)

    def test_corner_derivative_entry(self):
        assert shape_derivatives_local((1, 1))[0, 2] == pytest.approx(0.5)

    def test_partition_of_unity_at_gauss_points(self):
        table = shape_table()
        np.testing.assert_allclose(table.n_values.sum(axis=1), 1.0, atol=1e-14)
        np.testing.assert_allclose(table.dn_dxi.sum(axis=2), 0.0, atol=1e-14)


class TestQuadrature:
    def test_weights_sum_to_reference_area(self):
        assert quadrature_2x2().weights.sum() == pytest.approx(4.0)

    def test_point_coordinates(self):
        np.testing.assert_allclose(np.abs(quadrature_2x2().points), 0.5773502691896257,
                                   rtol=1e-15)

    @pytest.mark.parametrize("i", range(4))
    @pytest.mark.parametrize("j", range(4))
    def test_cubic_monomials_exact(self, i, j):
        rule = quadrature_2x2()
        approx = sum(w * x ** i * y ** j for (x, y), w in zip(rule.points, rule.weights))

        def exact_1d(k):
            return 0.0 if k % 2 else 2.0 / (k + 1)

        assert approx == pytest.approx(exact_1d(i) * exact_1d(j), abs=1e-14)

    def test_xi2_eta2(self):
        rule = quadrature_2x2()
        val = sum(w * x ** 2 * y ** 2 for (x, y), w in zip(rule.points, rule.weights))
        assert val == pytest.approx(4.0 / 9.0)


class TestGeometry:
    def test_unit_square_jacobian(self):
        g = geometry_at((0.3, -0.2), UNIT)
        np.testing.assert_allclose(g.jacobian, 0.5 * np.eye(2), atol=1e-15)
        assert g.det_j == pytest.approx(0.25)

    def test_scaling_multiplies_det_by_four(self):
        assert geometry_at((0, 0), 2 * UNIT).det_j == pytest.approx(4 * 0.25)

    def test_reference_square_is_identity(self):
        g = geometry_at((0.1, 0.4), CORNERS)
        np.testing.assert_allclose(g.jacobian, np.eye(2), atol=1e-15)
        np.testing.assert_allclose(g.dn_dx, shape_derivatives_local((0.1, 0.4)), atol=1e-15)

    def test_clockwise_element_rejected(self):
        with pytest.raises(DegenerateElementError) as info:
            geometry_at((0, 0), UNIT[::-1], element=5)
        assert info.value.element == 5
        assert info.value.det_j < 0

    def test_collinear_element_rejected(self):
        coords = np.array([[0, 0], [1, 0], [2, 0], [3, 0.0]])
        with pytest.raises(DegenerateElementError):
            mesh_geometry(coords, [[0, 1, 2, 3]])

    def test_b_matrix_layout(self):
        dn = np.arange(8.0).reshape(2, 4)
        b = b_matrix(dn)
        np.testing.assert_array_equal(b[0, 0::2], dn[0])
        np.testing.assert_array_equal(b[1, 1::2], dn[1])
        np.testing.assert_array_equal(b[2, 0::2], dn[1])
        np.testing.assert_array_equal(b[2, 1::2], dn[0])
        np.testing.assert_array_equal(b[0, 1::2], 0.0)

    def test_vectorized_matches_pointwise(self):
        coords = np.array([[0.1, 0.0], [1.3, 0.2], [1.1, 0.9], [-0.1, 1.2]])
        geo = mesh_geometry(coords, [[0, 1, 2, 3]])
        for g, xi in enumerate(quadrature_2x2().points):
            ref = geometry_at(xi, coords)
            assert geo.det_j[0, g] == pytest.approx(ref.det_j, rel=1e-14)
            np.testing.assert_allclose(geo.dn_dx[0, g], ref.dn_dx, atol=1e-14)
            np.testing.assert_allclose(geo.b_voigt()[0, g], ref.b_voigt, atol=1e-14)


class TestInterpolation:
    def test_constant_field(self):
        g = geometry_at((0.2, 0.7), UNIT)
        assert interpolate([3.0] * 4, (0.2, 0.7)) == pytest.approx(3.0)
        np.testing.assert_allclose(gradient([3.0] * 4, g), 0.0, atol=1e-14)

    def test_linear_field_gradient(self):
        for xi in [(0, 0), (0.5, -0.3), (-1, 1)]:
            np.testing.assert_allclose(gradient([0, 1, 1, 0], geometry_at(xi, UNIT)), [1, 0],
                                       atol=1e-14)

    def test_bilinear_center_value(self):
        assert interpolate([0, 0, 1, 0], (0, 0)) == pytest.approx(0.25)
