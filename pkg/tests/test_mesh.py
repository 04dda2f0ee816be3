import json

import numpy as np
import pytest

from femforge.element import DegenerateElementError
from femforge.mesh import (DirichletBc, Mesh, MeshError, NeumannBc, NodalField,
                           dirichlet_constraints, generate_grid, load_mesh, mesh_from_dict,
                           save_mesh)

UNIT = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]


class TestMeshValidation:
    def test_single_element(self):
        mesh = Mesh(UNIT, [[0, 1, 2, 3]])
        assert (mesh.n_nodes, mesh.n_elements) == (4, 1)

    def test_clockwise_rejected(self):
        with pytest.raises(DegenerateElementError) as info:
            Mesh(UNIT, [[0, 3, 2, 1]])
        assert info.value.element == 0

    def test_node_index_out_of_range(self):
        with pytest.raises(MeshError, match="7"):
            Mesh(UNIT, [[0, 1, 2, 7]])

    def test_node_set_out_of_range(self):
        with pytest.raises(MeshError):
            Mesh(UNIT, [[0, 1, 2, 3]], node_sets={"bad": [9]})

    def test_facet_edge_out_of_range(self):
        with pytest.raises(MeshError):
            Mesh(UNIT, [[0, 1, 2, 3]], facet_sets={"bad": [[0, 4]]})

    def test_isolated_node_rejected(self):
        with pytest.raises(MeshError):
            Mesh(UNIT + [[5.0, 5.0]], [[0, 1, 2, 3]])

    def test_unknown_set(self, unit_square):
        with pytest.raises(MeshError):
            unit_square.node_set("nowhere")
        with pytest.raises(MeshError):
            unit_square.facet_set("nowhere")

    def test_facet_nodes_follow_local_edges(self, unit_square):
        np.testing.assert_array_equal(unit_square.facet_nodes("right"), [[1, 2]])
        np.testing.assert_array_equal(unit_square.facet_nodes("left"), [[3, 0]])


class TestGenerateGrid:
    def test_single_cell(self):
        m = generate_grid(1, 1, 1, 1)
        assert (m.n_nodes, m.n_elements) == (4, 1)

    def test_two_cells_share_an_edge(self):
        m = generate_grid(2, 1, 2, 1)
        assert (m.n_nodes, m.n_elements) == (6, 2)
        assert len(set(m.elements[0]) & set(m.elements[1])) == 2

    def test_left_set_size(self):
        assert len(generate_grid(10, 10, 1, 1).node_set("left")) == 11

    def test_boundary_sets_located(self):
        m = generate_grid(4, 3, 2.0, 1.5, x0=1.0, y0=-1.0)
        np.testing.assert_allclose(m.nodes[m.node_set("left"), 0], 1.0)
        np.testing.assert_allclose(m.nodes[m.node_set("right"), 0], 3.0)
        np.testing.assert_allclose(m.nodes[m.node_set("bottom"), 1], -1.0)
        np.testing.assert_allclose(m.nodes[m.node_set("top"), 1], 0.5)
        for name, coord, value in (("left", 0, 1.0), ("right", 0, 3.0), ("top", 1, 0.5)):
            np.testing.assert_allclose(m.nodes[m.facet_nodes(name), coord], value)

    def test_total_area(self):
        m = generate_grid(5, 7, 2.0, 3.0)
        assert m.geometry.weights.sum() == pytest.approx(6.0)

    @pytest.mark.parametrize("args", [(0, 1, 1, 1), (1, 1, 0, 1), (1, 1, 1, -2), (1.5, 1, 1, 1)])
    def test_invalid_dimensions(self, args):
        with pytest.raises(MeshError):
            generate_grid(*args)


class TestMeshIO:
    def test_round_trip(self, tmp_path):
        m = generate_grid(3, 2, 1.0 / 3.0, 0.7)
        m.fields["g"] = np.linspace(0, 0.1, m.n_nodes)
        save_mesh(m, tmp_path / "m.json")
        back = load_mesh(tmp_path / "m.json")
        np.testing.assert_array_equal(back.nodes, m.nodes)
        np.testing.assert_array_equal(back.elements, m.elements)
        for name in m.node_sets:
            np.testing.assert_array_equal(back.node_set(name), m.node_set(name))
            np.testing.assert_array_equal(back.facet_set(name), m.facet_set(name))
        np.testing.assert_array_equal(back.fields["g"], m.fields["g"])

    def test_parse_error_has_location(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"nodes": [[0, 0],\n [1, 0]] "elements": []}')
        with pytest.raises(MeshError, match="line 2"):
            load_mesh(path)

    def test_missing_key_named(self):
        with pytest.raises(MeshError, match="elements"):
            mesh_from_dict({"nodes": UNIT})

    def test_bad_node_shape(self):
        with pytest.raises(MeshError, match="nodes"):
            mesh_from_dict({"nodes": [[0, 0, 0]], "elements": [[0, 0, 0, 0]]})

    def test_json_is_plain(self, tmp_path):
        save_mesh(generate_grid(1, 1, 1, 1), tmp_path / "m.json")
        data = json.loads((tmp_path / "m.json").read_text())
        assert data["elements"] == [[0, 1, 3, 2]]


class TestFieldsAndBcs:
    def test_field_length_checked(self, unit_square):
        NodalField("u", np.zeros(8), 2).check(unit_square)
        with pytest.raises(MeshError):
            NodalField("u", np.zeros(7), 2).check(unit_square)

    def test_schedule_interpolation(self):
        bc = DirichletBc("left", 0, [[0, 0.0], [10, 1.0], [20, 0.5]])
        assert bc.value(5) == pytest.approx(0.5)
        assert bc.value(15) == pytest.approx(0.75)
        assert bc.value(99) == pytest.approx(0.5)
        assert DirichletBc("left", 0, 2.5).value(7) == 2.5

    def test_neumann_scaling(self):
        bc = NeumannBc("top", [0.0, 2.0], [[0, 0.0], [4, 1.0]])
        np.testing.assert_allclose(bc.value(2), [0.0, 1.0])
        assert NeumannBc("top", 3.0).value() == 3.0

    def test_constraints_expand(self, unit_square):
        cons = dirichlet_constraints(unit_square, [DirichletBc("left", 1, 0.2)], 1.0, 2)
        assert cons == [(1, 0.2), (7, 0.2)]

    def test_component_out_of_range(self, unit_square):
        with pytest.raises(MeshError):
            dirichlet_constraints(unit_square, [DirichletBc("left", 2, 0.0)], 1.0, 2)
