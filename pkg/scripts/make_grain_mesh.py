"""Write the transport example mesh with synthetic grain-boundary fields.

Four smooth grain phase fields on a unit square (two in set 'i', two in set
'j') are combined into the interface function; the 'j' phase indicator is
the summed 'j' fractions.
"""
import sys

import numpy as np

from femforge.mesh import Mesh, generate_grid, save_mesh
from femforge.transport import PhaseFractions, interface_function


def grain_mesh(n=24, width=0.08):
    grid = generate_grid(n, n, 1.0, 1.0)
    x, y = grid.nodes.T
    centers = np.array([[0.25, 0.3], [0.75, 0.25], [0.3, 0.8], [0.72, 0.72]])
    d = np.linalg.norm(grid.nodes[:, None, :] - centers[None], axis=2)
    w = np.exp(-(d - d.min(axis=1, keepdims=True)) / width)
    phases = PhaseFractions(w / w.sum(axis=1, keepdims=True), ("i", "j", "j", "i"))
    g_ii, g_ij, g_jj = interface_function(phases)
    fields = {"g_intf": g_ii.values + g_ij.values + g_jj.values,
              "phi_n": phases.values[:, 1] + phases.values[:, 2]}
    return Mesh(grid.nodes, grid.elements, grid.node_sets, grid.facet_sets, fields)


if __name__ == "__main__":
    save_mesh(grain_mesh(), sys.argv[1] if len(sys.argv) > 1 else "transport_a_mesh.json")
