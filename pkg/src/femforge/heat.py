"""Transient heat conduction with implicit Euler, plus the scalar-field
assembly kernels (mass, diffusion, facet flux, source) shared with transport.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .element import quadrature_edge
from .mesh import Mesh, NodalField
from .sparse import LinearSolver, SparseMatrix, apply_dirichlet, assemble_vector, scatter_add_batch


@dataclass
class HeatMaterial:
    rho: float = 1.0
    c: float = 1.0
    kx: float = 1.0
    ky: float = 1.0
    Q: float = 0.0

    def __post_init__(self):
        if not self.rho * self.c > 0:
            raise ValueError("heat material needs rho * c > 0")
        if self.kx < 0 or self.ky < 0:
            raise ValueError("conductivities must be non-negative")


def gauss_points_xy(mesh: Mesh) -> np.ndarray:
    """Physical coordinates of all Gauss points, shape (ne, ng, 2)."""
    coords = mesh.nodes[mesh.elements]
    return np.einsum("ga,eai->egi", mesh.geometry.n_values, coords)


def interpolate_at_gauss(mesh: Mesh, nodal) -> np.ndarray:
    """Interpolate a scalar nodal vector to Gauss points, shape (ne, ng)."""
    return np.asarray(nodal, dtype=float)[mesh.elements] @ mesh.geometry.n_values.T


def gradient_at_gauss(mesh: Mesh, nodal) -> np.ndarray:
    """Cartesian gradient of a scalar nodal vector at Gauss points, shape (ne, ng, 2)."""
    return np.einsum("egia,ea->egi", mesh.geometry.dn_dx,
                     np.asarray(nodal, dtype=float)[mesh.elements])


def mass_matrix(mesh: Mesh, coefficient=1.0) -> SparseMatrix:
    """``integral N^T coef N`` with ``coef`` scalar or per Gauss point (ne, ng)."""
    geo = mesh.geometry
    w = geo.weights * np.broadcast_to(np.asarray(coefficient, dtype=float), geo.weights.shape)
    n = geo.n_values
    ke = np.einsum("eg,ga,gb->eab", w, n, n)
    mat = mesh.pattern(1).zeros_like()
    scatter_add_batch(mat, mesh.elements, ke)
    return mat


def diffusion_matrix(mesh: Mesh, kx=1.0, ky=1.0) -> SparseMatrix:
    """``integral B^T diag(kx, ky) B``."""
    geo = mesh.geometry
    dn = geo.dn_dx
    k = np.array([kx, ky], dtype=float)
    ke = np.einsum("eg,egia,i,egib->eab", geo.weights, dn, k, dn)
    mat = mesh.pattern(1).zeros_like()
    scatter_add_batch(mat, mesh.elements, ke)
    return mat


def facet_flux_load(mesh: Mesh, neumann, step: float = 0.0) -> np.ndarray:
    """``-integral_Gamma N^T (J . n)`` for scalar outward normal fluxes."""
    out = np.zeros(mesh.n_nodes)
    s, w = quadrature_edge()
    n1, n2 = 0.5 * (1 - s), 0.5 * (1 + s)
    for bc in neumann:
        bc.check(mesh)
        jn = float(bc.value(step))
        pairs = mesh.facet_nodes(bc.facet_set)
        half_len = 0.5 * np.linalg.norm(mesh.nodes[pairs[:, 1]] - mesh.nodes[pairs[:, 0]], axis=1)
        # per facet: sum_q w_q N_a(s_q) * (-jn) * |J_edge|
        fa = -jn * half_len * (w @ n1)
        fb = -jn * half_len * (w @ n2)
        np.add.at(out, pairs[:, 0], fa)
        np.add.at(out, pairs[:, 1], fb)
    return out


def source_load(mesh: Mesh, source) -> np.ndarray:
    """``integral N^T Q``; ``source`` is a constant or a callable ``Q(x, y)``."""
    geo = mesh.geometry
    if callable(source):
        xy = gauss_points_xy(mesh)
        q = np.asarray(source(xy[..., 0], xy[..., 1]), dtype=float)
    else:
        q = float(source)
    fe = np.einsum("eg,ga->ea", geo.weights * q, geo.n_values)
    return assemble_vector(mesh.n_nodes, mesh.elements, fe)


def assemble_capacity(mesh: Mesh, material: HeatMaterial) -> SparseMatrix:
    return mass_matrix(mesh, material.rho * material.c)


def assemble_conductivity(mesh: Mesh, material: HeatMaterial) -> SparseMatrix:
    return diffusion_matrix(mesh, material.kx, material.ky)


def assemble_heat_load(mesh: Mesh, material: HeatMaterial, neumann=(), step: float = 0.0,
                       source=None) -> np.ndarray:
    """Load vector from boundary fluxes and the volumetric source.

    ``source`` overrides the material's constant ``Q`` (e.g. with a callable
    for manufactured solutions).
    """
    q = material.Q if source is None else source
    return facet_flux_load(mesh, neumann, step) + source_load(mesh, q)


def implicit_euler_step(u_old, dt, mass: SparseMatrix, stiffness: SparseMatrix, load,
                        constraints=(), solver: LinearSolver | None = None,
                        symmetric: bool = True):
    """Solve ``(M + dt K) u = dt F + M u_old`` with Dirichlet constraints."""
    if not dt > 0:
        raise ValueError("time step must be positive")
    solver = solver or LinearSolver()
    a = mass.linear_combination((1.0, mass), (dt, stiffness))
    rhs = dt * np.asarray(load, dtype=float) + mass.matvec(u_old)
    apply_dirichlet(a, rhs, constraints)
    return solver.solve(a, rhs, x0=np.asarray(u_old, dtype=float), symmetric=symmetric)


def heat_step(T_old: NodalField, dt: float, capacity: SparseMatrix, conductivity: SparseMatrix,
              load, dirichlet=(), solver: LinearSolver | None = None):
    """Advance temperature one implicit Euler step.

    Returns
    -------
    T_new : NodalField
    report : SolveReport
    """
    values, report = implicit_euler_step(T_old.values, dt, capacity, conductivity, load,
                                         dirichlet, solver, symmetric=True)
    return NodalField(T_old.name, values), report
