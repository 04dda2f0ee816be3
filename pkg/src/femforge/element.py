"""Isoparametric 4-node quadrilateral: shape functions, Jacobian, B-matrix, quadrature.

Local node order is counterclockwise, matching the reference corners
(-1,-1), (+1,-1), (+1,+1), (-1,+1).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CORNERS = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])

# local edge k joins local nodes EDGES[k]
EDGES = ((0, 1), (1, 2), (2, 3), (3, 0))

GAUSS_1D = 1.0 / np.sqrt(3.0)


class DegenerateElementError(ValueError):
    """Raised when an element has a singular or inverted Jacobian."""

    def __init__(self, message, element=None, det_j=None, coords=None):
        super().__init__(message)
        self.element = element
        self.det_j = det_j
        self.coords = coords


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray  # (n_gauss, 2)
    weights: np.ndarray  # (n_gauss,)

    @property
    def n_points(self) -> int:
        return len(self.weights)


@dataclass(frozen=True)
class ShapeTable:
    """Shape values and local derivatives tabulated at the points of a rule.

    ``n_values`` has shape ``(n_gauss, 4)`` and ``dn_dxi`` has shape
    ``(n_gauss, 2, 4)``.
    """

    rule: QuadratureRule
    n_values: np.ndarray
    dn_dxi: np.ndarray


@dataclass(frozen=True)
class ElementGeometry:
    jacobian: np.ndarray  # (2, 2)
    det_j: float
    dn_dx: np.ndarray  # (2, 4)
    b_voigt: np.ndarray  # (3, 8)


def shape_values(xi) -> np.ndarray:
    x, e = float(xi[0]), float(xi[1])
    return np.array([
        0.25 * (1 - x) * (1 - e),
        0.25 * (1 + x) * (1 - e),
        0.25 * (1 + x) * (1 + e),
        0.25 * (1 - x) * (1 + e),
    ])


def shape_derivatives_local(xi) -> np.ndarray:
    """Rows are d/dxi and d/deta of the four shape functions."""
    x, e = float(xi[0]), float(xi[1])
    return np.array([
        [-0.25 * (1 - e), 0.25 * (1 - e), 0.25 * (1 + e), -0.25 * (1 + e)],
        [-0.25 * (1 - x), -0.25 * (1 + x), 0.25 * (1 + x), 0.25 * (1 - x)],
    ])


def quadrature_2x2() -> QuadratureRule:
    g = GAUSS_1D
    points = np.array([[-g, -g], [g, -g], [g, g], [-g, g]])
    return QuadratureRule(points=points, weights=np.ones(4))


def quadrature_edge() -> tuple[np.ndarray, np.ndarray]:
    """Two-point Gauss rule on [-1, 1] for facet integrals."""
    return np.array([-GAUSS_1D, GAUSS_1D]), np.ones(2)


def shape_table(rule: QuadratureRule | None = None) -> ShapeTable:
    rule = rule or quadrature_2x2()
    n = np.array([shape_values(p) for p in rule.points])
    dn = np.array([shape_derivatives_local(p) for p in rule.points])
    n.setflags(write=False)
    dn.setflags(write=False)
    return ShapeTable(rule=rule, n_values=n, dn_dxi=dn)


def b_matrix(dn_dx: np.ndarray) -> np.ndarray:
    """Voigt strain-displacement matrix (3 x 8) with dofs ordered (ux1, uy1, ux2, ...)."""
    b = np.zeros((3, 8))
    b[0, 0::2] = dn_dx[0]
    b[1, 1::2] = dn_dx[1]
    b[2, 0::2] = dn_dx[1]
    b[2, 1::2] = dn_dx[0]
    return b


def geometry_at(xi, node_coords, element: int | None = None) -> ElementGeometry:
    coords = np.asarray(node_coords, dtype=float)
    dn_dxi = shape_derivatives_local(xi)
    # J[j, i] = sum_a dN_a/dxi_j * x_a,i
    jac = dn_dxi @ coords
    det = float(np.linalg.det(jac))
    if not det > 0.0:
        raise DegenerateElementError(
            f"non-positive Jacobian determinant {det:.6g}"
            + (f" in element {element}" if element is not None else ""),
            element=element, det_j=det, coords=coords,
        )
    dn_dx = np.linalg.solve(jac, dn_dxi)
    return ElementGeometry(jacobian=jac, det_j=det, dn_dx=dn_dx, b_voigt=b_matrix(dn_dx))


def interpolate(nodal, xi) -> float:
    return float(shape_values(xi) @ np.asarray(nodal, dtype=float))


def gradient(nodal, geom: ElementGeometry) -> np.ndarray:
    return geom.dn_dx @ np.asarray(nodal, dtype=float)


@dataclass(frozen=True)
class MeshGeometry:
    """Per-element, per-Gauss-point geometry for a whole mesh.

    Attributes
    ----------
    table : ShapeTable
        Shared reference-element tabulation.
    det_j : ndarray, shape (n_elements, n_gauss)
    dn_dx : ndarray, shape (n_elements, n_gauss, 2, 4)
    weights : ndarray, shape (n_elements, n_gauss)
        Quadrature weight times ``det_j``, i.e. the integration measure.
    """

    table: ShapeTable
    det_j: np.ndarray
    dn_dx: np.ndarray
    weights: np.ndarray

    @property
    def n_values(self) -> np.ndarray:
        return self.table.n_values

    def b_voigt(self) -> np.ndarray:
        """B-matrices for every element and Gauss point, shape (ne, ng, 3, 8)."""
        dn = self.dn_dx
        ne, ng = dn.shape[:2]
        b = np.zeros((ne, ng, 3, 8))
        b[:, :, 0, 0::2] = dn[:, :, 0]
        b[:, :, 1, 1::2] = dn[:, :, 1]
        b[:, :, 2, 0::2] = dn[:, :, 1]
        b[:, :, 2, 1::2] = dn[:, :, 0]
        return b


def mesh_geometry(nodes, elements, table: ShapeTable | None = None) -> MeshGeometry:
    """Vectorized :func:`geometry_at` over all elements and Gauss points."""
    table = table or shape_table()
    coords = np.asarray(nodes, dtype=float)[np.asarray(elements)]  # (ne, 4, 2)
    jac = np.einsum("gja,eai->egji", table.dn_dxi, coords)
    det = jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
    bad = np.argwhere(~(det > 0.0))
    if len(bad):
        e = int(bad[0, 0])
        raise DegenerateElementError(
            f"element {e} has non-positive Jacobian determinant {det[e].min():.6g}",
            element=e, det_j=float(det[e].min()), coords=coords[e],
        )
    inv = np.empty_like(jac)
    inv[..., 0, 0] = jac[..., 1, 1]
    inv[..., 0, 1] = -jac[..., 0, 1]
    inv[..., 1, 0] = -jac[..., 1, 0]
    inv[..., 1, 1] = jac[..., 0, 0]
    inv /= det[..., None, None]
    dn_dx = np.einsum("egij,gja->egia", inv, table.dn_dxi)
    weights = det * table.rule.weights[None, :]
    return MeshGeometry(table=table, det_j=det, dn_dx=dn_dx, weights=weights)
