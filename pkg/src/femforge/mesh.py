"""Mesh container, node/facet sets, nodal fields and boundary-condition records."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .element import EDGES, MeshGeometry, mesh_geometry


class MeshError(ValueError):
    """Invalid mesh data (bad indices, inverted elements, malformed file)."""


@dataclass(eq=False)
class Mesh:
    """Quad4 mesh.

    Attributes
    ----------
    nodes : ndarray, shape (n_nodes, 2)
    elements : ndarray of int, shape (n_elements, 4)
        Counterclockwise connectivity, zero-based.
    node_sets : dict of str to ndarray of int
    facet_sets : dict of str to ndarray of int, shape (n_facets, 2)
        Rows are ``(element, local_edge)``; edge ``k`` joins local nodes
        ``k`` and ``(k + 1) % 4``.
    fields : dict of str to ndarray
        Optional nodal data carried by the mesh file (microstructure etc.).
    """

    nodes: np.ndarray
    elements: np.ndarray
    node_sets: dict = field(default_factory=dict)
    facet_sets: dict = field(default_factory=dict)
    fields: dict = field(default_factory=dict)

    def __post_init__(self):
        self.nodes = np.ascontiguousarray(self.nodes, dtype=float).reshape(-1, 2)
        self.elements = np.ascontiguousarray(self.elements, dtype=np.int64).reshape(-1, 4)
        self.node_sets = {k: np.asarray(v, dtype=np.int64).reshape(-1)
                          for k, v in self.node_sets.items()}
        self.facet_sets = {k: np.asarray(v, dtype=np.int64).reshape(-1, 2)
                           for k, v in self.facet_sets.items()}
        self.fields = {k: np.asarray(v, dtype=float) for k, v in self.fields.items()}
        for arr in (self.nodes, self.elements):
            arr.setflags(write=False)
        self.validate()

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    def validate(self):
        n = self.n_nodes
        if self.elements.size and (self.elements.min() < 0 or self.elements.max() >= n):
            e, k = np.argwhere((self.elements < 0) | (self.elements >= n))[0]
            raise MeshError(f"element {int(e)} references node {int(self.elements[e, k])}, "
                            f"out of range for a mesh with {n} nodes")
        for name, idx in self.node_sets.items():
            if idx.size and (idx.min() < 0 or idx.max() >= n):
                raise MeshError(f"node set {name!r} has an index out of range")
        for name, facets in self.facet_sets.items():
            if facets.size == 0:
                continue
            if facets[:, 0].min() < 0 or facets[:, 0].max() >= self.n_elements:
                raise MeshError(f"facet set {name!r} references a missing element")
            if facets[:, 1].min() < 0 or facets[:, 1].max() > 3:
                raise MeshError(f"facet set {name!r} has a local edge outside 0..3")
        for name, values in self.fields.items():
            if values.size % n or values.size == 0:
                raise MeshError(f"field {name!r} has {values.size} values for {n} nodes")
        used = np.zeros(n, dtype=bool)
        used[self.elements.ravel()] = True
        if not used.all():
            raise MeshError(f"node {int(np.argmin(used))} is not attached to any element")
        # raises DegenerateElementError (a ValueError) with the element index
        self.geometry  # noqa: B018

    @cached_property
    def geometry(self) -> MeshGeometry:
        return mesh_geometry(self.nodes, self.elements)

    def pattern(self, dofs_per_node: int = 1):
        """Shared zero-valued sparsity pattern (cached per dof count)."""
        cache = self.__dict__.setdefault("_patterns", {})
        if dofs_per_node not in cache:
            from .sparse import build_pattern
            cache[dofs_per_node] = build_pattern(self, dofs_per_node)
        return cache[dofs_per_node]

    def node_set(self, name: str) -> np.ndarray:
        try:
            return self.node_sets[name]
        except KeyError:
            raise MeshError(f"unknown node set {name!r}") from None

    def facet_set(self, name: str) -> np.ndarray:
        try:
            return self.facet_sets[name]
        except KeyError:
            raise MeshError(f"unknown facet set {name!r}") from None

    def facet_nodes(self, name: str) -> np.ndarray:
        """Global node pairs ``(n_facets, 2)`` of a facet set."""
        facets = self.facet_set(name)
        edges = np.asarray(EDGES)[facets[:, 1]]
        return np.take_along_axis(self.elements[facets[:, 0]], edges, axis=1)

    def element_dofs(self, dofs_per_node: int = 1) -> np.ndarray:
        if dofs_per_node == 1:
            return self.elements
        k = dofs_per_node
        return (self.elements[:, :, None] * k + np.arange(k)).reshape(self.n_elements, 4 * k)

    def to_dict(self) -> dict:
        out = {
            "nodes": self.nodes.tolist(),
            "elements": self.elements.tolist(),
            "node_sets": {k: v.tolist() for k, v in self.node_sets.items()},
            "facet_sets": {k: v.tolist() for k, v in self.facet_sets.items()},
        }
        if self.fields:
            out["fields"] = {k: v.tolist() for k, v in self.fields.items()}
        return out


@dataclass
class NodalField:
    name: str
    values: np.ndarray
    component_count: int = 1

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(-1)

    @property
    def n_nodes(self) -> int:
        return len(self.values) // self.component_count

    def check(self, mesh: Mesh):
        if len(self.values) != self.component_count * mesh.n_nodes:
            raise MeshError(f"field {self.name!r} has {len(self.values)} values, expected "
                            f"{self.component_count * mesh.n_nodes}")
        return self

    def as_components(self) -> np.ndarray:
        return self.values.reshape(-1, self.component_count)

    def copy(self) -> "NodalField":
        return NodalField(self.name, self.values.copy(), self.component_count)


def _schedule(value) -> tuple[np.ndarray, np.ndarray]:
    if np.isscalar(value):
        return np.array([0.0]), np.array([float(value)])
    pts = np.asarray(value, dtype=float).reshape(-1, 2)
    order = np.argsort(pts[:, 0], kind="stable")
    return pts[order, 0], pts[order, 1]


@dataclass
class DirichletBc:
    """Prescribed nodal value on a node set.

    ``value_schedule`` is either a constant or a list of ``(step, value)``
    points interpolated linearly in step number and held constant outside
    the given range.
    """

    node_set: str
    dof_component: int = 0
    value_schedule: object = 0.0

    def value(self, step: float) -> float:
        steps, values = _schedule(self.value_schedule)
        return float(np.interp(step, steps, values))

    def check(self, mesh: Mesh, component_count: int = 1):
        mesh.node_set(self.node_set)
        if not 0 <= self.dof_component < component_count:
            raise MeshError(f"dof component {self.dof_component} out of range for a "
                            f"{component_count}-component field")
        return self


@dataclass
class NeumannBc:
    """Prescribed boundary flux on a facet set.

    For scalar fields ``flux_value`` is the outward normal flux ``J . n``;
    for displacement it is the traction vector. ``schedule`` optionally
    scales the value by a piecewise-linear factor in step number.
    """

    facet_set: str
    flux_value: object = 0.0
    schedule: object = 1.0

    def value(self, step: float = 0.0):
        steps, factors = _schedule(self.schedule)
        factor = float(np.interp(step, steps, factors))
        v = np.asarray(self.flux_value, dtype=float)
        return factor * v if v.ndim else factor * float(v)

    def check(self, mesh: Mesh):
        mesh.facet_set(self.facet_set)
        return self


def dirichlet_constraints(mesh: Mesh, bcs, step: float, component_count: int = 1):
    """Expand Dirichlet records into ``(dof, value)`` pairs for a given step."""
    out = []
    for bc in bcs:
        bc.check(mesh, component_count)
        v = bc.value(step)
        for node in mesh.node_set(bc.node_set):
            out.append((int(node) * component_count + bc.dof_component, v))
    return out


def generate_grid(nx: int, ny: int, lx: float, ly: float,
                  x0: float = 0.0, y0: float = 0.0) -> Mesh:
    """Structured quad4 grid on ``[x0, x0+lx] x [y0, y0+ly]``.

    Node sets and facet sets ``left``, ``right``, ``bottom`` and ``top`` are
    created automatically. Nodes are numbered row by row from the bottom.
    """
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise MeshError("nx and ny must be positive integers")
    if not (lx > 0 and ly > 0):
        raise MeshError("lx and ly must be positive")
    nx, ny = int(nx), int(ny)
    xs = x0 + np.linspace(0.0, lx, nx + 1)
    ys = y0 + np.linspace(0.0, ly, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    def nid(i, j):
        return j * (nx + 1) + i

    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    i, j = i.ravel(), j.ravel()
    elements = np.column_stack([nid(i, j), nid(i + 1, j), nid(i + 1, j + 1), nid(i, j + 1)])
    eid = lambda i, j: j * nx + i  # noqa: E731
    node_sets = {
        "left": nid(0, np.arange(ny + 1)),
        "right": nid(nx, np.arange(ny + 1)),
        "bottom": nid(np.arange(nx + 1), 0),
        "top": nid(np.arange(nx + 1), ny),
    }
    facet_sets = {
        "bottom": [[eid(k, 0), 0] for k in range(nx)],
        "right": [[eid(nx - 1, k), 1] for k in range(ny)],
        "top": [[eid(k, ny - 1), 2] for k in range(nx)],
        "left": [[eid(0, k), 3] for k in range(ny)],
    }
    return Mesh(nodes, elements, node_sets, facet_sets)


def mesh_from_dict(data: dict) -> Mesh:
    if not isinstance(data, dict):
        raise MeshError("mesh document must be a JSON object")
    for key in ("nodes", "elements"):
        if key not in data:
            raise MeshError(f"mesh: missing required key {key!r}")
    try:
        nodes = np.asarray(data["nodes"], dtype=float)
    except (TypeError, ValueError) as exc:
        raise MeshError(f"mesh.nodes: {exc}") from None
    if nodes.ndim != 2 or nodes.shape[1] != 2:
        raise MeshError(f"mesh.nodes: expected a list of [x, y] pairs, got shape {nodes.shape}")
    try:
        elements = np.asarray(data["elements"])
    except (TypeError, ValueError) as exc:
        raise MeshError(f"mesh.elements: {exc}") from None
    integral = np.issubdtype(elements.dtype, np.integer)
    if elements.ndim != 2 or elements.shape[1] != 4 or not integral:
        raise MeshError("mesh.elements: expected a list of 4 integer node indices per element")
    facet_sets = {}
    for name, facets in data.get("facet_sets", {}).items():
        arr = np.asarray(facets)
        if arr.size and (arr.ndim != 2 or arr.shape[1] != 2):
            raise MeshError(f"mesh.facet_sets.{name}: expected [element, edge] pairs")
        facet_sets[name] = arr.reshape(-1, 2)
    return Mesh(nodes, elements, dict(data.get("node_sets", {})), facet_sets,
                dict(data.get("fields", {})))


def load_mesh(path) -> Mesh:
    """Read and validate a mesh JSON file."""
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MeshError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return mesh_from_dict(data)


def save_mesh(mesh: Mesh, path):
    # repr-precision floats via json keep the round trip exact
    Path(path).write_text(json.dumps(mesh.to_dict()))
