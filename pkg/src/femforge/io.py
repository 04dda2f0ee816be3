"""VTK legacy ASCII output (with a minimal reader) and CSV time series."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .mesh import Mesh

VTK_QUAD = 9


def _fmt(values) -> str:
    return " ".join(repr(float(v)) for v in np.ravel(values))


def _data_block(lines, name, arr, n, vectors_ok):
    a = np.asarray(arr, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.shape[0] != n:
        raise ValueError(f"array {name!r} has {a.shape[0]} rows, expected {n}")
    k = a.shape[1]
    if vectors_ok and k in (2, 3):
        pad = np.zeros((n, 3))
        pad[:, :k] = a
        lines.append(f"VECTORS {name} double")
        lines.extend(_fmt(row) for row in pad)
    elif 1 <= k <= 4:
        lines.append(f"SCALARS {name} double {k}")
        lines.append("LOOKUP_TABLE default")
        lines.extend(_fmt(row) for row in a)
    else:
        raise ValueError(f"array {name!r} has {k} components; at most 4 are supported")


def write_vtk(mesh: Mesh, point_data: dict, path, cell_data: dict | None = None,
              title: str = "femforge output"):
    """Write an unstructured grid of quads.

    Point arrays with 2 or 3 components are written as VECTORS (2D vectors get a
    zero z component); other arrays as SCALARS with up to 4 components.
    """
    lines = ["# vtk DataFile Version 3.0", title.replace("\n", " ")[:255], "ASCII",
             "DATASET UNSTRUCTURED_GRID", f"POINTS {mesh.n_nodes} double"]
    lines.extend(f"{x!r} {y!r} 0.0" for x, y in mesh.nodes.tolist())
    ne = mesh.n_elements
    lines.append(f"CELLS {ne} {5 * ne}")
    lines.extend("4 " + " ".join(map(str, row)) for row in mesh.elements.tolist())
    lines.append(f"CELL_TYPES {ne}")
    lines.extend([str(VTK_QUAD)] * ne)
    if point_data:
        lines.append(f"POINT_DATA {mesh.n_nodes}")
        for name, arr in point_data.items():
            _data_block(lines, name, arr, mesh.n_nodes, vectors_ok=True)
    if cell_data:
        lines.append(f"CELL_DATA {ne}")
        for name, arr in cell_data.items():
            _data_block(lines, name, arr, ne, vectors_ok=False)
    Path(path).write_text("\n".join(lines) + "\n")


def read_vtk(path) -> dict:
    """Parse files written by :func:`write_vtk`.

    Returns
    -------
    dict
        Keys ``points`` (n, 3), ``cells`` (ne, 4), ``cell_types``,
        ``point_data`` and ``cell_data`` (name to array).
    """
    tokens = Path(path).read_text().split("\n")
    out = {"point_data": {}, "cell_data": {}}
    i = 4
    section = None
    while i < len(tokens):
        line = tokens[i].split()
        i += 1
        if not line:
            continue
        key = line[0]
        if key == "POINTS":
            n = int(line[1])
            out["points"] = np.array([tokens[i + k].split() for k in range(n)], dtype=float)
            i += n
        elif key == "CELLS":
            n = int(line[1])
            rows = np.array([tokens[i + k].split() for k in range(n)], dtype=np.int64)
            out["cells"] = rows[:, 1:]
            i += n
        elif key == "CELL_TYPES":
            n = int(line[1])
            out["cell_types"] = np.array(tokens[i:i + n], dtype=np.int64)
            i += n
        elif key in ("POINT_DATA", "CELL_DATA"):
            kind = "point_data" if key == "POINT_DATA" else "cell_data"
            section = (kind, int(line[1]))
        elif key in ("SCALARS", "VECTORS"):
            name, n = line[1], section[1]
            if key == "SCALARS":
                i += 1  # LOOKUP_TABLE
            arr = np.array([tokens[i + k].split() for k in range(n)], dtype=float)
            i += n
            out[section[0]][name] = arr[:, 0] if arr.shape[1] == 1 else arr
        else:
            raise ValueError(f"unexpected VTK keyword {key!r} on line {i}")
    return out


def write_csv(series, path, columns=None):
    """Write a list of row dicts with a header row; floats use round-trip repr."""
    series = list(series)
    if columns is None:
        columns = []
        for row in series:
            columns.extend(k for k in row if k not in columns)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in series:
            w.writerow([_cell(row.get(c, "")) for c in columns])


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def element_average(mesh: Mesh, gauss_values) -> np.ndarray:
    """Area-weighted per-element average of Gauss-point data (ne, ng, ...)."""
    v = np.asarray(gauss_values, dtype=float)
    w = mesh.geometry.weights
    wv = np.einsum("eg,eg...->e...", w, v)
    return wv / w.sum(axis=1).reshape((-1,) + (1,) * (v.ndim - 2))
