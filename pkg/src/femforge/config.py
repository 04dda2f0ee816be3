"""JSON simulation configuration.

A configuration is a single JSON object::

    {
      "schema_version": 1,
      "physics": "heat",
      "mesh": {"grid": {"nx": 40, "ny": 1, "lx": 1.0, "ly": 0.025}},
      "materials": {"heat": {"rho": 1.0, "c": 1.0, "kx": 1.0, "ky": 1.0}},
      "initial": {"value": 0.0},
      "bcs": {"dirichlet": [{"node_set": "left", "component": 0, "value": 1.0}],
              "neumann": []},
      "stepping": {"dt": 0.001, "n_steps": 100},
      "output": {"stride": 10, "probes": [{"name": "T_mid", "point": [0.5, 0.0]}]},
      "solver": {"tol": 1e-12}
    }

``mesh`` is either ``{"grid": {...}}`` or ``{"path": "mesh.json"}`` (relative
to the config file). Errors raise :class:`ConfigError` naming the offending
entry.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

SCHEMA_VERSION = 1
PHYSICS = ("heat", "transport_a", "transport_b", "elasticity", "plasticity",
           "fracture_brittle", "fracture_ep", "fracture_ep_threshold")
SCALAR_PHYSICS = ("heat", "transport_a", "transport_b")
FRACTURE_KIND = {"fracture_brittle": "brittle", "fracture_ep": "elastoplastic",
                 "fracture_ep_threshold": "elastoplastic_threshold"}

_REQUIRED_MATERIALS = {
    "heat": ("heat",),
    "transport_a": ("transport",),
    "transport_b": ("transport",),
    "elasticity": ("elastic",),
    "plasticity": ("elastic", "hardening"),
    "fracture_brittle": ("elastic", "fracture"),
    "fracture_ep": ("elastic", "hardening", "fracture"),
    "fracture_ep_threshold": ("elastic", "hardening", "fracture"),
}

_MATERIAL_KEYS = {
    "heat": {"rho", "c", "kx", "ky", "Q"},
    "transport": {"D", "zeta_intf", "zeta_n", "zeta_rho", "VH_bar", "R", "T", "s", "Zd", "cB"},
    "elastic": {"E", "nu", "plane_mode"},
    "fracture": {"ell", "wc", "zeta_pc", "k_res", "seed_set", "degraded_sigma_h", "lumped"},
}

_HARDENING_KEYS = {
    "PowerLaw": {"kind", "sigma_y0", "K_h", "n_h", "p_reg"},
    "KME": {"kind", "sigma_y0", "alpha_t", "G_ref", "b_burgers", "M_taylor", "k1", "k2", "rho_0"},
}


def _require(d, key, path, kinds=None):
    if not isinstance(d, dict) or key not in d:
        raise ConfigError("missing required entry", f"{path}.{key}" if path else key)
    return _check_type(d[key], f"{path}.{key}" if path else key, kinds)


def _check_type(value, path, kinds):
    if kinds is None:
        return value
    if kinds is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"expected a number, got {value!r}", path)
        return float(value)
    if kinds is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"expected an integer, got {value!r}", path)
        return value
    if not isinstance(value, kinds):
        name = kinds.__name__ if isinstance(kinds, type) else " or ".join(k.__name__ for k in kinds)
        raise ConfigError(f"expected {name}, got {type(value).__name__}", path)
    return value


def _opt(d, key, path, default, kinds=None):
    if key not in d:
        return default
    return _check_type(d[key], f"{path}.{key}", kinds)


def _numbers(block: dict, path: str, allowed: set, skip=()):
    out = {}
    for key, value in block.items():
        if key not in allowed:
            raise ConfigError(f"unknown parameter (allowed: {', '.join(sorted(allowed))})",
                              f"{path}.{key}")
        if key in skip:
            out[key] = value
            continue
        out[key] = _check_type(value, f"{path}.{key}", float)
    return out


def _schedule(value, path):
    if isinstance(value, bool):
        raise ConfigError("expected a number or [[step, value], ...]", path)
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, list) and value and all(
            isinstance(p, list) and len(p) == 2 and all(
                isinstance(x, (int, float)) and not isinstance(x, bool) for x in p)
            for p in value):
        return [[float(a), float(b)] for a, b in value]
    raise ConfigError("expected a number or a list of [step, value] pairs", path)


@dataclass
class SimulationConfig:
    physics: str
    mesh: dict
    materials: dict
    stepping: dict
    bcs: dict = field(default_factory=lambda: {"dirichlet": [], "neumann": []})
    initial: dict = field(default_factory=dict)
    fields: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    base_dir: Path = field(default_factory=Path.cwd)
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def is_scalar(self) -> bool:
        return self.physics in SCALAR_PHYSICS

    @property
    def is_fracture(self) -> bool:
        return self.physics in FRACTURE_KIND

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.raw, sort_keys=True).encode()).hexdigest()


def parse_config(data: dict, base_dir=None) -> SimulationConfig:
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object")
    known = {"schema_version", "physics", "mesh", "materials", "initial", "bcs", "fields",
             "stepping", "output", "solver", "description"}
    for key in data:
        if key not in known:
            raise ConfigError("unknown top-level entry", key)
    version = _require(data, "schema_version", "", int)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema version {version} (expected {SCHEMA_VERSION})",
                          "schema_version")
    physics = _require(data, "physics", "", str)
    if physics not in PHYSICS:
        raise ConfigError(f"unknown physics {physics!r}; choose from {', '.join(PHYSICS)}",
                          "physics")

    mesh = _require(data, "mesh", "", dict)
    if ("grid" in mesh) == ("path" in mesh):
        raise ConfigError("give exactly one of 'grid' or 'path'", "mesh")
    if "grid" in mesh:
        grid = _check_type(mesh["grid"], "mesh.grid", dict)
        for k in ("nx", "ny"):
            if _require(grid, k, "mesh.grid", int) < 1:
                raise ConfigError("must be >= 1", f"mesh.grid.{k}")
        for k in ("lx", "ly"):
            if not _require(grid, k, "mesh.grid", float) > 0:
                raise ConfigError("must be positive", f"mesh.grid.{k}")
        for k in ("x0", "y0"):
            _opt(grid, k, "mesh.grid", 0.0, float)
    else:
        _check_type(mesh["path"], "mesh.path", str)

    materials = _require(data, "materials", "", dict)
    parsed_materials = {}
    for name in _REQUIRED_MATERIALS[physics]:
        if name not in materials:
            raise ConfigError(f"block required for physics {physics!r} is missing",
                              f"materials.{name}")
    # fracture physics also accept an optional "transport" block (damage-coupled transport)
    for name, block in materials.items():
        path = f"materials.{name}"
        _check_type(block, path, dict)
        if name == "hardening":
            kind = _require(block, "kind", path, str)
            if kind not in _HARDENING_KEYS:
                raise ConfigError(f"unknown hardening law {kind!r} (PowerLaw or KME)",
                                  f"{path}.kind")
            _require(block, "sigma_y0", path, float)
            parsed_materials[name] = _numbers(block, path, _HARDENING_KEYS[kind], skip=("kind",))
        elif name in _MATERIAL_KEYS:
            skip = ("plane_mode", "seed_set", "degraded_sigma_h", "lumped")
            parsed_materials[name] = _numbers(block, path, _MATERIAL_KEYS[name], skip=skip)
        else:
            raise ConfigError("unknown material block", path)
    if "elastic" in parsed_materials:
        el = parsed_materials["elastic"]
        _require(el, "E", "materials.elastic", float)
        _require(el, "nu", "materials.elastic", float)
        mode = el.setdefault("plane_mode", "plane_strain")
        if mode not in ("plane_strain", "plane_stress"):
            raise ConfigError("must be 'plane_strain' or 'plane_stress'",
                              "materials.elastic.plane_mode")
        if "hardening" in _REQUIRED_MATERIALS[physics] and mode != "plane_strain":
            raise ConfigError("plasticity supports plane strain only",
                              "materials.elastic.plane_mode")
    if "fracture" in parsed_materials:
        fr = parsed_materials["fracture"]
        _require(fr, "ell", "materials.fracture", float)
        _require(fr, "wc", "materials.fracture", float)
        if "seed_set" in fr:
            _check_type(fr["seed_set"], "materials.fracture.seed_set", str)
        for key in ("degraded_sigma_h", "lumped"):
            if key in fr:
                _check_type(fr[key], f"materials.fracture.{key}", bool)

    stepping = _require(data, "stepping", "", dict)
    n_steps = _require(stepping, "n_steps", "stepping", int)
    if n_steps < 1:
        raise ConfigError("must be >= 1", "stepping.n_steps")
    dt = _opt(stepping, "dt", "stepping", 1.0, float)
    if physics in SCALAR_PHYSICS or "transport" in parsed_materials:
        dt = _require(stepping, "dt", "stepping", float)
    if not dt > 0:
        raise ConfigError("time step must be positive", "stepping.dt")
    stepping = {"dt": dt, "n_steps": n_steps}

    bcs_in = _opt(data, "bcs", "", {}, dict)
    dirichlet, neumann = [], []
    for k, bc in enumerate(_opt(bcs_in, "dirichlet", "bcs", [], list)):
        path = f"bcs.dirichlet[{k}]"
        _check_type(bc, path, dict)
        comp = _opt(bc, "component", path, 0, int)
        limit = 1 if physics in SCALAR_PHYSICS else 2
        if not 0 <= comp < limit:
            raise ConfigError(f"component must be in 0..{limit - 1}", f"{path}.component")
        dirichlet.append({"node_set": _require(bc, "node_set", path, str), "component": comp,
                          "value": _schedule(_require(bc, "value", path), f"{path}.value")})
    for k, bc in enumerate(_opt(bcs_in, "neumann", "bcs", [], list)):
        path = f"bcs.neumann[{k}]"
        _check_type(bc, path, dict)
        value = _require(bc, "value", path)
        if physics in SCALAR_PHYSICS:
            value = _check_type(value, f"{path}.value", float)
        elif not (isinstance(value, list) and len(value) == 2
                  and all(isinstance(x, (int, float)) for x in value)):
            raise ConfigError("traction must be a [tx, ty] pair", f"{path}.value")
        neumann.append({"facet_set": _require(bc, "facet_set", path, str), "value": value,
                        "schedule": _schedule(bc.get("schedule", 1.0), f"{path}.schedule")})

    initial = _opt(data, "initial", "", {}, dict)
    if initial:
        if set(initial) - {"value", "field"}:
            raise ConfigError("expected 'value' or 'field'", "initial")
        if "value" in initial:
            _check_type(initial["value"], "initial.value", float)
        if "field" in initial:
            _check_type(initial["field"], "initial.field", str)

    fields = _opt(data, "fields", "", {}, dict)
    for name, spec in fields.items():
        if name not in ("g_intf", "phi_n", "sigma_h", "rho_bar", "phi_damage"):
            raise ConfigError("unknown transport field", f"fields.{name}")
        if isinstance(spec, bool) or not isinstance(spec, (int, float, str)):
            raise ConfigError("expected a constant or the name of a mesh field",
                              f"fields.{name}")

    output = dict(_opt(data, "output", "", {}, dict))
    stride = _opt(output, "stride", "output", 0, int)
    if stride < 0:
        raise ConfigError("must be >= 0", "output.stride")
    output["stride"] = stride
    for k, probe in enumerate(_opt(output, "probes", "output", [], list)):
        path = f"output.probes[{k}]"
        _check_type(probe, path, dict)
        _require(probe, "name", path, str)
        if ("node" in probe) == ("point" in probe):
            raise ConfigError("give exactly one of 'node' or 'point'", path)
        if "node" in probe:
            _check_type(probe["node"], f"{path}.node", int)
        else:
            pt = probe["point"]
            if not (isinstance(pt, list) and len(pt) == 2):
                raise ConfigError("expected [x, y]", f"{path}.point")
        comp = _opt(probe, "component", path, 0, int)
        if not 0 <= comp < (1 if physics in SCALAR_PHYSICS else 2):
            raise ConfigError("component out of range", f"{path}.component")
    for k, r in enumerate(_opt(output, "reactions", "output", [], list)):
        path = f"output.reactions[{k}]"
        _check_type(r, path, dict)
        _require(r, "node_set", path, str)
        if _opt(r, "component", path, 0, int) not in (0, 1):
            raise ConfigError("component must be 0 or 1", f"{path}.component")
    for key in ("directory", "csv", "prefix"):
        _opt(output, key, "output", None, str)
    output.setdefault("vtk", True)
    _check_type(output["vtk"], "output.vtk", bool)

    solver = _opt(data, "solver", "", {}, dict)
    allowed = {"tol": float, "max_iter": int, "dense_cap": int, "tol_r": float,
               "newton_max_iter": int, "max_cuts": int, "tol_yield": float,
               "return_map_max_iter": int}
    for key, value in solver.items():
        if key not in allowed:
            raise ConfigError(f"unknown solver option (allowed: {', '.join(sorted(allowed))})",
                              f"solver.{key}")
        _check_type(value, f"solver.{key}", allowed[key])
        if value < 0:
            raise ConfigError("must be non-negative", f"solver.{key}")

    return SimulationConfig(physics=physics, mesh=mesh, materials=parsed_materials,
                            stepping=stepping, bcs={"dirichlet": dirichlet, "neumann": neumann},
                            initial=initial, fields=fields, output=output, solver=solver,
                            base_dir=Path(base_dir) if base_dir else Path.cwd(), raw=data)


def load_config(path) -> SimulationConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration: {exc.strerror}", str(path)) from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}",
                          str(path)) from None
    return parse_config(data, path.parent)
