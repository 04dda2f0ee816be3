"""Batch pipelines: build the model from a configuration, step it, write outputs."""
from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .config import FRACTURE_KIND, SimulationConfig
from .errors import ConfigError
from .fracture import PffMaterial, StaggeredSolver, TransportCoupling, crack_surface
from .heat import (HeatMaterial, assemble_capacity, assemble_conductivity, assemble_heat_load,
                   implicit_euler_step)
from .io import element_average, write_csv, write_vtk
from .mechanics import (KME, ElasticModel, MechanicsFailure, MechanicsProblem, PowerLaw,
                        hydrostatic_stress, von_mises)
from .mesh import DirichletBc, Mesh, MeshError, NeumannBc, NodalField, generate_grid, load_mesh
from .sparse import (LinearSolver, PreconditionerError, SingularMatrixError, SolverFailure)
from .transport import (MicrostructureFields, TransportMaterial, assemble_diffusivity,
                        assemble_interaction_A, assemble_interaction_B, assemble_load,
                        assemble_mass, assemble_sink, recover_nodal)

SOLVER_ERRORS = (MechanicsFailure, SolverFailure, SingularMatrixError, PreconditionerError,
                 np.linalg.LinAlgError, FloatingPointError)


class RunFailure(RuntimeError):
    """A solver failed during a run; ``step`` is the failing step number."""

    def __init__(self, message, step=None, report=None):
        super().__init__(message)
        self.step = step
        self.report = report


@dataclass
class RunManifest:
    config_hash: str
    physics: str
    threads: int = 1
    steps: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    status: str = "running"

    def write(self, path):
        Path(path).write_text(json.dumps(asdict(self), indent=2, default=_json_default))


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(type(obj).__name__)


def _build(path, factory, **kwargs):
    try:
        return factory(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), path) from None


def build_mesh(cfg: SimulationConfig) -> Mesh:
    try:
        if "grid" in cfg.mesh:
            g = cfg.mesh["grid"]
            return generate_grid(g["nx"], g["ny"], g["lx"], g["ly"], g.get("x0", 0.0),
                                 g.get("y0", 0.0))
        return load_mesh(cfg.base_dir / cfg.mesh["path"])
    except OSError as exc:
        raise ConfigError(f"cannot read mesh: {exc.strerror}", "mesh.path") from None
    except ValueError as exc:
        raise ConfigError(str(exc), "mesh") from None


def _check_sets(cfg: SimulationConfig, mesh: Mesh):
    for k, bc in enumerate(cfg.bcs["dirichlet"]):
        if bc["node_set"] not in mesh.node_sets:
            raise ConfigError(f"unknown node set {bc['node_set']!r}",
                              f"bcs.dirichlet[{k}].node_set")
    for k, bc in enumerate(cfg.bcs["neumann"]):
        if bc["facet_set"] not in mesh.facet_sets:
            raise ConfigError(f"unknown facet set {bc['facet_set']!r}",
                              f"bcs.neumann[{k}].facet_set")
    for k, r in enumerate(cfg.output.get("reactions", [])):
        if r["node_set"] not in mesh.node_sets:
            raise ConfigError(f"unknown node set {r['node_set']!r}",
                              f"output.reactions[{k}].node_set")
    seed = cfg.materials.get("fracture", {}).get("seed_set")
    if seed is not None:
        if seed not in mesh.node_sets:
            raise ConfigError(f"unknown node set {seed!r}", "materials.fracture.seed_set")
        if len(mesh.node_sets[seed]) == 0:
            raise ConfigError(f"node set {seed!r} is empty", "materials.fracture.seed_set")


def _field(cfg: SimulationConfig, mesh: Mesh, name: str):
    spec = cfg.fields.get(name, name if name in mesh.fields else None)
    if spec is None:
        return None
    if isinstance(spec, str):
        if spec not in mesh.fields:
            raise ConfigError(f"mesh has no field {spec!r}", f"fields.{name}")
        values = mesh.fields[spec].reshape(-1)
        if len(values) != mesh.n_nodes:
            raise ConfigError(f"mesh field {spec!r} is not a scalar nodal field", f"fields.{name}")
        return values
    return np.full(mesh.n_nodes, float(spec))


def _probe_nodes(cfg: SimulationConfig, mesh: Mesh):
    out = []
    for k, probe in enumerate(cfg.output.get("probes", [])):
        if "node" in probe:
            node = probe["node"]
            if not 0 <= node < mesh.n_nodes:
                raise ConfigError("node index out of range", f"output.probes[{k}].node")
        else:
            d = np.linalg.norm(mesh.nodes - np.asarray(probe["point"], dtype=float), axis=1)
            node = int(np.argmin(d))
        out.append((probe["name"], node, probe.get("component", 0)))
    return out


def _dirichlet(cfg):
    return [DirichletBc(b["node_set"], b["component"], b["value"]) for b in cfg.bcs["dirichlet"]]


def _neumann(cfg):
    return [NeumannBc(b["facet_set"], b["value"], b["schedule"]) for b in cfg.bcs["neumann"]]


def _linear_solver(cfg) -> LinearSolver:
    s = cfg.solver
    return LinearSolver(tol=s.get("tol", 1e-12), max_iter=s.get("max_iter"),
                        dense_cap=s.get("dense_cap", 3000))


def _initial(cfg, mesh, default=0.0):
    init = cfg.initial
    if "field" in init:
        if init["field"] not in mesh.fields:
            raise ConfigError(f"mesh has no field {init['field']!r}", "initial.field")
        return mesh.fields[init["field"]].reshape(-1).astype(float)
    return np.full(mesh.n_nodes, float(init.get("value", default)))


def _hardening(block):
    params = {k: v for k, v in block.items() if k != "kind"}
    factory = PowerLaw if block["kind"] == "PowerLaw" else KME
    return _build("materials.hardening", factory, **params)


class Run:
    """One configured simulation; call :meth:`execute`."""

    def __init__(self, cfg: SimulationConfig, output_dir=None, quiet: bool = True,
                 threads: int = 1, log=print):
        self.cfg = cfg
        self.quiet = quiet
        self.log = log
        out = output_dir or cfg.output.get("directory") or "output"
        self.out = Path(out) if Path(out).is_absolute() or output_dir else cfg.base_dir / out
        self.prefix = cfg.output.get("prefix", cfg.physics)
        self.mesh = build_mesh(cfg)
        _check_sets(cfg, self.mesh)
        self.probes = _probe_nodes(cfg, self.mesh)
        self.solver = _linear_solver(cfg)
        self.manifest = RunManifest(cfg.digest(), cfg.physics, threads)
        self.rows = []

    # ------------------------------------------------------------ helpers

    def _say(self, msg):
        if not self.quiet:
            self.log(msg)

    def _snapshot(self, step, point_data, cell_data=None, force=False):
        if not self.cfg.output.get("vtk", True):
            return
        stride = self.cfg.output["stride"]
        last = step == self.cfg.stepping["n_steps"]
        if not (force or last or (stride and step % stride == 0)):
            return
        name = f"{self.prefix}_{step:04d}.vtk"
        write_vtk(self.mesh, point_data, self.out / name, cell_data,
                  title=f"{self.cfg.physics} step {step}")
        self.manifest.outputs.append(name)

    def execute(self) -> RunManifest:
        self.out.mkdir(parents=True, exist_ok=True)
        t0 = time.perf_counter()
        try:
            if self.cfg.is_scalar:
                self._run_scalar()
            else:
                self._run_solid()
            self.manifest.status = "completed"
        except BaseException:
            self.manifest.status = "failed"
            raise
        finally:
            csv_name = self.cfg.output.get("csv", f"{self.prefix}.csv")
            if self.rows:
                write_csv(self.rows, self.out / csv_name)
                self.manifest.outputs.append(csv_name)
            self.manifest.timings["total_s"] = time.perf_counter() - t0
            self.manifest.write(self.out / "manifest.json")
        return self.manifest

    def _record(self, step, report, wall):
        self.manifest.steps.append({"step": step, "wall_s": wall, "report": report})

    # ------------------------------------------------------------ heat and transport

    def _scalar_setup(self):
        cfg, mesh = self.cfg, self.mesh
        if cfg.physics == "heat":
            mat = _build("materials.heat", HeatMaterial, **cfg.materials["heat"])
            m = assemble_capacity(mesh, mat)
            k = assemble_conductivity(mesh, mat)
            return "T", m, k, lambda step: assemble_heat_load(mesh, mat, self.neumann, step), {}
        mat = _build("materials.transport", TransportMaterial, **cfg.materials["transport"])
        names = ("g_intf", "phi_n") if cfg.physics == "transport_a" else (
            "sigma_h", "rho_bar", "phi_damage")
        values = {n: _field(cfg, mesh, n) for n in names}
        try:
            fields = MicrostructureFields(**values)
        except ValueError as exc:
            raise ConfigError(str(exc), "fields") from None
        if cfg.physics == "transport_a":
            k_d = assemble_diffusivity(mesh, mat)
            k_i = assemble_interaction_A(mesh, mat, fields)
            k = k_d.linear_combination((1.0, k_d), (-1.0, k_i))
            m = assemble_mass(mesh, mat, "A")
            return "c", m, k, lambda step: assemble_load(mesh, mat, self.neumann, step), values
        if fields.sigma_h is None:
            fields.sigma_h = np.zeros(mesh.n_nodes)
        if fields.rho_bar is None:
            fields.rho_bar = np.zeros(mesh.n_nodes)
        k_base = assemble_diffusivity(mesh, mat)
        k_base = k_base.linear_combination((1.0, k_base),
                                           (-1.0, assemble_interaction_B(mesh, mat, fields)))
        m = assemble_mass(mesh, mat, "B")
        dt = cfg.stepping["dt"]
        if fields.phi_damage is None:
            return "c", m, k_base, lambda step: assemble_load(mesh, mat, self.neumann, step), values

        def operator(step):
            t_now = step * dt
            ks = assemble_sink(mesh, mat, fields.phi_damage, t_now)
            return k_base.linear_combination((1.0, k_base), (1.0, ks))

        load = lambda step: assemble_load(mesh, mat, self.neumann, step, fields, step * dt)  # noqa: E731
        return "c", m, operator, load, values

    def _run_scalar(self):
        cfg, mesh = self.cfg, self.mesh
        self.neumann = _neumann(cfg)
        dirichlet = _dirichlet(cfg)
        name, m, k, load, extra = self._scalar_setup()
        u = _initial(cfg, mesh)
        dt, n = cfg.stepping["dt"], cfg.stepping["n_steps"]
        extra = {key: v for key, v in extra.items() if v is not None}
        self._snapshot(0, {name: u, **extra}, force=True)
        for step in range(1, n + 1):
            t = time.perf_counter()
            cons = [(int(node), bc.value(step)) for bc in dirichlet
                    for node in mesh.node_set(bc.node_set)]
            kk = k(step) if callable(k) else k
            try:
                u, rep = implicit_euler_step(u, dt, m, kk, load(step), cons, self.solver,
                                             symmetric=cfg.physics == "heat")
            except SOLVER_ERRORS as exc:
                raise RunFailure(f"step {step}: {exc}", step,
                                 getattr(exc, "report", None)) from exc
            if not np.all(np.isfinite(u)):
                raise RunFailure(f"step {step}: non-finite solution", step)
            row = {"step": step, "time": step * dt}
            for pname, node, _ in self.probes:
                row[pname] = float(u[node])
            row["integral"] = float(m.matvec(u).sum())
            row["min"] = float(u.min())
            row["max"] = float(u.max())
            row["iterations"] = rep.iterations
            self.rows.append(row)
            self._record(step, rep.as_dict(), time.perf_counter() - t)
            self._snapshot(step, {name: u, **extra})
            self._say(f"step {step}/{n}  t={step * dt:.6g}  {name} in "
                      f"[{u.min():.6g}, {u.max():.6g}]  {rep.method} {rep.iterations} it")

    # ------------------------------------------------------------ solids

    def _mechanics(self) -> MechanicsProblem:
        cfg = self.cfg
        model = _build("materials.elastic", ElasticModel, **cfg.materials["elastic"])
        law = _hardening(cfg.materials["hardening"]) if (
            "hardening" in cfg.materials and cfg.physics not in ("elasticity", "fracture_brittle")
        ) else None
        s = cfg.solver
        try:
            return MechanicsProblem(self.mesh, model, law, _dirichlet(cfg), _neumann(cfg),
                                    tol_r=s.get("tol_r", 1e-8),
                                    max_iter=s.get("newton_max_iter", 25),
                                    max_cuts=s.get("max_cuts", 4),
                                    tol_yield=s.get("tol_yield"),
                                    rm_max_iter=s.get("return_map_max_iter", 50),
                                    solver=self.solver)
        except (MeshError, ValueError) as exc:
            raise ConfigError(str(exc), "bcs") from None

    def _staggered(self, mech):
        cfg = self.cfg
        block = dict(cfg.materials["fracture"])
        seed = block.pop("seed_set", None)
        degraded = block.pop("degraded_sigma_h", True)
        pff = _build("materials.fracture", PffMaterial,
                     driving_force=FRACTURE_KIND[cfg.physics], **block)
        coupling = None
        if "transport" in cfg.materials:
            tmat = _build("materials.transport", TransportMaterial, **cfg.materials["transport"])
            coupling = TransportCoupling(tmat, NodalField("c", _initial(cfg, self.mesh, 1.0)),
                                         cfg.stepping["dt"], use_degraded_stress=degraded,
                                         solver=self.solver)
        return StaggeredSolver(mech, pff, seed, coupling, self.solver)

    def _solid_snapshot(self, step, mech, stag=None, force=False):
        mesh, st = self.mesh, mech.state
        point = {"displacement": mech.displacement()}
        sh = hydrostatic_stress(mech.model, st.stress)
        point["sigma_h"] = recover_nodal(mesh, sh).values
        cell = {"stress": element_average(mesh, st.stress),
                "von_mises": element_average(mesh, von_mises(st.stress)),
                "p": element_average(mesh, st.p)}
        if stag is not None:
            point["phi"] = stag.state.phi.values
            cell["history"] = element_average(mesh, stag.state.history)
            if stag.transport is not None:
                point["c"] = stag.transport.c.values
        self._snapshot(step, point, cell, force)

    def _run_solid(self):
        cfg = self.cfg
        mech = self._mechanics()
        stag = self._staggered(mech) if cfg.is_fracture else None
        n = cfg.stepping["n_steps"]
        self._solid_snapshot(0, mech, stag, force=True)
        for step in range(1, n + 1):
            t = time.perf_counter()
            try:
                if stag is None:
                    rep = mech.advance(float(step))
                    report = rep.as_dict()
                else:
                    srep = stag.step(float(step))
                    rep = srep.mechanics
                    report = srep.as_dict()
            except SOLVER_ERRORS as exc:
                raise RunFailure(f"step {step}: {exc}", step,
                                 getattr(exc, "report", None)) from exc
            row = {"step": step}
            for r in cfg.output.get("reactions", []):
                comp = r.get("component", 0)
                row[f"reaction_{r['node_set']}_{'xy'[comp]}"] = mech.reaction_force(
                    r["node_set"], comp)
            u = mech.displacement()
            for pname, node, comp in self.probes:
                row[pname] = float(u[node, comp])
            row["max_von_mises"] = float(von_mises(mech.state.stress).max())
            row["max_p"] = float(mech.state.p.max())
            if stag is not None:
                row["phi_min"] = float(stag.state.phi.values.min())
                row["phi_max"] = float(stag.state.phi.values.max())
                row["history_max"] = float(stag.state.history.max())
                row["crack_length"] = crack_surface(self.mesh, stag.state.phi, stag.material.ell)
                if stag.transport is not None:
                    c = stag.transport.c.values
                    row["c_min"], row["c_max"] = float(c.min()), float(c.max())
            row["newton_iterations"] = rep.iterations
            row["cuts"] = rep.cuts
            self.rows.append(row)
            self._record(step, report, time.perf_counter() - t)
            self._solid_snapshot(step, mech, stag)
            self._say(f"step {step}/{n}  newton {rep.iterations} it, {rep.cuts} cuts"
                      + (f"  phi_max={row['phi_max']:.4g}" if stag is not None else ""))


def run_simulation(cfg: SimulationConfig, output_dir=None, quiet: bool = True, threads: int = 1,
                   log=print) -> RunManifest:
    return Run(cfg, output_dir, quiet, threads, log).execute()
