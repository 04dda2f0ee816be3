"""Named verification suites comparing solvers with independent references.

Each suite returns a list of :class:`Check` records. ``femforge verify <suite>``
prints them as a table and exits non-zero if any check fails.
"""
from __future__ import annotations

import filecmp
import tempfile
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from . import oracles
from .element import (CORNERS, geometry_at, mesh_geometry, shape_derivatives_local,
                      shape_values)
from .fracture import (PffMaterial, StaggeredSolver, assemble_phi_system, solve_phi)
from .heat import (HeatMaterial, assemble_capacity, assemble_conductivity, heat_step, source_load,
                   diffusion_matrix)
from .mechanics import (ElasticModel, MaterialPointState, MechanicsProblem, PLANE_STRAIN,
                        PLANE_STRESS, PowerLaw, KME, assemble_stiffness, continuum_tangent,
                        elastic_matrix, return_map, return_map_batch, strain_at_gauss,
                        von_mises)
from .mesh import DirichletBc, Mesh, NodalField, generate_grid
from .sparse import LinearSolver, apply_dirichlet
from .transport import (MicrostructureFields, TransportMaterial, assemble_diffusivity,
                        assemble_interaction_A, assemble_interaction_B, assemble_load,
                        assemble_mass, assemble_sink, equilibrium_concentration,
                        transport_step_A, transport_step_B)


@dataclass
class Check:
    name: str
    measured: float
    target: str
    passed: bool

    def line(self, suite: str = "") -> str:
        flag = "PASS" if self.passed else "FAIL"
        prefix = f"[{suite}] " if suite else ""
        return f"{flag}  {prefix}{self.name}: measured {self.measured:.3e}, target {self.target}"


def _le(name, measured, tol):
    return Check(name, float(measured), f"<= {tol:.1e}", bool(measured <= tol))


def _ge(name, measured, bound):
    return Check(name, float(measured), f">= {bound:g}", bool(measured >= bound))


def _timed(name, seconds, limit):
    return _le(f"{name} runtime [s]", seconds, limit)


def _random_quads(rng, count):
    """Random convex counterclockwise quads: jittered squares, scaled and rotated."""
    out = []
    while len(out) < count:
        pts = np.asarray(CORNERS, dtype=float) + rng.uniform(-0.35, 0.35, (4, 2))
        theta = rng.uniform(0, 2 * np.pi)
        rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
        pts = rng.uniform(0.2, 5.0) * pts @ rot.T + rng.uniform(-10, 10, 2)
        try:
            mesh_geometry(pts, np.arange(4)[None])
        except ValueError:
            continue
        out.append(pts)
    return out


# --------------------------------------------------------------------- suites


def suite_element() -> list[Check]:
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    pou = kron = grad = 0.0
    for coords in _random_quads(rng, 100):
        xi = rng.uniform(-1, 1, (8, 2))
        for p in xi:
            pou = max(pou, abs(shape_values(p).sum() - 1.0),
                      np.abs(shape_derivatives_local(p).sum(axis=1)).max())
        for a, corner in enumerate(CORNERS):
            kron = max(kron, np.abs(shape_values(corner) - np.eye(4)[a]).max())
        coef = rng.normal(size=3)
        nodal = coef[0] + coords @ coef[1:]
        for p in xi:
            g = geometry_at(p, coords)
            scale = max(1, np.abs(coef[1:]).max())
            grad = max(grad, np.abs(g.dn_dx @ nodal - coef[1:]).max() / scale)
    dt = time.perf_counter() - t0
    return [_le("partition of unity", pou, 1e-12), _le("Kronecker property", kron, 1e-12),
            _le("linear gradient reproduction", grad, 1e-12), _timed("element", dt, 1.0)]


def _patch_mesh():
    nodes = np.array([[0, 0], [1, 0], [2, 0], [0, 1], [1.23, 0.81], [2, 1], [0, 2], [0.92, 2],
                      [2, 2]], dtype=float)
    elements = [[0, 1, 4, 3], [1, 2, 5, 4], [3, 4, 7, 6], [4, 5, 8, 7]]
    return Mesh(nodes, elements, {"boundary": [0, 1, 2, 3, 5, 6, 7, 8]})


def patch_error(plane_mode: str) -> float:
    """Maximum relative deviation of Gauss-point stress from the exact constant stress."""
    mesh = _patch_mesh()
    model = ElasticModel(210.0, 0.3, plane_mode)
    c = elastic_matrix(model)
    a = np.array([[1e-3, 4e-4], [-2e-4, -6e-4]])
    exact_strain = np.array([a[0, 0], a[1, 1], a[0, 1] + a[1, 0]])
    exact = c @ exact_strain
    k = assemble_stiffness(mesh, c)
    rhs = np.zeros(2 * mesh.n_nodes)
    cons = []
    for node in mesh.node_set("boundary"):
        u = a @ mesh.nodes[node]
        cons += [(2 * node, u[0]), (2 * node + 1, u[1])]
    apply_dirichlet(k, rhs, cons)
    u, _ = LinearSolver().solve(k, rhs)
    stress = strain_at_gauss(mesh, u) @ c.T
    return float(np.abs(stress - exact).max() / np.abs(exact).max())


def suite_patch() -> list[Check]:
    t0 = time.perf_counter()
    checks = [_le(f"constant stress, {mode}", patch_error(mode), 1e-10)
              for mode in (PLANE_STRAIN, PLANE_STRESS)]
    return checks + [_timed("patch", time.perf_counter() - t0, 1.0)]


def heat_slab_error(dt=1e-3, t_mid=0.1, nx=40) -> float:
    """Relative L2 error of the 40x1 slab against the image series at ``t_mid``."""
    mesh = generate_grid(nx, 1, 1.0, 1.0 / nx)
    mat = HeatMaterial(1.0, 1.0, 1.0, 1.0)
    m, k = assemble_capacity(mesh, mat), assemble_conductivity(mesh, mat)
    cons = [(int(n), 1.0) for n in mesh.node_set("left")]
    t = NodalField("T", np.zeros(mesh.n_nodes))
    f = np.zeros(mesh.n_nodes)
    solver = LinearSolver()
    for _ in range(int(round(t_mid / dt))):
        t, _ = heat_step(t, dt, m, k, f, cons, solver)
    exact = oracles.slab_temperature(mesh.nodes[:, 0], t_mid)
    return float(np.linalg.norm(t.values - exact) / np.linalg.norm(exact))


def manufactured_errors(sizes=(8, 16, 32)) -> list[float]:
    """L2 errors (Gauss quadrature) of the steady manufactured heat problem."""
    out = []
    for n in sizes:
        mesh = generate_grid(n, n, 1.0, 1.0)
        k = diffusion_matrix(mesh)
        rhs = source_load(mesh, oracles.manufactured_source)
        boundary = np.unique(np.concatenate([mesh.node_set(s) for s in
                                             ("left", "right", "bottom", "top")]))
        apply_dirichlet(k, rhs, [(int(b), 0.0) for b in boundary])
        u, _ = LinearSolver().solve(k, rhs)
        geo = mesh.geometry
        xy = np.einsum("ga,eai->egi", geo.n_values, mesh.nodes[mesh.elements])
        uh = u[mesh.elements] @ geo.n_values.T
        err = uh - oracles.manufactured_temperature(xy[..., 0], xy[..., 1])
        out.append(float(np.sqrt((geo.weights * err ** 2).sum())))
    return out


def suite_heat1d() -> list[Check]:
    t0 = time.perf_counter()
    err = heat_slab_error()
    e = manufactured_errors()
    rates = [e[i] / e[i + 1] for i in range(len(e) - 1)]
    dt = time.perf_counter() - t0
    return [_le("slab L2 error vs series", err, 0.01),
            _ge("manufactured convergence factor (min)", min(rates), 3.5),
            _timed("heat1d", dt, 10.0)]


def transport_reduction() -> tuple[float, float]:
    """Entrywise gap between zeta = 0 transport and heat operators, and relative mass drift."""
    mesh = generate_grid(12, 9, 1.3, 1.0)
    x, y = mesh.nodes.T
    fields = MicrostructureFields(g_intf=0.2 * np.sin(np.pi * x) ** 2 * np.sin(np.pi * y) ** 2,
                                  phi_n=0.5 + 0.4 * np.cos(np.pi * x))
    mat0 = TransportMaterial(D=2.5)
    heat = HeatMaterial(1.0, 1.0, 2.5, 2.5)
    gap = max(np.abs(assemble_mass(mesh, mat0).values - assemble_capacity(mesh, heat).values).max(),
              np.abs(assemble_diffusivity(mesh, mat0).values
                     - assemble_conductivity(mesh, heat).values).max(),
              np.abs(assemble_interaction_A(mesh, mat0, fields).values).max())
    mat = TransportMaterial(D=2.5, zeta_intf=3 * 8.314 * 300, zeta_n=8.314 * 300)
    m = assemble_mass(mesh, mat)
    kd, ki = assemble_diffusivity(mesh, mat), assemble_interaction_A(mesh, mat, fields)
    c = NodalField("c", 1 + 0.5 * np.cos(np.pi * x) * np.cos(np.pi * y))
    f = assemble_load(mesh, mat)
    mass0 = m.matvec(c.values).sum()
    solver = LinearSolver()
    for _ in range(200):
        c, _ = transport_step_A(c, 1e-3, m, kd, ki, f, solver=solver)
    return float(gap), float(abs(m.matvec(c.values).sum() - mass0) / mass0)


def suite_transport() -> list[Check]:
    t0 = time.perf_counter()
    gap, drift = transport_reduction()
    return [_le("zeta = 0 operators vs heat operators", gap, 1e-14),
            _le("zero-flux mass drift over 200 steps", drift, 1e-10),
            _timed("transport", time.perf_counter() - t0, 10.0)]


def segregation_spread(n=40, n_steps=30, dt=10.0, ratio=4.0) -> float:
    """Spread of ``c / exp(ratio g)`` at steady state, relative to its mean."""
    mesh = generate_grid(n, n, 1.0, 1.0)
    x, y = mesh.nodes.T
    g = 0.25 * np.sin(np.pi * x) ** 2 * np.sin(np.pi * y) ** 2
    mat = TransportMaterial(D=1.0, zeta_intf=ratio * 8.314 * 300.0)
    fields = MicrostructureFields(g_intf=g, phi_n=np.zeros(mesh.n_nodes))
    m, kd = assemble_mass(mesh, mat), assemble_diffusivity(mesh, mat)
    ki = assemble_interaction_A(mesh, mat, fields)
    c = NodalField("c", np.ones(mesh.n_nodes))
    f = np.zeros(mesh.n_nodes)
    solver = LinearSolver()
    for _ in range(n_steps):
        c, _ = transport_step_A(c, dt, m, kd, ki, f, solver=solver)
    r = c.values / np.exp(ratio * g)
    return float((r.max() - r.min()) / r.mean())


def suite_segregation() -> list[Check]:
    t0 = time.perf_counter()
    spread = segregation_spread()
    return [_le("c / exp(zeta g / RT) nodal spread", spread, 0.005),
            _timed("segregation", time.perf_counter() - t0, 30.0)]


def sink_error(n_steps=20, dt=0.05) -> float:
    mesh = generate_grid(6, 6, 1.0, 1.0)
    # MPa-mm units: R in N mm / (mol K)
    mat = TransportMaterial(D=1.0, VH_bar=2000.0, zeta_rho=4e5, R=8314.0, s=1.5, Zd=10.0, cB=0.7)
    n = mesh.n_nodes
    fields = MicrostructureFields(sigma_h=np.full(n, 400.0), rho_bar=np.full(n, 0.6),
                                  phi_damage=np.ones(n))
    target = equilibrium_concentration(mat, 400.0, 0.6)
    m, kd = assemble_mass(mesh, mat, "B"), assemble_diffusivity(mesh, mat)
    ki = assemble_interaction_B(mesh, mat, fields)
    c = NodalField("c", np.full(n, mat.cB))
    solver = LinearSolver()
    for step in range(1, n_steps + 1):
        t = step * dt
        ks = assemble_sink(mesh, mat, fields.phi_damage, t)
        f = assemble_load(mesh, mat, (), step, fields, t)
        c, _ = transport_step_B(c, dt, m, kd, ki, ks, f, t_now=t, solver=solver)
    return float(np.abs(c.values / target - 1).max())


def suite_sink() -> list[Check]:
    t0 = time.perf_counter()
    return [_le("relative gap to c_eq under phi = 1", sink_error(), 1e-3),
            _timed("sink", time.perf_counter() - t0, 10.0)]


def _random_strain_states(model, law, rng, count, scale=4e-3):
    """Converged plastic states reached from random strains, with a small further step."""
    out = []
    while len(out) < count:
        eps = rng.normal(size=3) * scale
        st, dp, ok = return_map(model, law, MaterialPointState(), eps)
        if dp > 0 and ok:
            out.append((st, eps))
    return out


def returnmap_errors(seed=3):
    """Closed-form and bisection comparisons plus yield/incompressibility residuals."""
    rng = np.random.default_rng(seed)
    model = ElasticModel(200e3, 0.3)
    G = model.mu
    closed = bisect = yield_res = trace = 0.0
    h = 1500.0
    lin = PowerLaw(sigma_y0=300.0, K_h=h, n_h=1.0, p_reg=0.0)
    laws = [PowerLaw(300.0, 900.0, 0.4, 1e-8), PowerLaw(300.0, 500.0, 0.25, 1e-10),
            PowerLaw(300.0, 2000.0, 2.0, 0.0), KME(300.0)]
    for _ in range(200):
        p_old = rng.uniform(0, 0.02)
        ep_old = rng.normal(size=4) * 1e-3
        ep_old[2] = -ep_old[0] - ep_old[1]
        strain = np.zeros(4)
        strain[[0, 1, 3]] = rng.normal(size=3) * 5e-3
        r = return_map_batch(model, lin, strain[None], ep_old[None], p_old)
        s_tr = model.c4() @ (strain - ep_old)
        seq_tr = von_mises(s_tr)
        expected = max(seq_tr - lin.sigma_y0 - h * p_old, 0.0) / (3 * G + h)
        closed = max(closed, abs(r.dp[0] - expected) / max(expected, 1e-300) if expected else
                     abs(r.dp[0]))
        for law in laws:
            r = return_map_batch(model, law, strain[None], ep_old[None], p_old)
            ref = oracles.consistency_increment(seq_tr, G, law.sigma_y0,
                                                lambda p: law.evaluate(p)[0], p_old)
            bisect = max(bisect, abs(r.dp[0] - ref))
            if r.plastic[0]:
                H, _ = law.evaluate(r.p[0])
                yield_res = max(yield_res, abs(von_mises(r.stress[0]) - law.sigma_y0 - H)
                                / law.sigma_y0)
            trace = max(trace, abs(r.plastic_strain[0, :3].sum()))
    return closed, bisect, yield_res, trace


def suite_returnmap() -> list[Check]:
    t0 = time.perf_counter()
    closed, bisect, yield_res, trace = returnmap_errors()
    return [_le("linear hardening closed form (relative)", closed, 1e-12),
            _le("PowerLaw/KME vs bisection (absolute dp)", bisect, 1e-10),
            _le("|f| / sigma_y at converged points", yield_res, 1e-8),
            _le("trace of plastic strain", trace, 1e-10),
            _timed("returnmap", time.perf_counter() - t0, 5.0)]


def tangent_errors(seed=5, delta=1e-7, step=1e-7):
    """Finite-difference check of the continuum tangent.

    Plastic states are first converged, then advanced by a further small step
    of size ``step``; the stress update of that step is differentiated in
    random directions of size ``delta``.
    """
    rng = np.random.default_rng(seed)
    model = ElasticModel(200e3, 0.3)
    worst_plastic = worst_elastic = 0.0
    for law in (PowerLaw(300.0, 900.0, 0.4, 1e-8), PowerLaw(300.0, 0.0, 1.0, 0.0), KME(300.0)):
        for state, eps in _random_strain_states(model, law, rng, 20):
            base = eps + rng.normal(size=3) * step
            s1, dp, _ = return_map(model, law, state, base)
            c = continuum_tangent(model, law, s1)
            for _ in range(5):
                d = rng.normal(size=3)
                d *= delta / np.linalg.norm(d)
                s2, dp2, _ = return_map(model, law, state, base + d)
                if (dp2 > 0) != (dp > 0):
                    continue
                fd = (s2.stress - s1.stress)[[0, 1, 3]]
                err = np.linalg.norm(fd - c @ d) / np.linalg.norm(c @ d)
                if dp > 0:
                    worst_plastic = max(worst_plastic, err)
                else:
                    worst_elastic = max(worst_elastic, err)
        # elastic branch: small strains from the virgin state
        for _ in range(20):
            eps = rng.normal(size=3) * 2e-4
            s1, dp, _ = return_map(model, law, MaterialPointState(), eps)
            c = continuum_tangent(model, law, s1)
            d = rng.normal(size=3)
            d *= delta / np.linalg.norm(d)
            s2, _, _ = return_map(model, law, MaterialPointState(), eps + d)
            fd = (s2.stress - s1.stress)[[0, 1, 3]]
            worst_elastic = max(worst_elastic, np.linalg.norm(fd - c @ d) / np.linalg.norm(c @ d))
    return worst_plastic, worst_elastic


def suite_tangent() -> list[Check]:
    t0 = time.perf_counter()
    plastic, elastic = tangent_errors()
    return [_le("plastic branch relative FD mismatch", plastic, 0.02),
            _le("elastic branch relative FD mismatch", elastic, 1e-10),
            _timed("tangent", time.perf_counter() - t0, 5.0)]


def uniaxial_curve(n_steps=40, max_strain=0.01):
    """Single-element plane-strain tension: FE stresses and oracle stresses per step."""
    E, nu, sy, K, n = 200e3, 0.3, 250.0, 800.0, 0.45
    law = PowerLaw(sy, K, n, 1e-8)
    mesh = generate_grid(1, 1, 1.0, 1.0)
    bcs = [DirichletBc("left", 0, 0.0), DirichletBc("bottom", 1, 0.0),
           DirichletBc("right", 0, [(0, 0.0), (n_steps, max_strain)])]
    problem = MechanicsProblem(mesh, ElasticModel(E, nu), law, bcs)
    fe = []
    for step in range(1, n_steps + 1):
        problem.advance(float(step))
        fe.append(problem.state.stress[..., 0].mean())
    material = oracles.TensorJ2(E, nu, sy, lambda p: law.evaluate(p)[0])
    path = max_strain * np.arange(1, n_steps + 1) / n_steps
    ref = [r["sigma_xx"] for r in oracles.uniaxial_plane_strain(material, path)]
    return np.array(fe), np.array(ref)


def suite_uniaxial() -> list[Check]:
    t0 = time.perf_counter()
    fe, ref = uniaxial_curve()
    err = np.abs(fe / ref - 1).max()
    return [_le("max relative stress error over the ramp", err, 1e-3),
            _timed("uniaxial", time.perf_counter() - t0, 5.0)]


def pff_checks():
    """Homogeneous fixed point and pinned-profile errors (two mesh sizes)."""
    mat = PffMaterial(ell=4.0, wc=1.0)
    mesh = generate_grid(7, 5, 3.0, 2.0)
    h = 0.83
    k, f = assemble_phi_system(mesh, mat, h)
    homog = np.abs(solve_phi(k, f, solver=LinearSolver()).values - h / (1 + h)).max()
    profile = []
    for nx in (40, 80):
        mesh = generate_grid(nx, 1, 40.0, 40.0 / nx)
        k, f = assemble_phi_system(mesh, mat, 0.0)
        pin = np.flatnonzero(np.isclose(mesh.nodes[:, 0], 20.0))
        phi = solve_phi(k, f, pin, LinearSolver()).values
        exact = oracles.crack_profile(mesh.nodes[:, 0], 20.0, mat.ell)
        profile.append(float(np.linalg.norm(phi - exact) / np.linalg.norm(exact)))
    return float(homog), profile


def suite_pff() -> list[Check]:
    t0 = time.perf_counter()
    homog, profile = pff_checks()
    return [_le("uniform H: |phi - h/(1+h)|", homog, 1e-10),
            _le("pinned profile L2 error, l = 4 element widths", profile[0], 0.02),
            Check("profile error decreases under refinement", profile[1], f"< {profile[0]:.3e}",
                  profile[1] < profile[0]),
            _timed("pff", time.perf_counter() - t0, 10.0)]


def load_unload_run(wc, n_steps=24, with_fracture=True):
    """Plane-strain elastoplastic strip, pulled to step 14 then partly unloaded.

    Returns the per-step history maxima, nodal phi maxima, min nodal phi
    increments, min history increments, and the displacement/stress trajectory.
    """
    mesh = generate_grid(6, 3, 2.0, 1.0)
    model = ElasticModel(200e3, 0.3)
    law = PowerLaw(250.0, 600.0, 0.5, 1e-8)
    bcs = [DirichletBc("left", 0, 0.0), DirichletBc("bottom", 1, 0.0),
           DirichletBc("right", 0, [(0, 0.0), (14, 0.012), (n_steps, 0.004)])]
    mech = MechanicsProblem(mesh, model, law, bcs)
    stag = StaggeredSolver(mech, PffMaterial(0.5, wc, driving_force="elastoplastic")) \
        if with_fracture else None
    traj = []
    h_prev = phi_prev = None
    dh = dphi = np.inf
    for step in range(1, n_steps + 1):
        if stag is None:
            mech.advance(float(step))
        else:
            stag.step(float(step))
            h, phi = stag.state.history.copy(), stag.state.phi.values.copy()
            if h_prev is not None:
                dh = min(dh, (h - h_prev).min())
                dphi = min(dphi, (phi - phi_prev).min())
            h_prev, phi_prev = h, phi
        traj.append(np.concatenate([mech.u, mech.state.stress.ravel()]))
    return np.array(traj), dh, dphi, (None if stag is None else float(stag.state.phi.values.max()))


def suite_irreversibility() -> list[Check]:
    t0 = time.perf_counter()
    _, dh, dphi, phi_max = load_unload_run(wc=2.0)
    pure, _, _, _ = load_unload_run(wc=np.inf, with_fracture=False)
    limit, _, _, _ = load_unload_run(wc=np.inf)
    gap = np.abs(limit - pure).max() / np.abs(pure).max()
    return [_ge("min step-over-step history increment", dh, 0.0),
            _ge("min step-over-step nodal phi increment", dphi, 0.0),
            _ge("damage developed (max phi)", phi_max, 0.01),
            _le("w_c = inf vs pure mechanics (relative)", gap, 1e-12),
            _timed("irreversibility", time.perf_counter() - t0, 30.0)]


def shipped_configs() -> list[Path]:
    root = resources.files("femforge") / "configs"
    return sorted(Path(str(p)) for p in root.iterdir() if p.name.endswith(".json")
                  and not p.name.endswith("_mesh.json"))


def suite_determinism() -> list[Check]:
    from .config import load_config
    from .runner import run_simulation
    checks = []
    for path in shipped_configs():
        with tempfile.TemporaryDirectory() as tmp:
            cfg = load_config(path)
            t0 = time.perf_counter()
            run_simulation(cfg, Path(tmp) / "a", quiet=True)
            elapsed = time.perf_counter() - t0
            run_simulation(cfg, Path(tmp) / "b", quiet=True)
            csvs = sorted(p.name for p in (Path(tmp) / "a").glob("*.csv"))
            same = bool(csvs) and all(filecmp.cmp(Path(tmp) / "a" / n, Path(tmp) / "b" / n,
                                                  shallow=False) for n in csvs)
            checks.append(Check(f"{path.stem}: bit-identical CSV", float(not same),
                                "identical", same))
            checks.append(_timed(path.stem, elapsed, 60.0))
    return checks


SUITES = {
    "element": suite_element,
    "patch": suite_patch,
    "heat1d": suite_heat1d,
    "transport": suite_transport,
    "segregation": suite_segregation,
    "sink": suite_sink,
    "returnmap": suite_returnmap,
    "tangent": suite_tangent,
    "uniaxial": suite_uniaxial,
    "pff": suite_pff,
    "irreversibility": suite_irreversibility,
    "determinism": suite_determinism,
}


def run_suite(name: str, out=print) -> bool:
    """Run one suite (or ``all``), print a table, return True iff every check passed."""
    names = list(SUITES) if name == "all" else [name]
    for n in names:
        if n not in SUITES:
            raise KeyError(f"unknown suite {name!r}; available: {', '.join(SUITES)}, all")
    ok = True
    for n in names:
        for check in SUITES[n]():
            out(check.line(n))
            ok &= check.passed
    return ok
