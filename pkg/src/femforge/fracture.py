"""Phase-field fracture with history-tracked driving forces and a staggered driver.

The order parameter solves ``phi - ell^2 lap(phi) = (1 - phi) H`` with the
history ``H`` frozen from the latest mechanics solve. Stress and stiffness
are degraded by ``g_d(phi)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .heat import diffusion_matrix, interpolate_at_gauss, mass_matrix
from .mechanics import MechanicsProblem, hydrostatic_stress
from .mesh import Mesh, NodalField
from .sparse import LinearSolver, SparseMatrix, apply_dirichlet, assemble_vector
from .transport import (MicrostructureFields, TransportMaterial, assemble_diffusivity,
                        assemble_interaction_B, assemble_load, assemble_mass, assemble_sink,
                        recover_nodal, transport_step_B)

DRIVING_FORCES = ("brittle", "elastoplastic", "elastoplastic_threshold")


@dataclass(frozen=True)
class PffMaterial:
    ell: float
    wc: float
    zeta_pc: float = 1.0
    driving_force: str = "brittle"
    k_res: float = 1e-8
    lumped: bool = False

    def __post_init__(self):
        if not self.ell > 0:
            raise ValueError("length scale ell must be positive")
        if not self.wc > 0:
            raise ValueError("critical energy density wc must be positive")
        if not self.zeta_pc > 0:
            raise ValueError("post-critical parameter zeta must be positive")
        if self.driving_force not in DRIVING_FORCES:
            raise ValueError(f"driving_force must be one of {DRIVING_FORCES}")
        if not 0 <= self.k_res < 1:
            raise ValueError("k_res must lie in [0, 1)")


@dataclass
class PffState:
    history: np.ndarray
    psi_plus: np.ndarray
    phi: NodalField

    @classmethod
    def zeros(cls, mesh: Mesh) -> "PffState":
        shape = mesh.geometry.weights.shape
        return cls(np.zeros(shape), np.zeros(shape), NodalField("phi", np.zeros(mesh.n_nodes)))

    def copy(self) -> "PffState":
        return PffState(self.history.copy(), self.psi_plus.copy(), self.phi.copy())


def _principal(strain):
    """Principal values and in-plane eigenvectors of Voigt-4 strain (engineering shear)."""
    e = np.asarray(strain, dtype=float)
    t = np.empty(e.shape[:-1] + (2, 2))
    t[..., 0, 0] = e[..., 0]
    t[..., 1, 1] = e[..., 1]
    t[..., 0, 1] = t[..., 1, 0] = 0.5 * e[..., 3]
    vals, vecs = np.linalg.eigh(t)
    return vals, vecs, e[..., 2]


def _reassemble(vals, vecs, ezz):
    t = np.einsum("...ik,...k,...jk->...ij", vecs, vals, vecs)
    out = np.empty(vals.shape[:-1] + (4,))
    out[..., 0] = t[..., 0, 0]
    out[..., 1] = t[..., 1, 1]
    out[..., 2] = ezz
    out[..., 3] = 2 * t[..., 0, 1]
    return out


def spectral_split(strain, lam: float, mu: float):
    """Tension/compression split of the elastic energy density.

    ``strain`` is ``(..., 4)`` as ``(xx, yy, zz, gamma_xy)``; ``eps_zz`` is a
    principal value of its own.

    Returns
    -------
    psi_plus, psi_minus : ndarray
    eps_plus, eps_minus : ndarray
        Voigt-4 tensile and compressive parts (engineering shear).
    """
    vals, vecs, ezz = _principal(strain)
    tr = vals.sum(axis=-1) + ezz
    vp, vm = np.maximum(vals, 0.0), np.minimum(vals, 0.0)
    zp, zm = np.maximum(ezz, 0.0), np.minimum(ezz, 0.0)
    psi_plus = 0.5 * lam * np.maximum(tr, 0.0) ** 2 + mu * ((vp ** 2).sum(axis=-1) + zp ** 2)
    psi_minus = 0.5 * lam * np.minimum(tr, 0.0) ** 2 + mu * ((vm ** 2).sum(axis=-1) + zm ** 2)
    return psi_plus, psi_minus, _reassemble(vp, vecs, zp), _reassemble(vm, vecs, zm)


def elastic_energy(strain, lam: float, mu: float):
    e = np.asarray(strain, dtype=float)
    tr = e[..., 0] + e[..., 1] + e[..., 2]
    sq = e[..., 0] ** 2 + e[..., 1] ** 2 + e[..., 2] ** 2 + 0.5 * e[..., 3] ** 2
    return 0.5 * lam * tr ** 2 + mu * sq


def driving_force(material: PffMaterial, psi_plus, plastic_work=0.0):
    """Normalized crack driving force of the configured kind."""
    psi = np.asarray(psi_plus, dtype=float)
    wp = np.asarray(plastic_work, dtype=float)
    kind = material.driving_force
    if kind == "brittle":
        return psi / material.wc
    d = (psi + wp) / material.wc
    if kind == "elastoplastic":
        return d
    return material.zeta_pc * np.maximum(d - 1.0, 0.0)


def update_history(history, driving):
    """Running maximum; returns the new history array."""
    return np.maximum(history, driving)


def degradation(phi, k_res: float = 0.0):
    """``(1 - k_res) (1 - phi)^2 + k_res`` with phi clamped to [0, 1].

    Written as ``1 - (1 - k_res) phi (2 - phi)`` so that ``phi = 0`` gives
    exactly 1.
    """
    p = np.clip(np.asarray(phi, dtype=float), 0.0, 1.0)
    return 1.0 - (1.0 - k_res) * p * (2.0 - p)


def _lumped_mass(mesh: Mesh, coefficient) -> SparseMatrix:
    geo = mesh.geometry
    diag = assemble_vector(mesh.n_nodes, mesh.elements,
                           np.einsum("eg,ga->ea", geo.weights * coefficient, geo.n_values))
    mat = mesh.pattern(1).zeros_like()
    idx = np.arange(mesh.n_nodes)
    mat.values[mat.positions(idx, idx)] = diag
    return mat


def assemble_phi_system(mesh: Mesh, material: PffMaterial, history):
    """``K = integral (H + 1) N^T N + ell^2 B^T B`` and ``f = integral H N``.

    With ``material.lumped`` the first term uses row-sum lumping. On
    near-square elements the matrix is then an M-matrix, so the solution
    obeys a discrete maximum principle and phi stays in [0, 1]; the
    consistent form can overshoot where H varies steeply.
    """
    h = np.broadcast_to(np.asarray(history, dtype=float), mesh.geometry.weights.shape)
    k = (_lumped_mass if material.lumped else mass_matrix)(mesh, h + 1.0)
    k = k.linear_combination((1.0, k), (material.ell ** 2, diffusion_matrix(mesh, 1.0, 1.0)))
    geo = mesh.geometry
    fe = np.einsum("eg,ga->ea", geo.weights * h, geo.n_values)
    return k, assemble_vector(mesh.n_nodes, mesh.elements, fe)


def solve_phi(matrix: SparseMatrix, load, seed_nodes=(), solver: LinearSolver | None = None,
              x0=None) -> NodalField:
    """Solve the damage system by CG; ``seed_nodes`` are pinned to phi = 1."""
    a = matrix.copy()
    rhs = np.array(load, dtype=float)
    apply_dirichlet(a, rhs, [(int(n), 1.0) for n in seed_nodes])
    x, _ = (solver or LinearSolver()).solve(a, rhs, x0=x0, symmetric=True)
    return NodalField("phi", x)


def crack_surface(mesh: Mesh, phi, ell: float) -> float:
    """Regularized crack length ``integral phi^2 / (2 ell) + ell / 2 |grad phi|^2``."""
    v = phi.values if isinstance(phi, NodalField) else np.asarray(phi, dtype=float)
    m = mass_matrix(mesh).matvec(v) @ v
    k = diffusion_matrix(mesh).matvec(v) @ v
    return float(m / (2 * ell) + 0.5 * ell * k)


@dataclass
class TransportCoupling:
    """Damage-coupled solute transport advanced once per staggered increment.

    ``dt`` converts step numbers to time; ``use_degraded_stress`` selects
    whether ``sigma_h`` in the equilibrium concentration comes from the
    degraded (acting) or the undegraded stress.
    """

    material: TransportMaterial
    c: NodalField
    dt: float
    dirichlet: list = field(default_factory=list)
    neumann: list = field(default_factory=list)
    use_degraded_stress: bool = True
    solver: LinearSolver = field(default_factory=LinearSolver)
    _static: tuple | None = field(default=None, init=False, repr=False)

    def advance(self, mesh: Mesh, mech: MechanicsProblem, phi: NodalField, step: float):
        stress = mech.state.stress if self.use_degraded_stress else mech.state.stress_eff
        sh = recover_nodal(mesh, hydrostatic_stress(mech.model, stress), "sigma_h")
        rb = (np.zeros(mesh.n_nodes) if mech.law is None
              else recover_nodal(mesh, mech.law.rho_bar(mech.state.p), "rho_bar").values)
        fields = MicrostructureFields(sigma_h=sh, rho_bar=np.clip(rb, 0.0, 1.0),
                                      phi_damage=np.clip(phi.values, 0.0, 1.0))
        t_now = step * self.dt
        if self._static is None:
            self._static = (assemble_mass(mesh, self.material, "B"),
                            assemble_diffusivity(mesh, self.material))
        m, k_d = self._static
        k_i = assemble_interaction_B(mesh, self.material, fields)
        k_s = assemble_sink(mesh, self.material, fields.phi_damage, t_now)
        f = assemble_load(mesh, self.material, self.neumann, step, fields, t_now)
        cons = [(int(n), bc.value(step)) for bc in self.dirichlet
                for n in mesh.node_set(bc.node_set)]
        self.c, report = transport_step_B(self.c, self.dt, m, k_d, k_i, k_s, f, cons, t_now,
                                          self.solver)
        return fields, report


@dataclass
class StaggeredReport:
    step: float
    mechanics: object
    phi_max: float
    history_max: float
    transport: object = None

    def as_dict(self) -> dict:
        out = {"step": self.step, "mechanics": self.mechanics.as_dict(),
               "phi_max": self.phi_max, "history_max": self.history_max}
        if self.transport is not None:
            out["transport"] = self.transport.as_dict()
        return out


class StaggeredSolver:
    """Mechanics, then damage, then (optionally) transport; one pass per increment."""

    def __init__(self, mechanics: MechanicsProblem, material: PffMaterial,
                 seed_set: str | None = None, transport: TransportCoupling | None = None,
                 solver: LinearSolver | None = None):
        self.mech = mechanics
        self.mesh = mechanics.mesh
        self.material = material
        self.seed_nodes = () if seed_set is None else self.mesh.node_set(seed_set)
        self.transport = transport
        self.solver = solver or LinearSolver()
        self.state = PffState.zeros(self.mesh)
        if len(self.seed_nodes):
            self.state.phi.values[self.seed_nodes] = 1.0

    def gauss_degradation(self) -> np.ndarray:
        return degradation(interpolate_at_gauss(self.mesh, self.state.phi.values),
                           self.material.k_res)

    def step(self, step: float) -> StaggeredReport:
        self.mech.g_d = self.gauss_degradation()
        rep = self.mech.advance(step)
        lam, mu = self.mech.model.lam, self.mech.model.mu
        ms = self.mech.state
        psi_plus, _, _, _ = spectral_split(ms.elastic_strain, lam, mu)
        d = driving_force(self.material, psi_plus, ms.plastic_work)
        self.state.psi_plus = psi_plus
        self.state.history = update_history(self.state.history, d)
        k, f = assemble_phi_system(self.mesh, self.material, self.state.history)
        self.state.phi = solve_phi(k, f, self.seed_nodes, self.solver, x0=self.state.phi.values)
        out = StaggeredReport(step, rep, float(self.state.phi.values.max()),
                              float(self.state.history.max()))
        if self.transport is not None:
            _, out.transport = self.transport.advance(self.mesh, self.mech, self.state.phi, step)
        return out
