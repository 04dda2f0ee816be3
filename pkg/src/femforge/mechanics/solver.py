"""Global assembly and incremental Newton-Raphson equilibrium for small-strain solids."""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

import numpy as np

from ..element import quadrature_edge
from ..mesh import Mesh, dirichlet_constraints
from ..sparse import LinearSolver, SolverFailure, SparseMatrix, apply_dirichlet, scatter_add_batch
from .constitutive import (IN_PLANE, PLANE_STRAIN, ElasticModel, HardeningLaw,
                           continuum_tangent_batch, elastic_matrix, elastic_update,
                           return_map_batch, strain4)


class MechanicsFailure(RuntimeError):
    """Equilibrium iterations failed after all allowed step cuts."""

    def __init__(self, message, step=None, report=None):
        super().__init__(message)
        self.step = step
        self.report = report


def strain_at_gauss(mesh: Mesh, u) -> np.ndarray:
    """In-plane Voigt strain ``(xx, yy, gamma_xy)`` at Gauss points, shape (ne, ng, 3)."""
    ue = np.asarray(u, dtype=float)[mesh.element_dofs(2)]
    return np.einsum("egkj,ej->egk", mesh.geometry.b_voigt(), ue)


def _per_gauss(mesh, arr, tail):
    arr = np.asarray(arr, dtype=float)
    shape = mesh.geometry.weights.shape + tail
    return np.broadcast_to(arr, shape)


def assemble_stiffness(mesh: Mesh, tangents) -> SparseMatrix:
    """``K = sum integral B^T C B`` with ``C`` given per Gauss point (ne, ng, 3, 3) or uniform."""
    geo = mesh.geometry
    b = geo.b_voigt()
    c = _per_gauss(mesh, tangents, (3, 3))
    cb = np.einsum("egkl,eglj->egkj", c, b)
    ke = np.einsum("eg,egki,egkj->eij", geo.weights, b, cb)
    mat = mesh.pattern(2).zeros_like()
    scatter_add_batch(mat, mesh.element_dofs(2), ke)
    return mat


def assemble_internal_force(mesh: Mesh, stresses) -> np.ndarray:
    """``f_int = sum integral B^T sigma``; stresses are (ne, ng, 3) Voigt or (ne, ng, 4)."""
    s = np.asarray(stresses, dtype=float)
    if s.shape[-1] == 4:
        s = s[..., IN_PLANE]
    s = _per_gauss(mesh, s, (3,))
    geo = mesh.geometry
    fe = np.einsum("eg,egki,egk->ei", geo.weights, geo.b_voigt(), s)
    out = np.zeros(2 * mesh.n_nodes)
    np.add.at(out, mesh.element_dofs(2).ravel(), fe.ravel())
    return out


def assemble_traction(mesh: Mesh, neumann, step: float = 0.0) -> np.ndarray:
    """``integral_Gamma N^T t`` for constant traction vectors on facet sets."""
    out = np.zeros(2 * mesh.n_nodes)
    s, w = quadrature_edge()
    n1, n2 = w @ (0.5 * (1 - s)), w @ (0.5 * (1 + s))
    for bc in neumann:
        bc.check(mesh)
        t = np.broadcast_to(np.asarray(bc.value(step), dtype=float), (2,))
        pairs = mesh.facet_nodes(bc.facet_set)
        half_len = 0.5 * np.linalg.norm(mesh.nodes[pairs[:, 1]] - mesh.nodes[pairs[:, 0]], axis=1)
        for k in range(2):
            np.add.at(out, 2 * pairs[:, 0] + k, t[k] * half_len * n1)
            np.add.at(out, 2 * pairs[:, 1] + k, t[k] * half_len * n2)
    return out


@dataclass
class GaussState:
    """Material state at all Gauss points; arrays have leading shape (ne, ng)."""

    strain: np.ndarray
    plastic_strain: np.ndarray
    p: np.ndarray
    stress: np.ndarray
    stress_eff: np.ndarray
    plastic_work: np.ndarray
    plastic: np.ndarray

    @classmethod
    def zeros(cls, shape):
        return cls(np.zeros(shape + (4,)), np.zeros(shape + (4,)), np.zeros(shape),
                   np.zeros(shape + (4,)), np.zeros(shape + (4,)), np.zeros(shape),
                   np.zeros(shape, dtype=bool))

    def copy(self) -> "GaussState":
        return replace(self, **{f.name: getattr(self, f.name).copy() for f in fields(self)})

    @property
    def elastic_strain(self) -> np.ndarray:
        return self.strain - self.plastic_strain


@dataclass
class IncrementReport:
    step: float
    converged: bool
    iterations: int = 0
    residual_norms: list = field(default_factory=list)
    reference: float = 0.0
    cuts: int = 0
    message: str = ""

    def as_dict(self) -> dict:
        return {"step": self.step, "converged": self.converged, "iterations": self.iterations,
                "residual_norms": list(self.residual_norms), "reference": self.reference,
                "cuts": self.cuts, "message": self.message}


class MechanicsProblem:
    """Incremental quasi-static solid with optional J2 plasticity and degradation.

    Parameters
    ----------
    mesh : Mesh
    model : ElasticModel
    law : HardeningLaw or None
        ``None`` gives (possibly degraded) linear elasticity.
    dirichlet : sequence of DirichletBc
        Displacement constraints, ``dof_component`` 0 for x and 1 for y.
        Schedules are interpolated in (fractional) step number.
    neumann : sequence of NeumannBc
        Traction vectors on facet sets.
    tol_r : float
        Relative residual tolerance on free dofs.
    max_cuts : int
        Maximum bisection depth for a failing increment.
    """

    def __init__(self, mesh: Mesh, model: ElasticModel, law: HardeningLaw | None = None,
                 dirichlet=(), neumann=(), tol_r: float = 1e-8, max_iter: int = 25,
                 max_cuts: int = 4, tol_yield: float | None = None, rm_max_iter: int = 50,
                 solver: LinearSolver | None = None):
        if law is not None and model.plane_mode != PLANE_STRAIN:
            raise ValueError("plasticity is supported in plane strain only")
        self.mesh = mesh
        self.model = model
        self.law = law
        self.dirichlet = list(dirichlet)
        self.neumann = list(neumann)
        for bc in self.dirichlet:
            bc.check(mesh, 2)
        for bc in self.neumann:
            bc.check(mesh)
        self.tol_r = tol_r
        self.max_iter = max_iter
        self.max_cuts = max_cuts
        self.tol_yield = tol_yield
        self.rm_max_iter = rm_max_iter
        self.solver = solver or LinearSolver()
        shape = mesh.geometry.weights.shape
        self.u = np.zeros(2 * mesh.n_nodes)
        self.state = GaussState.zeros(shape)
        self.g_d = np.ones(shape)
        self.step = 0.0
        self.f_int = np.zeros_like(self.u)
        self.f_ext = np.zeros_like(self.u)
        self._ce = elastic_matrix(model)

    # ---------------------------------------------------------------- evaluation

    def constraints(self, step: float):
        return dirichlet_constraints(self.mesh, self.dirichlet, step, 2)

    def constrained_dofs(self) -> np.ndarray:
        return np.array(sorted({d for d, _ in self.constraints(self.step)}), dtype=np.int64)

    def evaluate(self, u, g_d=None):
        """Material update from the committed state at displacement ``u``.

        Returns
        -------
        trial : GaussState
        f_int : ndarray
        ok : bool
            False if any return map failed to converge.
        """
        g = self.g_d if g_d is None else g_d
        shape = g.shape
        eps = strain_at_gauss(self.mesh, u)
        old = self.state
        if self.law is None:
            e4, s, s_eff = elastic_update(self.model, eps.reshape(-1, 3), g.reshape(-1))
            n = e4.shape[0]
            trial = GaussState(e4.reshape(shape + (4,)), np.zeros(shape + (4,)), old.p.copy(),
                               s.reshape(shape + (4,)), s_eff.reshape(shape + (4,)),
                               old.plastic_work.copy(), np.zeros(shape, dtype=bool))
            ok = n >= 0
        else:
            r = return_map_batch(self.model, self.law, strain4(eps).reshape(-1, 4),
                                 old.plastic_strain.reshape(-1, 4), old.p.reshape(-1),
                                 old.plastic_work.reshape(-1), g.reshape(-1), self.tol_yield,
                                 self.rm_max_iter)
            trial = GaussState(r.strain.reshape(shape + (4,)),
                               r.plastic_strain.reshape(shape + (4,)), r.p.reshape(shape),
                               r.stress.reshape(shape + (4,)), r.stress_eff.reshape(shape + (4,)),
                               r.plastic_work.reshape(shape), r.plastic.reshape(shape))
            ok = bool(r.converged.all())
        return trial, assemble_internal_force(self.mesh, trial.stress), ok

    def tangent(self, trial: GaussState, g_d=None) -> SparseMatrix:
        g = self.g_d if g_d is None else g_d
        shape = g.shape
        if self.law is None:
            c = g[..., None, None] * self._ce
        else:
            c = continuum_tangent_batch(self.model, self.law, trial.stress_eff.reshape(-1, 4),
                                        trial.p.reshape(-1), trial.plastic.reshape(-1),
                                        g.reshape(-1)).reshape(shape + (3, 3))
        return assemble_stiffness(self.mesh, c)

    def external_force(self, step: float) -> np.ndarray:
        return assemble_traction(self.mesh, self.neumann, step)

    # ---------------------------------------------------------------- solution

    def _newton(self, step: float) -> tuple[IncrementReport, tuple | None]:
        cons = self.constraints(step)
        fixed = np.zeros(len(self.u), dtype=bool)
        for d, _ in cons:
            fixed[d] = True
        f_ext = self.external_force(step)
        u = self.u.copy()
        report = IncrementReport(step=step, converged=False)
        residual = f_ext - self.f_int
        k = self.tangent(self.state)
        for it in range(1, self.max_iter + 1):
            inc = [(d, v - u[d]) if it == 1 else (d, 0.0) for d, v in cons]
            rhs = residual.copy()
            rhs[fixed] = 0.0
            apply_dirichlet(k, rhs, inc)
            try:
                du, _ = self.solver.solve(k, rhs, symmetric=True)
            except (SolverFailure, np.linalg.LinAlgError, ValueError) as exc:
                report.message = f"linear solve failed: {exc}"
                return report, None
            u += du
            trial, f_int, ok = self.evaluate(u)
            report.iterations = it
            if not ok:
                report.message = "return mapping did not converge"
                return report, None
            residual = f_ext - f_int
            r = float(np.linalg.norm(residual[~fixed]))
            ref = max(float(np.linalg.norm(f_ext)), float(np.linalg.norm(f_int)), 1e-12)
            report.residual_norms.append(r)
            report.reference = ref
            if not np.isfinite(r) or r > 1e10 * ref:
                report.message = "residual diverged"
                return report, None
            if r <= self.tol_r * ref:
                report.converged = True
                return report, (u, trial, f_int, f_ext)
            k = self.tangent(trial)
        report.message = f"no convergence in {self.max_iter} iterations"
        return report, None

    def _commit(self, step, solution):
        self.u, self.state, self.f_int, self.f_ext = solution
        self.step = step

    def advance(self, step: float) -> IncrementReport:
        """Advance the committed state to load level ``step``, bisecting on failure."""
        start = self.step
        saved = (self.u.copy(), self.state.copy(), self.f_int.copy(), self.f_ext.copy(), start)
        total = IncrementReport(step=step, converged=False)

        def attempt(a, b, depth):
            rep, sol = self._newton(b)
            total.iterations += rep.iterations
            total.residual_norms.extend(rep.residual_norms)
            total.reference = rep.reference
            if sol is not None:
                self._commit(b, sol)
                return
            if depth >= self.max_cuts:
                total.message = rep.message
                raise MechanicsFailure(f"increment to step {b:g} failed after {depth} cuts: "
                                       f"{rep.message}", step, total)
            total.cuts += 1
            mid = 0.5 * (a + b)
            attempt(a, mid, depth + 1)
            attempt(mid, b, depth + 1)

        try:
            attempt(start, step, 0)
        except MechanicsFailure:
            self.u, self.state, self.f_int, self.f_ext, self.step = saved
            raise
        total.converged = True
        return total

    # ---------------------------------------------------------------- results

    def reactions(self) -> np.ndarray:
        """Reaction vector ``-f_int`` on constrained dofs (zero elsewhere)."""
        out = np.zeros_like(self.u)
        idx = self.constrained_dofs()
        out[idx] = -self.f_int[idx]
        return out

    def reaction_force(self, node_set: str, component: int) -> float:
        nodes = self.mesh.node_set(node_set)
        return float(-self.f_int[2 * nodes + component].sum())

    def displacement(self) -> np.ndarray:
        return self.u.reshape(-1, 2)


@dataclass
class StepResult:
    step: float
    u: np.ndarray
    state: GaussState
    report: IncrementReport
    reactions: np.ndarray


def newton_solve(mesh: Mesh, model: ElasticModel, law: HardeningLaw | None = None, dirichlet=(),
                 neumann=(), increments=1, tol_r: float = 1e-8, max_iter: int = 25,
                 **options) -> list[StepResult]:
    """Solve a load schedule; ``increments`` is a step count or a sequence of step values."""
    problem = MechanicsProblem(mesh, model, law, dirichlet, neumann, tol_r, max_iter, **options)
    steps = range(1, increments + 1) if np.isscalar(increments) else increments
    out = []
    for s in steps:
        rep = problem.advance(float(s))
        out.append(StepResult(float(s), problem.u.copy(), problem.state.copy(), rep,
                              problem.reactions()))
    return out
