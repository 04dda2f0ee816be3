"""Fully kinetic solute transport.

Variant A drifts solute along gradients of microstructure fields (interface
function and phase indicator). Variant B drifts along gradients of
hydrostatic stress and normalized dislocation density and adds a damage
source/sink relaxing towards the stress-dependent equilibrium
concentration.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .heat import (diffusion_matrix, facet_flux_load, gradient_at_gauss, implicit_euler_step,
                   interpolate_at_gauss, mass_matrix)
from .mesh import Mesh, NodalField
from .sparse import LinearSolver, SparseMatrix, assemble_vector, scatter_add_batch

BOUND_TOL = 1e-9


@dataclass
class TransportMaterial:
    D: float = 1.0
    zeta_intf: float = 0.0
    zeta_n: float = 0.0
    zeta_rho: float = 0.0
    VH_bar: float = 0.0
    R: float = 8.314
    T: float = 300.0
    s: float = 1.0
    Zd: float = 0.0
    cB: float = 1.0

    def __post_init__(self):
        if self.D < 0:
            raise ValueError("diffusivity must be non-negative")
        if not self.R * self.T > 0:
            raise ValueError("R * T must be positive")
        if not self.s > 0:
            raise ValueError("segregation capacity s must be positive")

    @property
    def RT(self) -> float:
        return self.R * self.T


def _as_values(f):
    if f is None:
        return None
    return f.values if isinstance(f, NodalField) else np.asarray(f, dtype=float).reshape(-1)


@dataclass
class MicrostructureFields:
    """Nodal fields feeding the drift and sink terms. Any may be ``None``."""

    g_intf: object = None
    phi_n: object = None
    sigma_h: object = None
    rho_bar: object = None
    phi_damage: object = None

    _BOUNDS = {
        # sum over grain pairs of phi_a * phi_b with sum(phi) = 1 stays below 1/2
        "g_intf": (0.0, 0.5),
        "phi_n": (0.0, 1.0),
        "rho_bar": (0.0, 1.0),
        "phi_damage": (0.0, 1.0),
    }

    def __post_init__(self):
        for name in ("g_intf", "phi_n", "sigma_h", "rho_bar", "phi_damage"):
            setattr(self, name, _as_values(getattr(self, name)))
        self.validate()

    def validate(self, mesh: Mesh | None = None):
        for name, (lo, hi) in self._BOUNDS.items():
            v = getattr(self, name)
            if v is None:
                continue
            if v.min() < lo - BOUND_TOL or v.max() > hi + BOUND_TOL:
                raise ValueError(f"field {name} outside [{lo}, {hi}]: "
                                 f"range [{v.min():.6g}, {v.max():.6g}]")
        if mesh is not None:
            for name in ("g_intf", "phi_n", "sigma_h", "rho_bar", "phi_damage"):
                v = getattr(self, name)
                if v is not None and len(v) != mesh.n_nodes:
                    raise ConfigError(f"has {len(v)} values for {mesh.n_nodes} nodes",
                                      f"fields.{name}")
        return self

    def require(self, *names):
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            raise ConfigError(f"transport needs nodal field(s) {', '.join(missing)}", "fields")


@dataclass
class PhaseFractions:
    """Per-node grain phase-field values and the set ('i' or 'j') of each grain.

    Attributes
    ----------
    values : ndarray, shape (n_nodes, n_grains)
    grain_sets : sequence of str, length n_grains
    """

    values: np.ndarray
    grain_sets: tuple

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        self.grain_sets = tuple(self.grain_sets)
        if len(self.grain_sets) != self.values.shape[1]:
            raise ValueError("one set label per grain is required")
        for k, label in enumerate(self.grain_sets):
            if label not in ("i", "j"):
                raise ValueError(f"grain {k} is not assigned to set 'i' or 'j'")
        if self.values.min() < -1e-6 or self.values.max() > 1 + 1e-6:
            raise ValueError("phase-field values must lie in [0, 1]")
        sums = self.values.sum(axis=1)
        if np.abs(sums - 1.0).max() > 1e-6:
            node = int(np.argmax(np.abs(sums - 1.0)))
            raise ValueError(f"phase fractions at node {node} sum to {sums[node]:.8g}, not 1")


def interface_function(fractions: PhaseFractions):
    """Double-obstacle interface functions for a two-set microstructure.

    Sums ``phi_a * phi_b`` over unordered grain pairs ``b < a`` into the
    i-i, i-j and j-j interface fields.

    Returns
    -------
    g_ii, g_ij, g_jj : NodalField
    """
    phi = fractions.values
    sets = fractions.grain_sets
    g = {"ii": np.zeros(len(phi)), "ij": np.zeros(len(phi)), "jj": np.zeros(len(phi))}
    for a in range(phi.shape[1]):
        for b in range(a):
            term = phi[:, a] * phi[:, b]
            if sets[a] == sets[b]:
                g[sets[a] * 2] += term
            else:
                g["ij"] += term
    return (NodalField("g_ii", g["ii"]), NodalField("g_ij", g["ij"]),
            NodalField("g_jj", g["jj"]))


def drift_matrix(mesh: Mesh, terms) -> SparseMatrix:
    """``sum_k integral B^T coef_k (B f_k) N`` over ``(coef_k, nodal f_k)`` terms.

    Entry ``(a, b)`` is ``integral grad N_a . (coef grad f) N_b``; the result
    is nonsymmetric in general.
    """
    geo = mesh.geometry
    drift = np.zeros(geo.dn_dx.shape[:2] + (2,))
    for coef, f in terms:
        if coef != 0.0:
            drift += coef * gradient_at_gauss(mesh, f)
    ke = np.einsum("eg,egia,egi,gb->eab", geo.weights, geo.dn_dx, drift, geo.n_values)
    mat = mesh.pattern(1).zeros_like()
    scatter_add_batch(mat, mesh.elements, ke)
    return mat


def assemble_mass(mesh: Mesh, material: TransportMaterial | None = None,
                  variant: str = "A") -> SparseMatrix:
    """Unit-density mass for variant A, ``s``-weighted mass for variant B."""
    s = 1.0 if variant == "A" or material is None else material.s
    return mass_matrix(mesh, s)


def assemble_diffusivity(mesh: Mesh, material: TransportMaterial) -> SparseMatrix:
    return diffusion_matrix(mesh, material.D, material.D)


def assemble_interaction_A(mesh: Mesh, material: TransportMaterial,
                           fields: MicrostructureFields) -> SparseMatrix:
    fields.require("g_intf", "phi_n")
    fields.validate(mesh)
    k = material.D / material.RT
    return drift_matrix(mesh, [(k * material.zeta_intf, fields.g_intf),
                               (k * material.zeta_n, fields.phi_n)])


def assemble_interaction_B(mesh: Mesh, material: TransportMaterial,
                           fields: MicrostructureFields) -> SparseMatrix:
    fields.require("sigma_h", "rho_bar")
    fields.validate(mesh)
    k = material.D / material.RT
    return drift_matrix(mesh, [(k * material.VH_bar, fields.sigma_h),
                               (k * material.zeta_rho, fields.rho_bar)])


def _sink_weight(mesh, material, phi_damage, t_now):
    if not t_now > 0:
        raise ValueError("sink term needs t_now > 0 (it scales with Zd / t)")
    phi = interpolate_at_gauss(mesh, _as_values(phi_damage))
    return (material.Zd / t_now) * phi ** 2


def assemble_sink(mesh: Mesh, material: TransportMaterial, phi_damage,
                  t_now: float) -> SparseMatrix:
    """``integral N^T N (Zd / t) phi^2`` with phi interpolated at Gauss points."""
    return mass_matrix(mesh, _sink_weight(mesh, material, phi_damage, t_now))


def equilibrium_concentration(material: TransportMaterial, sigma_h, rho_bar):
    """``cB exp((VH sigma_h + zeta_rho rho_bar) / RT)``; works on scalars and arrays."""
    return material.cB * np.exp((material.VH_bar * np.asarray(sigma_h)
                                 + material.zeta_rho * np.asarray(rho_bar)) / material.RT)


def assemble_sink_load(mesh: Mesh, material: TransportMaterial,
                       fields: MicrostructureFields, t_now: float) -> np.ndarray:
    """``integral N^T (Zd / t) phi^2 c_eq`` with c_eq evaluated at Gauss points."""
    fields.require("phi_damage")
    w = _sink_weight(mesh, material, fields.phi_damage, t_now)
    sh = 0.0 if fields.sigma_h is None else interpolate_at_gauss(mesh, fields.sigma_h)
    rb = 0.0 if fields.rho_bar is None else interpolate_at_gauss(mesh, fields.rho_bar)
    c_eq = equilibrium_concentration(material, sh, rb)
    geo = mesh.geometry
    fe = np.einsum("eg,ga->ea", geo.weights * w * c_eq, geo.n_values)
    return assemble_vector(mesh.n_nodes, mesh.elements, fe)


def assemble_load(mesh: Mesh, material: TransportMaterial, neumann=(), step: float = 0.0,
                  fields: MicrostructureFields | None = None, t_now: float | None = None):
    """Boundary-flux load, plus the damage source for variant B when ``t_now`` is given."""
    f = facet_flux_load(mesh, neumann, step)
    if t_now is not None and fields is not None and fields.phi_damage is not None:
        f = f + assemble_sink_load(mesh, material, fields, t_now)
    return f


def recover_nodal(mesh: Mesh, gauss_values, name: str = "recovered") -> NodalField:
    """Volume-weighted average of Gauss-point values onto nodes."""
    v = np.asarray(gauss_values, dtype=float)
    w = mesh.geometry.weights
    if v.shape != w.shape:
        raise ValueError(f"expected Gauss values of shape {w.shape}, got {v.shape}")
    # each Gauss point contributes to all four nodes of its element
    num = assemble_vector(mesh.n_nodes, mesh.elements,
                          np.repeat((w * v).sum(axis=1, keepdims=True), 4, axis=1))
    den = assemble_vector(mesh.n_nodes, mesh.elements,
                          np.repeat(w.sum(axis=1, keepdims=True), 4, axis=1))
    return NodalField(name, num / den)


def transport_step_A(c_old: NodalField, dt: float, M: SparseMatrix, K_D: SparseMatrix,
                     K_I: SparseMatrix, F, dirichlet=(), solver: LinearSolver | None = None):
    """``[M + dt K_D - dt K_I] c = dt F + M c_old``."""
    k = K_D.linear_combination((1.0, K_D), (-1.0, K_I))
    values, report = implicit_euler_step(c_old.values, dt, M, k, F, dirichlet, solver,
                                         symmetric=False)
    return NodalField(c_old.name, values), report


def transport_step_B(c_old: NodalField, dt: float, M: SparseMatrix, K_D: SparseMatrix,
                     K_I: SparseMatrix, K_S: SparseMatrix, F, dirichlet=(), t_now: float = None,
                     solver: LinearSolver | None = None):
    """``[M + dt (K_D - K_I + K_S)] c = dt F + M c_old``.

    ``K_S`` and ``F`` must have been assembled at ``t_now``; it is accepted
    here only to reject the singular ``t = 0`` evaluation.
    """
    if t_now is not None and not t_now > 0:
        raise ValueError("t_now must be positive")
    k = K_D.linear_combination((1.0, K_D), (-1.0, K_I), (1.0, K_S))
    values, report = implicit_euler_step(c_old.values, dt, M, k, F, dirichlet, solver,
                                         symmetric=False)
    return NodalField(c_old.name, values), report
