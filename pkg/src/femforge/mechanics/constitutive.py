"""Small-strain isotropic elasticity and J2 plasticity with isotropic hardening.

Component conventions
---------------------
In-plane Voigt vectors are ``(xx, yy, xy)`` with engineering shear strain.
Material-point storage uses four components ``(xx, yy, zz, xy)``; strains
keep the engineering shear ``gamma_xy`` so that ``stress @ strain`` is the
double contraction.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PLANE_STRAIN = "plane_strain"
PLANE_STRESS = "plane_stress"
IN_PLANE = [0, 1, 3]


class SingularMaterialError(ValueError):
    pass


@dataclass(frozen=True)
class ElasticModel:
    E: float
    nu: float
    plane_mode: str = PLANE_STRAIN

    def __post_init__(self):
        if self.plane_mode not in (PLANE_STRAIN, PLANE_STRESS):
            raise ValueError(f"unknown plane mode {self.plane_mode!r}")
        if not self.E > 0:
            raise ValueError("Young's modulus must be positive")
        if not -1.0 < self.nu <= 0.5:
            raise ValueError("Poisson ratio must lie in (-1, 0.5)")
        if self.nu == 0.5 and self.plane_mode == PLANE_STRAIN:
            raise SingularMaterialError("nu = 0.5 makes the plane-strain elastic matrix singular")

    @property
    def lam(self) -> float:
        return self.E * self.nu / ((1 + self.nu) * (1 - 2 * self.nu))

    @property
    def mu(self) -> float:
        return self.E / (2 * (1 + self.nu))

    G = mu

    def c4(self) -> np.ndarray:
        """Isotropic stiffness on ``(xx, yy, zz, gamma_xy)``."""
        lam, mu = self.lam, self.mu
        c = np.full((4, 4), 0.0)
        c[:3, :3] = lam
        c[[0, 1, 2], [0, 1, 2]] += 2 * mu
        c[3, 3] = mu
        return c


def elastic_matrix(model: ElasticModel) -> np.ndarray:
    E, nu = model.E, model.nu
    if model.plane_mode == PLANE_STRAIN:
        if nu == 0.5:
            raise SingularMaterialError("nu = 0.5 in plane strain")
        f = E / ((1 + nu) * (1 - 2 * nu))
        return f * np.array([[1 - nu, nu, 0.0], [nu, 1 - nu, 0.0], [0.0, 0.0, (1 - 2 * nu) / 2]])
    f = E / (1 - nu ** 2)
    return f * np.array([[1.0, nu, 0.0], [nu, 1.0, 0.0], [0.0, 0.0, (1 - nu) / 2]])


def out_of_plane(model: ElasticModel, stress) -> float:
    """``sigma_zz`` for plane strain, ``eps_zz`` for plane stress, from in-plane stress."""
    s = np.asarray(stress, dtype=float)
    trace2 = s[..., 0] + s[..., 1]
    if model.plane_mode == PLANE_STRAIN:
        return model.nu * trace2
    return -model.nu / model.E * trace2


def hydrostatic_stress(model: ElasticModel, stress):
    """Hydrostatic stress.

    With a 3-component in-plane stress the out-of-plane stress is implied by
    the plane mode. With 4 components ``(xx, yy, zz, xy)`` the stored
    ``sigma_zz`` is used directly, which also covers plastic states.
    """
    s = np.asarray(stress, dtype=float)
    if s.shape[-1] == 4:
        return (s[..., 0] + s[..., 1] + s[..., 2]) / 3.0
    factor = (1 + model.nu) / 3.0 if model.plane_mode == PLANE_STRAIN else 1.0 / 3.0
    return factor * (s[..., 0] + s[..., 1])


def von_mises(stress):
    s = np.asarray(stress, dtype=float)
    xx, yy, zz, xy = s[..., 0], s[..., 1], s[..., 2], s[..., 3]
    q = xx ** 2 + yy ** 2 + zz ** 2 - xx * yy - yy * zz - zz * xx + 3 * xy ** 2
    return np.sqrt(np.maximum(q, 0.0))


def deviatoric(stress):
    s = np.array(stress, dtype=float)
    mean = (s[..., 0] + s[..., 1] + s[..., 2]) / 3.0
    s[..., :3] -= mean[..., None]
    return s


# --------------------------------------------------------------------------- hardening


class HardeningLaw:
    """Isotropic hardening ``H(p)`` added to the initial yield stress."""

    kind = "base"
    sigma_y0: float

    def evaluate(self, p):
        """Return ``(H, dH/dp)`` for scalar or array ``p``."""
        raise NotImplementedError

    def rho_bar(self, p):
        """Normalized dislocation density; zero for laws without a density model."""
        return np.zeros_like(np.asarray(p, dtype=float))


@dataclass(frozen=True)
class PowerLaw(HardeningLaw):
    """``H = K_h ((p + p_reg)^n_h - p_reg^n_h)``; ``n_h = 1`` gives linear hardening.

    With ``n_h < 1`` and ``p_reg = 0`` the slope is infinite at ``p = 0``;
    the return map handles that by bisection.
    """

    sigma_y0: float
    K_h: float = 0.0
    n_h: float = 1.0
    p_reg: float = 1e-12
    kind = "PowerLaw"

    def __post_init__(self):
        if not self.sigma_y0 > 0:
            raise ValueError("sigma_y0 must be positive")
        if self.K_h < 0 or self.n_h <= 0 or self.p_reg < 0:
            raise ValueError("PowerLaw needs K_h >= 0, n_h > 0, p_reg >= 0")

    def evaluate(self, p):
        p = np.asarray(p, dtype=float)
        q = p + self.p_reg
        H = self.K_h * (q ** self.n_h - self.p_reg ** self.n_h)
        if self.n_h == 1:
            dH = np.full_like(q, self.K_h)
        else:
            with np.errstate(divide="ignore"):
                dH = self.n_h * self.K_h * q ** (self.n_h - 1)
        return H, dH


@dataclass(frozen=True)
class KME(HardeningLaw):
    """Kocks-Mecking-Estrin Taylor hardening.

    Dislocation density evolves as ``d rho / dp = k1 sqrt(rho) - k2 rho``,
    whose closed form in ``u = sqrt(rho)`` is
    ``u(p) = k1/k2 + (sqrt(rho_0) - k1/k2) exp(-k2 p / 2)``. The flow stress
    increment is ``alpha_t M G b (u - sqrt(rho_0))``.
    """

    sigma_y0: float
    alpha_t: float = 0.3
    G_ref: float = 80e3
    b_burgers: float = 2.5e-7
    M_taylor: float = 3.06
    k1: float = 1e5
    k2: float = 10.0
    rho_0: float = 1e6
    kind = "KME"

    def __post_init__(self):
        if not self.sigma_y0 > 0:
            raise ValueError("sigma_y0 must be positive")
        if min(self.alpha_t, self.G_ref, self.b_burgers, self.M_taylor, self.k1, self.k2) <= 0:
            raise ValueError("KME parameters must be positive")
        if self.rho_0 < 0:
            raise ValueError("rho_0 must be non-negative")

    @property
    def _scale(self):
        return self.alpha_t * self.M_taylor * self.G_ref * self.b_burgers

    def _u(self, p):
        sat = self.k1 / self.k2
        decay = np.exp(-0.5 * self.k2 * np.asarray(p, dtype=float))
        return sat + (np.sqrt(self.rho_0) - sat) * decay, decay

    def evaluate(self, p):
        u, decay = self._u(p)
        sat = self.k1 / self.k2
        H = self._scale * (u - np.sqrt(self.rho_0))
        dH = self._scale * (sat - np.sqrt(self.rho_0)) * 0.5 * self.k2 * decay
        return H, dH

    def saturation(self) -> float:
        return self._scale * (self.k1 / self.k2 - np.sqrt(self.rho_0))

    def rho_bar(self, p):
        u, _ = self._u(p)
        return (u / (self.k1 / self.k2)) ** 2


def hardening(law: HardeningLaw, p):
    return law.evaluate(p)


# --------------------------------------------------------------------------- return map


@dataclass
class MaterialPointState:
    strain: np.ndarray = field(default_factory=lambda: np.zeros(4))
    plastic_strain: np.ndarray = field(default_factory=lambda: np.zeros(4))
    p: float = 0.0
    stress: np.ndarray = field(default_factory=lambda: np.zeros(4))
    stress_eff: np.ndarray = field(default_factory=lambda: np.zeros(4))
    plastic_work: float = 0.0
    plastic: bool = False
    g_d: float = 1.0

    def __post_init__(self):
        for name in ("strain", "plastic_strain", "stress", "stress_eff"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float).copy())

    @property
    def elastic_strain(self) -> np.ndarray:
        return self.strain - self.plastic_strain


@dataclass
class ReturnMapResult:
    """Vectorized return-map output; all arrays have a leading point axis."""

    strain: np.ndarray
    plastic_strain: np.ndarray
    p: np.ndarray
    stress: np.ndarray
    stress_eff: np.ndarray
    plastic_work: np.ndarray
    dp: np.ndarray
    plastic: np.ndarray
    converged: np.ndarray
    iterations: np.ndarray
    residual: np.ndarray


def strain4(strain_voigt, model: ElasticModel | None = None):
    """Embed in-plane strain ``(xx, yy, gamma)`` as ``(xx, yy, zz, gamma)`` with eps_zz = 0."""
    e = np.asarray(strain_voigt, dtype=float)
    out = np.zeros(e.shape[:-1] + (4,))
    out[..., [0, 1, 3]] = e
    return out


def return_map_batch(model: ElasticModel, law: HardeningLaw, strain, plastic_strain_old, p_old,
                     plastic_work_old=0.0, g_d=1.0, tol: float | None = None,
                     max_iter: int = 50) -> ReturnMapResult:
    """Radial return for many plane-strain material points at once.

    ``strain`` and ``plastic_strain_old`` are ``(n, 4)``. The trial stress is
    degraded by ``g_d``; the consistency residual is
    ``g_d sigma_eq_tr_eff - 3 G g_d dp - H(p) - sigma_y0`` and Newton updates
    use the slope ``3 G g_d + dH/dp`` at the current iterate.
    """
    if model.plane_mode != PLANE_STRAIN:
        raise ValueError("J2 return mapping is implemented for plane strain only")
    strain = np.atleast_2d(np.asarray(strain, dtype=float))
    n = len(strain)
    eps_p_old = np.broadcast_to(np.asarray(plastic_strain_old, dtype=float), (n, 4))
    p_old = np.broadcast_to(np.asarray(p_old, dtype=float), (n,)).copy()
    wp_old = np.broadcast_to(np.asarray(plastic_work_old, dtype=float), (n,))
    g = np.broadcast_to(np.asarray(g_d, dtype=float), (n,))
    sy = law.sigma_y0
    tol = 1e-8 * sy if tol is None else tol
    G = model.mu
    c4 = model.c4()

    s_eff_tr = (strain - eps_p_old) @ c4.T
    seq_eff_tr = von_mises(s_eff_tr)
    seq_tr = g * seq_eff_tr
    H0, _ = law.evaluate(p_old)
    f = seq_tr - sy - H0
    plastic = f > tol

    dp = np.zeros(n)
    p = p_old.copy()
    iters = np.zeros(n, dtype=np.int64)
    active = plastic.copy()
    # H nondecreasing brackets the root in [0, f_trial / (3 G g_d)]; a Newton
    # iterate leaving the bracket (or an infinite slope, e.g. n_h < 1 at p = 0)
    # falls back to bisection
    with np.errstate(divide="ignore", invalid="ignore"):
        hi = np.where(plastic, f / (3 * G * g), 0.0)
    lo = np.zeros(n)
    for _ in range(max_iter):
        if not active.any():
            break
        a = active
        _, dH = law.evaluate(p[a])
        with np.errstate(divide="ignore", invalid="ignore"):
            trial = dp[a] + f[a] / (3 * G * g[a] + dH)
        ok = np.isfinite(dH) & (trial >= lo[a]) & (trial <= hi[a])
        dp[a] = np.where(ok, trial, 0.5 * (lo[a] + hi[a]))
        p[a] = p_old[a] + dp[a]
        H, _ = law.evaluate(p[a])
        f[a] = seq_tr[a] - 3 * G * g[a] * dp[a] - H - sy
        lo[a] = np.where(f[a] > 0, dp[a], lo[a])
        hi[a] = np.where(f[a] > 0, hi[a], dp[a])
        iters[a] += 1
        active &= np.abs(f) > tol
    f_final = np.where(plastic, f, 0.0)
    converged = ~plastic | (np.abs(f) <= tol)

    # flow direction from the trial deviator; strain-like with engineering shear
    with np.errstate(invalid="ignore", divide="ignore"):
        N = 1.5 * deviatoric(s_eff_tr) / seq_eff_tr[:, None]
    N = np.where(plastic[:, None], N, 0.0)
    N[:, 3] *= 2.0
    d_eps_p = dp[:, None] * N
    eps_p = eps_p_old + d_eps_p
    s_eff = (strain - eps_p) @ c4.T
    wp = wp_old + np.einsum("ni,ni->n", s_eff, d_eps_p)
    return ReturnMapResult(
        strain=strain.copy(), plastic_strain=eps_p, p=p, stress=g[:, None] * s_eff,
        stress_eff=s_eff, plastic_work=wp, dp=dp, plastic=plastic, converged=converged,
        iterations=iters, residual=f_final,
    )


def return_map(model: ElasticModel, law: HardeningLaw, state_old: MaterialPointState, strain_new,
               g_d: float = 1.0, tol: float | None = None, max_iter: int = 50):
    """Single-point return map.

    ``strain_new`` is an in-plane Voigt 3-vector (eps_zz = 0) or a 4-vector.

    Returns
    -------
    state : MaterialPointState
    dp : float
    converged : bool
    """
    e = np.asarray(strain_new, dtype=float)
    e4 = strain4(e) if e.shape[-1] == 3 else e
    r = return_map_batch(model, law, e4[None], state_old.plastic_strain[None], state_old.p,
                         state_old.plastic_work, g_d, tol, max_iter)
    state = MaterialPointState(strain=r.strain[0], plastic_strain=r.plastic_strain[0], p=r.p[0],
                               stress=r.stress[0], stress_eff=r.stress_eff[0],
                               plastic_work=r.plastic_work[0], plastic=bool(r.plastic[0]),
                               g_d=float(g_d))
    return state, float(r.dp[0]), bool(r.converged[0])


def continuum_tangent_batch(model: ElasticModel, law: HardeningLaw | None, stress_eff, p,
                            plastic, g_d=1.0) -> np.ndarray:
    """In-plane ``(n, 3, 3)`` tangents; elastic points get ``g_d * C_e``.

    Plastic points use ``C_e - (C_e N)(C_e N)^T / (dH/dp + N : C_e : N)`` with
    ``N = 3/2 s' / sigma_eq`` and engineering-shear duality on the strain side.
    """
    stress_eff = np.atleast_2d(np.asarray(stress_eff, dtype=float))
    n = len(stress_eff)
    g = np.broadcast_to(np.asarray(g_d, dtype=float), (n,))
    plastic = np.broadcast_to(np.asarray(plastic, dtype=bool), (n,))
    ce = elastic_matrix(model)
    out = np.broadcast_to(ce, (n, 3, 3)).copy()
    if law is not None and plastic.any():
        c4 = model.c4()
        s = stress_eff[plastic]
        N = 1.5 * deviatoric(s) / von_mises(s)[:, None]
        N[:, 3] *= 2.0
        a = N @ c4.T
        _, dH = law.evaluate(np.broadcast_to(np.asarray(p, dtype=float), (n,))[plastic])
        denom = dH + np.einsum("ni,ni->n", N, a)
        cep = c4[None] - np.einsum("ni,nj->nij", a, a) / denom[:, None, None]
        out[plastic] = cep[:, IN_PLANE][:, :, IN_PLANE]
    return g[:, None, None] * out


def continuum_tangent(model: ElasticModel, law: HardeningLaw | None,
                      state: MaterialPointState) -> np.ndarray:
    return continuum_tangent_batch(model, law, state.stress_eff, state.p, state.plastic,
                                   state.g_d)[0]


def elastic_update(model: ElasticModel, strain_voigt, g_d=1.0):
    """Stress of a (possibly degraded) elastic point.

    Returns the 4-component total strain (with eps_zz from the plane mode),
    the degraded stress and the undegraded stress.
    """
    e = np.atleast_2d(np.asarray(strain_voigt, dtype=float))
    s3 = e @ elastic_matrix(model).T
    s_eff = np.zeros(e.shape[:-1] + (4,))
    s_eff[..., IN_PLANE] = s3
    e4 = strain4(e)
    if model.plane_mode == PLANE_STRAIN:
        s_eff[..., 2] = out_of_plane(model, s3)
    else:
        e4[..., 2] = out_of_plane(model, s3)
    g = np.asarray(g_d, dtype=float)
    return e4, g[..., None] * s_eff if g.ndim else g * s_eff, s_eff
