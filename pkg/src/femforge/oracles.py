"""Reference solutions used by the verification suites.

Everything here is written independently of the solver modules: the
constitutive oracle works on full 3x3 tensors and solves the consistency
condition by bisection, never calling the package's return map.
"""
from __future__ import annotations

import numpy as np
from scipy.optimize import brentq
from scipy.special import erfc


def slab_temperature(x, t, alpha=1.0, length=1.0, surface=1.0, n_terms=60):
    """Slab ``0 < x < length`` at 0, ``T(0) = surface`` for t > 0, insulated at ``length``.

    Method of images: sum over ``n`` of
    ``(-1)^n [erfc((2nL + x) / (2 sqrt(alpha t))) + erfc((2(n+1)L - x) / (2 sqrt(alpha t)))]``.
    """
    x = np.asarray(x, dtype=float)
    s = 2.0 * np.sqrt(alpha * t)
    total = np.zeros_like(x)
    for n in range(n_terms):
        term = erfc((2 * n * length + x) / s) + erfc((2 * (n + 1) * length - x) / s)
        total += (-1) ** n * term
    return surface * total


def manufactured_temperature(x, y):
    return np.sin(np.pi * x) * np.sin(np.pi * y)


def manufactured_source(x, y):
    """Source making ``sin(pi x) sin(pi y)`` the steady solution for unit conductivity."""
    return 2 * np.pi ** 2 * np.sin(np.pi * x) * np.sin(np.pi * y)


def crack_profile(x, x0, ell):
    return np.exp(-np.abs(np.asarray(x, dtype=float) - x0) / ell)


def bisect(fun, lo, hi, tol=1e-15, max_iter=400):
    """Plain bisection for an increasing ``fun`` with ``fun(lo) <= 0 <= fun(hi)``."""
    flo = fun(lo)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if hi - lo <= tol * max(1.0, abs(mid)):
            break
        fm = fun(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def consistency_increment(seq_trial, shear_modulus, sigma_y, flow_stress, p_old, g_d=1.0):
    """Solve ``seq_trial - 3 G g_d dp - flow_stress(p_old + dp) - sigma_y = 0`` by bisection.

    ``flow_stress`` is the hardening increment ``H(p)``; returns 0 for elastic trials.
    """
    def residual(dp):
        return -(seq_trial - 3 * shear_modulus * g_d * dp - flow_stress(p_old + dp) - sigma_y)

    if residual(0.0) >= 0:
        return 0.0
    hi = seq_trial / (3 * shear_modulus * g_d)
    return bisect(residual, 0.0, hi)


class TensorJ2:
    """Independent 3x3-tensor J2 material with isotropic hardening ``H(p)``."""

    def __init__(self, E, nu, sigma_y, flow_stress):
        self.lam = E * nu / ((1 + nu) * (1 - 2 * nu))
        self.G = E / (2 * (1 + nu))
        self.sigma_y = sigma_y
        self.H = flow_stress

    def stress_of(self, eps_e):
        return self.lam * np.trace(eps_e) * np.eye(3) + 2 * self.G * eps_e

    def update(self, eps, eps_p_old, p_old):
        """Return ``(stress, eps_p, p)`` for total strain tensor ``eps``."""
        trial = self.stress_of(eps - eps_p_old)
        dev = trial - np.trace(trial) / 3 * np.eye(3)
        seq = np.sqrt(1.5 * np.sum(dev * dev))
        dp = consistency_increment(seq, self.G, self.sigma_y, self.H, p_old)
        if dp == 0.0:
            return trial, eps_p_old, p_old
        eps_p = eps_p_old + 1.5 * dp * dev / seq
        return self.stress_of(eps - eps_p), eps_p, p_old + dp


def uniaxial_plane_strain(material: TensorJ2, eps_xx_path):
    """Plane strain (eps_zz = 0) with sigma_yy = sigma_xy = 0, driven by eps_xx.

    For every strain level the lateral strain is found with a bracketing root
    finder so that ``sigma_yy = 0``.

    Returns
    -------
    list of dict
        Keys ``eps_xx``, ``eps_yy``, ``sigma_xx``, ``sigma_zz``, ``p``.
    """
    eps_p = np.zeros((3, 3))
    p = 0.0
    out = []
    for exx in eps_xx_path:
        def syy(eyy):
            eps = np.diag([exx, eyy, 0.0])
            return material.update(eps, eps_p, p)[0][1, 1]

        width = 2 * abs(exx) + 1e-12
        eyy = brentq(syy, -width, width, xtol=1e-16, rtol=1e-15, maxiter=200)
        s, eps_p, p = material.update(np.diag([exx, eyy, 0.0]), eps_p, p)
        out.append({"eps_xx": exx, "eps_yy": eyy, "sigma_xx": s[0, 0], "sigma_zz": s[2, 2],
                    "p": p})
    return out
