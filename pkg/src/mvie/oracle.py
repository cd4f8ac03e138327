"""Reference solutions that share no code with the volume-integral solver.

* Mie series for a homogeneous sphere at rest.
* The two-half-space image tensor used by the boundary-probe experiment.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NotConverged, SingularPoint
from .farfield import FarField
from .media import MediumSpec

TRAILING_TOL = 1e-12


def wiscombe_nmax(x):
    return int(np.ceil(x + 4.0 * x ** (1.0 / 3.0) + 2.0))


def riccati_bessel(x, nmax):
    """Return ``psi_n(x) = x j_n(x)`` and ``xi_n(x) = x h_n^(1)(x)`` for ``n = 0..nmax``.

    ``psi`` by downward (Miller) recurrence renormalised to ``sin x``; the
    ``x y_n`` part by upward recurrence, which is stable for real ``x``.
    """
    start = nmax + int(np.ceil(np.sqrt(50.0 * max(nmax, x)))) + 20
    psi = np.zeros(start + 2)
    psi[start] = 1e-300
    for n in range(start, 0, -1):
        psi[n - 1] = (2 * n + 1) / x * psi[n] - psi[n + 1]
        if abs(psi[n - 1]) > 1e200:
            psi[n - 1 :] *= 1e-200
    psi = psi[: nmax + 1] * (np.sin(x) / psi[0])

    xy = np.zeros(nmax + 1)
    xy[0] = -np.cos(x)
    if nmax >= 1:
        xy[1] = -np.cos(x) / x - np.sin(x)
    for n in range(1, nmax):
        xy[n + 1] = (2 * n + 1) / x * xy[n] - xy[n - 1]
    return psi, psi + 1j * xy


def log_derivative(z, nmax):
    """``D_n(z) = psi_n'(z) / psi_n(z)`` by downward recurrence."""
    start = int(max(nmax, abs(z))) + 16
    D = np.zeros(start + 1, dtype=complex)
    for n in range(start, 0, -1):
        D[n - 1] = n / z - 1.0 / (D[n] + n / z)
    return D[: nmax + 1]


def angular_functions(mu, nmax):
    """``pi_n`` and ``tau_n`` for ``n = 1..nmax`` at ``mu = cos(Theta)``."""
    mu = np.asarray(mu, dtype=float)
    pi = np.zeros((nmax + 1,) + mu.shape)
    tau = np.zeros_like(pi)
    pi[1] = 1.0
    for n in range(2, nmax + 1):
        pi[n] = (2 * n - 1) / (n - 1) * mu * pi[n - 1] - n / (n - 1) * pi[n - 2]
    for n in range(1, nmax + 1):
        tau[n] = n * mu * pi[n] - (n + 1) * pi[n - 1]
    return pi[1:], tau[1:]


@dataclass(frozen=True)
class MieSolution:
    """Multipole solution for a homogeneous sphere of radius ``a`` at rest."""

    a: float
    k0: float
    k: float
    impedance: float
    an: np.ndarray
    bn: np.ndarray
    n_max: int
    converged: bool

    @property
    def size_parameter(self):
        return self.k0 * self.a

    def amplitudes(self, cos_theta):
        """Scattering amplitudes ``S1``, ``S2`` at the given scattering angles."""
        n = np.arange(1, self.n_max + 1)
        pi, tau = angular_functions(cos_theta, self.n_max)
        pref = ((2 * n + 1) / (n * (n + 1)))[:, None]
        an = self.an[:, None]
        bn = self.bn[:, None]
        S1 = np.sum(pref * (an * pi + bn * tau), axis=0)
        S2 = np.sum(pref * (an * tau + bn * pi), axis=0)
        return S1, S2

    def far_field(self, d, p, dirs, eps0=1.0, mu0=1.0, omega=None):
        """Far-field pattern for the incident plane wave ``i k0 (d x p) x d e^{i k0 d.x}``."""
        d = np.asarray(d, dtype=float)
        d = d / np.linalg.norm(d)
        p = np.asarray(p, dtype=float)
        E0vec = 1j * self.k0 * np.cross(np.cross(d, p), d)
        dirs = np.atleast_2d(np.asarray(dirs, dtype=float))
        amp = np.linalg.norm(E0vec)
        if amp == 0.0:
            zeros = np.zeros(dirs.shape, dtype=complex)
            return FarField(dirs, zeros, zeros.copy(), self.k0, omega or np.nan)
        ex = (E0vec / amp).real if np.abs(E0vec.real).max() > 0 else (E0vec / amp).imag
        ex = ex / np.linalg.norm(ex)
        ey = np.cross(d, ex)
        E0 = np.vdot(ex, E0vec)

        cz = dirs @ d
        cx = dirs @ ex
        cy = dirs @ ey
        st = np.hypot(cx, cy)
        phi = np.arctan2(cy, cx)
        ct = np.clip(cz, -1.0, 1.0)
        e_theta = (np.outer(ct * np.cos(phi), ex) + np.outer(ct * np.sin(phi), ey)
                   - np.outer(st, d))
        e_phi = -np.outer(np.sin(phi), ex) + np.outer(np.cos(phi), ey)
        S1, S2 = self.amplitudes(ct)
        pref = E0 / (-1j * self.k0)
        E_inf = pref * ((np.cos(phi) * S2)[:, None] * e_theta
                        - (np.sin(phi) * S1)[:, None] * e_phi)
        H_inf = np.sqrt(eps0 / mu0) * np.cross(dirs, E_inf)
        return FarField(dirs, E_inf, H_inf, self.k0, omega if omega is not None else np.nan)

    def cross_sections(self):
        """Extinction and scattering cross sections from the coefficient sums."""
        n = np.arange(1, self.n_max + 1)
        q = 2 * np.pi / self.k0**2
        ext = q * np.sum((2 * n + 1) * (self.an + self.bn).real)
        sca = q * np.sum((2 * n + 1) * (np.abs(self.an) ** 2 + np.abs(self.bn) ** 2))
        return float(ext), float(sca)


def mie_coefficients(a, m: MediumSpec, n_max=None, extra=30):
    """Mie coefficients ``a_n``, ``b_n`` for a sphere of radius ``a`` in medium ``m``.

    The order is extended past the Wiscombe cutoff until the trailing
    coefficients fall below ``1e-12`` (at most ``extra`` additional orders).
    """
    x = m.k0 * a
    rel = m.k / m.k0
    mu_r = m.mu_r
    base = wiscombe_nmax(x) if n_max is None else int(n_max)
    N = base + extra
    psi, xi = riccati_bessel(x, N)
    D = log_derivative(rel * x, N)
    n = np.arange(1, N + 1)
    Da = mu_r * D[1:] / rel + n / x
    Db = rel * D[1:] / mu_r + n / x
    an = (Da * psi[1:] - psi[:-1]) / (Da * xi[1:] - xi[:-1])
    bn = (Db * psi[1:] - psi[:-1]) / (Db * xi[1:] - xi[:-1])

    trailing = np.maximum(np.abs(an), np.abs(bn))
    used = base
    if n_max is None:
        while used < N and trailing[used - 1] >= TRAILING_TOL:
            used += 1
    converged = bool(trailing[used - 1] < TRAILING_TOL) or bool(np.all(trailing == 0))
    return an[:used], bn[:used], used, converged


def mie_solution(a, m: MediumSpec, n_max=None):
    if m.speed != 0.0:
        raise ValueError("the Mie oracle covers bodies at rest only (V = 0)")
    an, bn, used, converged = mie_coefficients(a, m, n_max)
    return MieSolution(a, m.k0, m.k, float(np.sqrt(m.mu_r / m.eps_r)), an, bn, used, converged)


def mie_far_field(a, m: MediumSpec, d, p, dirs):
    """Far-field pattern of a sphere of radius ``a`` centred at the origin.

    Raises
    ------
    NotConverged
        If the trailing multipole coefficients exceed ``1e-12``.
    """
    sol = mie_solution(a, m)
    if not sol.converged:
        raise NotConverged(f"Mie series not converged at n_max={sol.n_max}")
    return sol.far_field(d, p, dirs, m.eps0, m.mu0, m.omega)


def _dipole_column(k, omega, eps0, mu0, x, z, p):
    R = np.asarray(x, dtype=float) - np.asarray(z, dtype=float)
    r = np.linalg.norm(R)
    if r == 0.0:
        raise SingularPoint("observation point coincides with the source")
    rh = R / r
    g = np.exp(1j * k * r) / (4 * np.pi * r)
    p = np.asarray(p, dtype=complex)
    E = g * ((k**2 + 1j * k / r - 1 / r**2) * p
             + (-(k**2) - 3j * k / r + 3 / r**2) * rh * np.dot(rh, p))
    curl_gp = g * (1j * k - 1 / r) * np.cross(rh, p)
    H = k**2 / (1j * omega * mu0) * curl_gp
    return E, H


@dataclass(frozen=True)
class ImageGreen:
    """Image-source tensor for the interface ``x3 = 0`` (background above, body below)."""

    medium: MediumSpec

    def direct(self, x, z, p):
        m = self.medium
        return _dipole_column(m.k0, m.omega, m.eps0, m.mu0, x, z, p)

    def image(self, x, z, p):
        zs = np.array([z[0], z[1], -z[2]], dtype=float)
        return self.direct(x, zs, p)

    def __call__(self, x, z, p):
        if x[2] <= 0 or z[2] <= 0:
            raise ValueError("image tensor is defined for x3 > 0 and z3 > 0")
        Ed, Hd = self.direct(x, z, p)
        Ei, Hi = self.image(x, z, p)
        return Ed - Ei, Hd - Hi


def image_green(x, z, p, medium: MediumSpec | None = None):
    """``(G(x, z) - G(x, z*)) p`` with ``z* = (z1, z2, -z3)``; returns ``(E, H)``."""
    return ImageGreen(medium or MediumSpec())(np.asarray(x, float), np.asarray(z, float), p)


def image_blowup_exponent(deltas, p=(1.0, 0.0, 0.0), medium: MediumSpec | None = None):
    """Log-log slope of the image column ``|G(z, z*) p|`` at ``z = (0, 0, delta)``.

    Only the electric part enters; it carries the ``delta^-3`` singularity.
    """
    g = ImageGreen(medium or MediumSpec())
    mags = []
    for dlt in deltas:
        z = np.array([0.0, 0.0, float(dlt)])
        E, _ = g.image(z, z, p)
        mags.append(np.linalg.norm(E))
    mags = np.array(mags)
    slope = np.polyfit(np.log(np.asarray(deltas, float)), np.log(mags), 1)[0]
    return float(slope), mags
