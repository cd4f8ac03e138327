"""Constitutive algebra for a dielectric body in uniform translation.

All coupling matrices are plain ``(6, 6)`` numpy arrays acting on the stacked
field ``(E, H)``; :func:`split_blocks` recovers the four 3x3 blocks.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InvalidMedium, RegimeViolation

#: SI vacuum constants, used by :meth:`MediumSpec.si`.
EPS0_SI = 8.8541878128e-12
MU0_SI = 1.25663706212e-6


@dataclass(frozen=True)
class MediumSpec:
    """Background and body material parameters plus the body velocity.

    Parameters
    ----------
    eps0, mu0 : float
        Background permittivity and permeability.
    eps, mu : float
        Permittivity and permeability inside the body.
    V : tuple of 3 floats
        Velocity of the body in the laboratory frame.
    omega : float
        Angular frequency.
    """

    eps0: float = 1.0
    mu0: float = 1.0
    eps: float = 1.0
    mu: float = 1.0
    V: tuple = (0.0, 0.0, 0.0)
    omega: float = 1.0
    units: str = field(default="normalized", compare=False)

    def __post_init__(self):
        V = tuple(float(v) for v in np.asarray(self.V, dtype=float).reshape(3))
        object.__setattr__(self, "V", V)
        if not (self.eps0 > 0 and self.mu0 > 0):
            raise InvalidMedium("background eps0 and mu0 must be positive")
        if self.eps < self.eps0 or self.mu < self.mu0:
            raise InvalidMedium("body requires eps >= eps0 and mu >= mu0")
        if not self.omega > 0:
            raise InvalidMedium("omega must be positive")
        if self.units not in ("normalized", "si"):
            raise InvalidMedium(f"unknown units mode {self.units!r}")

    @classmethod
    def normalized(cls, eps_r=1.0, mu_r=1.0, V=(0.0, 0.0, 0.0), omega=1.0):
        """Medium in units where ``eps0 = mu0 = c = 1``."""
        return cls(1.0, 1.0, float(eps_r), float(mu_r), V, omega)

    @classmethod
    def si(cls, eps_r=1.0, mu_r=1.0, V=(0.0, 0.0, 0.0), omega=1.0):
        """Medium in vacuum SI units, body given by relative parameters."""
        return cls(EPS0_SI, MU0_SI, eps_r * EPS0_SI, mu_r * MU0_SI, V, omega, units="si")

    def with_velocity(self, V):
        return MediumSpec(self.eps0, self.mu0, self.eps, self.mu, V, self.omega, self.units)

    @property
    def eps_r(self):
        return self.eps / self.eps0

    @property
    def mu_r(self):
        return self.mu / self.mu0

    @property
    def velocity(self):
        return np.array(self.V)

    @property
    def speed(self):
        return float(np.linalg.norm(self.V))

    @property
    def c(self):
        return 1.0 / np.sqrt(self.eps0 * self.mu0)

    @property
    def c_omega(self):
        return 1.0 / np.sqrt(self.eps * self.mu)

    @property
    def k0(self):
        return self.omega * np.sqrt(self.eps0 * self.mu0)

    @property
    def k(self):
        return self.omega * np.sqrt(self.eps * self.mu)

    def to_record(self):
        rec = asdict(self)
        rec["V"] = list(self.V)
        return rec


def cross_matrix(V):
    """Return the skew matrix ``X`` with ``X @ w == np.cross(V, w)``."""
    v1, v2, v3 = np.asarray(V, dtype=float).reshape(3)
    return np.array([[0.0, -v3, v2], [v3, 0.0, -v1], [-v2, v1, 0.0]])


def block_matrix(ul, ur, ll, lr):
    return np.block([[ul, ur], [ll, lr]])


def split_blocks(A):
    """Split a 6x6 matrix into ``(upper_left, upper_right, lower_left, lower_right)``."""
    A = np.asarray(A)
    return A[:3, :3], A[:3, 3:], A[3:, :3], A[3:, 3:]


def _diag_blocks(a, b):
    I3 = np.eye(3)
    return block_matrix(a * I3, np.zeros((3, 3)), np.zeros((3, 3)), b * I3)


def assemble_T(m: MediumSpec):
    X = cross_matrix(m.V)
    Z = np.zeros((3, 3))
    return block_matrix(Z, m.mu0 * m.eps_r * X, -m.eps0 * m.mu_r * X, Z)


def assemble_C(m: MediumSpec):
    X = cross_matrix(m.V)
    Z = np.zeros((3, 3))
    inv_c2 = m.eps0 * m.mu0
    return block_matrix(
        Z,
        -inv_c2 / m.eps0 * (m.mu0 / m.mu) * X,
        inv_c2 / m.mu0 * (m.eps0 / m.eps) * X,
        Z,
    )


def assemble_D(m: MediumSpec = None):
    return np.eye(6)


def contrast_matrix(m: MediumSpec):
    """Block-diagonal rest-frame contrast ``diag((eps_r - 1) I, (mu_r - 1) I)``."""
    return _diag_blocks(m.eps_r - 1.0, m.mu_r - 1.0)


def relative_matrix(m: MediumSpec):
    """Block-diagonal ``diag(eps_r I, mu_r I)``."""
    return _diag_blocks(m.eps_r, m.mu_r)


def spectral_norm(A):
    return float(np.linalg.svd(np.asarray(A), compute_uv=False)[0])


def norm_T_closed_form(m: MediumSpec):
    return max(m.mu0 * m.eps_r, m.eps0 * m.mu_r) * m.speed


def norm_CplusT_closed_form(m: MediumSpec):
    gap = 1.0 / m.c_omega**2 - 1.0 / m.c**2
    return max(m.mu0 / (m.mu * m.eps0) * gap, m.eps0 / (m.mu0 * m.eps) * gap) * m.speed


def _require_contractive_T(T):
    nT = spectral_norm(T)
    if nT >= 1.0:
        raise RegimeViolation(f"||T|| = {nT:.6g} >= 1; the Neumann series for (I - T)^-1 diverges")
    return nT


def series_terms_needed(norm_t, tol):
    """Smallest ``n`` with tail bound ``norm_t**(n+1) / (1 - norm_t) < tol``."""
    if norm_t == 0.0:
        return 0
    n = 0
    while norm_t ** (n + 1) / (1.0 - norm_t) >= tol:
        n += 1
    return n


def assemble_B(m: MediumSpec, tol=1e-14, method="direct"):
    """``B = T + T^2 + ... = (I - T)^-1 - I``.

    ``method="series"`` sums powers until the geometric tail bound drops below
    ``tol``; ``method="direct"`` solves the 6x6 system.
    """
    return _B_from_T(assemble_T(m), tol, method)


def _B_from_T(T, tol, method):
    nT = _require_contractive_T(T)
    I6 = np.eye(6)
    if method == "direct":
        return np.linalg.solve(I6 - T, I6) - I6
    if method != "series":
        raise ValueError(f"unknown method {method!r}")
    n = series_terms_needed(nT, tol)
    B = np.zeros((6, 6))
    P = I6
    for _ in range(n):
        P = P @ T
        B = B + P
    return B


def assemble_M(m: MediumSpec, method="closed", tol=1e-14):
    """Pointwise coupling matrix of the Lippmann-Schwinger system.

    ``method="closed"`` uses ``(I - T)^-1 (C + T)``; ``method="series"`` uses
    ``C + BC + BD`` with ``B`` from the truncated Neumann series.
    """
    T = assemble_T(m)
    C = assemble_C(m)
    _require_contractive_T(T)
    I6 = np.eye(6)
    if method == "closed":
        coupling = np.linalg.solve(I6 - T, C + T)
    elif method == "series":
        B = _B_from_T(T, tol, "series")
        coupling = C + B @ C + B @ assemble_D(m)
    else:
        raise ValueError(f"unknown method {method!r}")
    return contrast_matrix(m) + coupling @ relative_matrix(m)


def G_j_matrix(m: MediumSpec, j):
    """Pointwise factor ``T^j (C + T) diag(eps_r, mu_r)`` of the ``j``-th series term."""
    T = assemble_T(m)
    return np.linalg.matrix_power(T, j) @ (assemble_C(m) + T) @ relative_matrix(m)


@dataclass(frozen=True)
class RegimeReport:
    lhs1: float
    pass1: bool
    lhs2: float
    pass2: bool
    c: float
    c_Omega: float
    normT: float
    normCplusT: float
    cpw: float
    #: True when ``cpw`` is the unvalidated default of 1.
    cpw_is_default: bool

    @property
    def passed(self):
        return self.pass1 and self.pass2

    def to_record(self):
        rec = asdict(self)
        rec["pass"] = self.passed
        return rec


def check_regime(m: MediumSpec, cpw=1.0):
    """Evaluate both admissibility inequalities for ``m``.

    ``cpw`` stands in for the unknown universal constant of the contrast
    condition. A failing regime is reported, not raised.
    """
    eps_r, mu_r, w = m.eps_r, m.mu_r, m.omega
    lhs1 = max(m.mu0 * eps_r, m.eps0 * mu_r) * m.speed
    freq_factor = max(
        1.0,
        w * m.eps0,
        w * m.mu0,
        w * (m.eps - m.eps0),
        w * (m.mu - m.mu0),
        w**2 * m.eps0 * m.mu0 * max(eps_r - 1.0, mu_r - 1.0),
    )
    lhs2 = cpw * (1.0 - m.c_omega / m.c) * max(eps_r, mu_r) * freq_factor
    return RegimeReport(
        lhs1=float(lhs1),
        pass1=bool(lhs1 < 1.0),
        lhs2=float(lhs2),
        pass2=bool(lhs2 < 0.5),
        c=float(m.c),
        c_Omega=float(m.c_omega),
        normT=spectral_norm(assemble_T(m)),
        normCplusT=spectral_norm(assemble_C(m) + assemble_T(m)),
        cpw=float(cpw),
        cpw_is_default=cpw == 1.0,
    )
