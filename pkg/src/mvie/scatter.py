"""Lippmann-Schwinger operators, incident fields and the two forward solvers.

The total field ``u = (E, H)`` on the lattice solves::

    u = u_inc + omega G (chi M u),

where ``M`` is the pointwise coupling matrix and ``G`` the dyadic operator of
:mod:`mvie.greens`. Splitting ``M`` into the rest-frame contrast and the
velocity terms ``T^j (C + T) diag(eps_r, mu_r)`` gives the operators
``G_{-1}`` and ``G_j``.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from . import media
from .errors import (BadDirection, MaxIterationsExceeded, NotContractive, RegimeViolation,
                     SingularPoint)
from .greens import KernelTable, dyadic_green_apply, kernel_values
from .grid import VoxelDomain
from .media import MediumSpec

POWER_STEPS = 20
POWER_SEED = 20240601


@dataclass
class FieldState:
    """Six complex components per voxel, stored as ``dims + (6,)``."""

    domain: VoxelDomain
    data: np.ndarray
    converged: bool = True

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=complex)
        if self.data.shape != tuple(self.domain.dims) + (6,):
            from .errors import DimensionMismatch
            raise DimensionMismatch(f"field shape {self.data.shape} vs dims {self.domain.dims}")

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)

    @property
    def E(self):
        return self.data[..., :3]

    @property
    def H(self):
        return self.data[..., 3:]


def _arr(f):
    return np.asarray(f.data if isinstance(f, FieldState) else f)


# incident fields -------------------------------------------------------------

def incident_plane(m: MediumSpec, d, p, x):
    """Plane wave ``E = i k0 (d x p) x d e^{i k0 d.x}``, ``H = (i k0^2/(omega mu0)) d x p e^{i k0 d.x}``.

    ``x`` has shape ``(..., 3)``; returns ``(E, H)`` of the same shape.
    """
    d = np.asarray(d, dtype=float)
    if abs(np.linalg.norm(d) - 1.0) > 1e-12:
        raise BadDirection(f"|d| = {np.linalg.norm(d)!r} is not 1")
    p = np.asarray(p, dtype=complex)
    x = np.asarray(x, dtype=float)
    phase = np.exp(1j * m.k0 * (x @ d))[..., None]
    dxp = np.cross(d, p)
    E = 1j * m.k0 * np.cross(dxp, d) * phase
    H = (1j * m.k0**2 / (m.omega * m.mu0)) * dxp * phase
    return E, H


def incident_point_dipole(m: MediumSpec, z, p, x):
    """Radiating electric dipole at ``z``: ``E = (k0^2 + grad div)(g p)``, ``H = curl E / (i omega mu0)``."""
    x = np.asarray(x, dtype=float)
    R = x - np.asarray(z, dtype=float)
    if np.any(np.linalg.norm(R, axis=-1) == 0.0):
        raise SingularPoint("observation point coincides with the dipole")
    p = np.asarray(p, dtype=complex)
    _, N, grad = kernel_values(m.k0, R)
    E = np.einsum("...ab,b->...a", N, p)
    H = (m.k0**2 / (1j * m.omega * m.mu0)) * np.cross(grad, p)
    return E, H


@dataclass(frozen=True)
class IncidentSpec:
    """``kind="plane"`` with direction ``d``, or ``kind="point-dipole"`` at ``z``."""

    kind: str = "plane"
    d: tuple = (0.0, 0.0, 1.0)
    p: tuple = (1.0, 0.0, 0.0)
    z: tuple | None = None

    def __post_init__(self):
        if self.kind not in ("plane", "point-dipole"):
            raise ValueError(f"unknown incident kind {self.kind!r}")
        if self.kind == "point-dipole" and self.z is None:
            raise ValueError("point-dipole incidence needs a source location z")

    def fields(self, m: MediumSpec, x):
        if self.kind == "plane":
            return incident_plane(m, self.d, self.p, x)
        return incident_point_dipole(m, self.z, self.p, x)

    def on(self, domain: VoxelDomain, m: MediumSpec):
        E, H = self.fields(m, domain.centers())
        return FieldState(domain, np.concatenate([E, H], axis=-1))


# operators -------------------------------------------------------------------

@dataclass
class LSOperator:
    """Discrete Lippmann-Schwinger operator for one medium on one lattice.

    Parameters
    ----------
    medium, domain
    kernel : KernelTable, optional
        Built for ``(medium.k0, domain.h, domain.dims)`` when omitted.
    J : int, optional
        Velocity-series cutoff. By default the smallest ``J`` with tail bound
        ``||T||^(J+1) / (1 - ||T||) < series_tol``.
    derivatives : {"kernel", "spectral"}
        Forwarded to :func:`mvie.greens.dyadic_green_apply`.
    """

    medium: MediumSpec
    domain: VoxelDomain
    kernel: KernelTable | None = None
    J: int | None = None
    series_tol: float = 1e-15
    derivatives: str = "kernel"
    workers: int = 1
    M: np.ndarray = field(init=False, repr=False)
    terms: list = field(init=False, repr=False)

    def __post_init__(self):
        m = self.medium
        if self.kernel is None:
            self.kernel = KernelTable(m.k0, self.domain.h, self.domain.dims, workers=self.workers)
        if self.kernel.dims != tuple(self.domain.dims) or not np.isclose(self.kernel.h, self.domain.h):
            from .errors import DimensionMismatch
            raise DimensionMismatch("kernel table does not match the domain lattice")
        T = media.assemble_T(m)
        self.norm_T = media._require_contractive_T(T)
        if self.J is None:
            self.J = media.series_terms_needed(self.norm_T, self.series_tol)
        self.M_minus1 = media.contrast_matrix(m)
        self.terms = [media.G_j_matrix(m, j) for j in range(self.J + 1)]
        # truncated consistently with the per-term path
        self.M = self.M_minus1 + (sum(self.terms) if self.terms else 0.0)
        self.chi = self.domain.chi
        self.support = self.chi > 0

    @property
    def tail_bound(self):
        t = self.norm_T
        return t ** (self.J + 1) / (1.0 - t) if t > 0 else 0.0

    def green(self, j):
        return self.medium.omega * dyadic_green_apply(self.kernel, self.medium, j, self.derivatives)

    def green_T(self, j):
        m = self.medium
        # transpose of the lattice operator: swap the two curl couplings
        mt = _CurlSwap(m.omega, -m.eps0, -m.mu0)
        return m.omega * dyadic_green_apply(self.kernel, mt, j, self.derivatives)

    def pointwise(self, A, f):
        return self.chi[..., None] * np.einsum("ab,...b->...a", A, f)

    def apply_GM(self, f):
        """``omega G (chi M f)``."""
        return self.green(self.pointwise(self.M, _arr(f)))


@dataclass(frozen=True)
class _CurlSwap:
    omega: float
    mu0: float
    eps0: float


def apply_G_minus1(op: LSOperator, f):
    return op.green(op.pointwise(op.M_minus1, _arr(f)))


def apply_G_j(op: LSOperator, j, f):
    if not 0 <= j <= op.J:
        raise ValueError(f"term index {j} outside 0..{op.J}")
    return op.green(op.pointwise(op.terms[j], _arr(f)))


def apply_LS(op: LSOperator, f, fused=True):
    """``(I - G_{-1} - sum_j G_j) f``; ``fused`` sums the pointwise matrices first."""
    f = _arr(f)
    if fused:
        return f - op.apply_GM(f)
    out = f - apply_G_minus1(op, f)
    for j in range(op.J + 1):
        out = out - apply_G_j(op, j, f)
    return out


def apply_LS_adjoint(op: LSOperator, g):
    """Adjoint of :func:`apply_LS` for ``<a, b> = vdot(a, b)``."""
    g = _arr(g)
    y = np.conj(op.green_T(np.conj(g)))
    return g - np.einsum("ba,...b->...a", op.M.conj(), op.chi[..., None] * y)


def operator_norm(apply, apply_adj, shape, steps=POWER_STEPS, seed=POWER_SEED):
    """Power iteration on ``A^H A``; returns the estimate of ``||A||_2``."""
    rng = np.random.default_rng(seed)
    x = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(steps):
        y = apply_adj(apply(x))
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0
        est = np.sqrt(ny)
        x = y / ny
    return float(est)


def norm_G_minus1(op: LSOperator, steps=POWER_STEPS, seed=POWER_SEED):
    shape = tuple(op.domain.dims) + (6,)

    def adj(g):
        y = np.conj(op.green_T(np.conj(g)))
        return np.einsum("ba,...b->...a", op.M_minus1, op.chi[..., None] * y)

    return operator_norm(lambda f: apply_G_minus1(op, f), adj, shape, steps, seed)


def norm_G_j(op: LSOperator, j, steps=POWER_STEPS, seed=POWER_SEED):
    shape = tuple(op.domain.dims) + (6,)
    A = op.terms[j]

    def adj(g):
        y = np.conj(op.green_T(np.conj(g)))
        return np.einsum("ba,...b->...a", A, op.chi[..., None] * y)

    return operator_norm(lambda f: apply_G_j(op, j, f), adj, shape, steps, seed)


# solvers ---------------------------------------------------------------------

@dataclass
class SolveReport:
    method: str
    total: FieldState
    incident: FieldState
    residuals: list
    iterations: int
    converged: bool
    rho: float
    tol: float
    wall_time: float
    params: dict = field(default_factory=dict)

    @property
    def scattered(self):
        return FieldState(self.total.domain, self.total.data - self.incident.data)

    def to_record(self):
        return {"method": self.method, "iterations": self.iterations,
                "converged": self.converged, "rho": self.rho, "tol": self.tol,
                "residuals": [float(r) for r in self.residuals],
                "wall_time": self.wall_time, "params": self.params}


def _support_norm(op, f):
    return float(np.linalg.norm(f[op.support]))


def ls_residual(op: LSOperator, u, inc):
    """``||u - inc - G_M u|| / ||inc||`` over the support of ``chi``."""
    u, inc = _arr(u), _arr(inc)
    den = _support_norm(op, inc)
    r = u - inc - op.apply_GM(u)
    return _support_norm(op, r) / den if den > 0 else _support_norm(op, r)


def _params(op, extra):
    rec = {"medium": op.medium.to_record(), "h": op.domain.h, "dims": list(op.domain.dims),
           "J": op.J, "derivatives": op.derivatives}
    rec.update(extra)
    return rec


def contraction_ratio(residuals, tail=5):
    r = np.asarray(residuals, dtype=float)
    r = r[r > 0]
    if len(r) < 2:
        return 0.0
    ratios = r[1:] / r[:-1]
    return float(np.exp(np.mean(np.log(ratios[-tail:]))))


def solve_born(op: LSOperator, inc, tol=1e-8, maxit=500, require_regime=True, cpw=1.0,
               check_norm=True, seed=POWER_SEED):
    """Fixed-point iteration ``u <- inc + G_M u`` (the Born/Neumann series).

    Raises
    ------
    RegimeViolation
        If ``require_regime`` and the medium fails :func:`mvie.media.check_regime`.
    NotContractive
        If the measured ``||G_{-1}||`` is not below one, or the residual fails
        to decrease five times in a row.
    """
    t0 = time.perf_counter()
    inc_state = inc if isinstance(inc, FieldState) else FieldState(op.domain, inc)
    f0 = inc_state.data
    if require_regime:
        rep = media.check_regime(op.medium, cpw)
        if not rep.passed:
            raise RegimeViolation(f"medium outside the admissible regime: {rep.to_record()}")
    norm_m1 = norm_G_minus1(op, seed=seed) if check_norm else float("nan")
    extra = {"norm_G_minus1": norm_m1, "maxit": maxit}
    if check_norm and norm_m1 >= 1.0:
        raise NotContractive(f"measured ||G_-1|| = {norm_m1:.4g} >= 1")
    den = _support_norm(op, f0)
    u = f0.copy()
    residuals = []
    stalls = 0
    for it in range(1, maxit + 1):
        gu = op.apply_GM(u)
        r = u - f0 - gu
        res = _support_norm(op, r) / den if den > 0 else _support_norm(op, r)
        residuals.append(res)
        if res < tol or den == 0:
            total = np.where(op.support[..., None], u, f0 + gu)
            rep = SolveReport("born", FieldState(op.domain, total), inc_state, residuals, it,
                              True, contraction_ratio(residuals), tol,
                              time.perf_counter() - t0, _params(op, extra))
            return rep
        if len(residuals) > 1 and residuals[-1] >= residuals[-2]:
            stalls += 1
        else:
            stalls = 0
        partial = SolveReport("born", FieldState(op.domain, u, converged=False), inc_state,
                              residuals, it, False, contraction_ratio(residuals), tol,
                              time.perf_counter() - t0, _params(op, extra))
        if stalls >= 5:
            raise NotContractive("residual failed to decrease 5 times in a row", partial)
        u = f0 + gu
    raise MaxIterationsExceeded(f"Born iteration hit maxit={maxit}", partial)


def solve_krylov(op: LSOperator, inc, tol=1e-8, maxit=500, restart=30):
    """Restarted GMRES on ``(I - G_M) u = inc`` restricted to the support of ``chi``.

    Raises
    ------
    MaxIterationsExceeded
        If GMRES stops before reaching ``tol``.
    """
    t0 = time.perf_counter()
    inc_state = inc if isinstance(inc, FieldState) else FieldState(op.domain, inc)
    f0 = inc_state.data
    sup = op.support
    b = f0[sup].ravel()
    bnorm = np.linalg.norm(b)
    full = np.zeros_like(f0)
    extra = {"restart": restart, "maxit": maxit}
    if bnorm == 0.0:
        return SolveReport("krylov", FieldState(op.domain, np.zeros_like(f0)), inc_state, [0.0],
                           0, True, 0.0, tol, time.perf_counter() - t0, _params(op, extra))

    def matvec(v):
        full[...] = 0.0
        full[sup] = v.reshape(-1, 6)
        return (full - op.apply_GM(full))[sup].ravel()

    n = b.size
    A = LinearOperator((n, n), matvec=matvec, dtype=complex)
    history = [1.0]

    def cb(pr):
        history.append(float(pr))

    x, info = gmres(A, b, rtol=tol, atol=0.0, restart=restart,
                    maxiter=max(1, int(np.ceil(maxit / restart))), callback=cb,
                    callback_type="pr_norm")
    full[...] = 0.0
    full[sup] = x.reshape(-1, 6)
    gu = op.apply_GM(full)
    res = np.linalg.norm((full - f0 - gu)[sup]) / bnorm
    total = np.where(sup[..., None], full, f0 + gu)
    history.append(res)
    ok = info == 0
    rep = SolveReport("krylov", FieldState(op.domain, total, converged=bool(ok)), inc_state,
                      history, len(history) - 2, bool(ok), contraction_ratio(history), tol,
                      time.perf_counter() - t0, _params(op, extra))
    if not ok:
        raise MaxIterationsExceeded(f"GMRES stopped at residual {res:.3g} (info={info})", rep)
    return rep


def solve(op: LSOperator, inc, method="krylov", **kw):
    if method == "born":
        return solve_born(op, inc, **kw)
    if method == "krylov":
        return solve_krylov(op, inc, **kw)
    raise ValueError(f"unknown solver {method!r}")
