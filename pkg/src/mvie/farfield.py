"""Far-field patterns and radiation-condition diagnostics."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

CSV_SCHEMA_VERSION = 1
CSV_COLUMNS = [
    "theta_x", "theta_y", "theta_z",
    "Re_Ex", "Im_Ex", "Re_Ey", "Im_Ey", "Re_Ez", "Im_Ez",
    "Re_Hx", "Im_Hx", "Re_Hy", "Im_Hy", "Re_Hz", "Im_Hz",
]


@dataclass
class FarField:
    """Tabulated far-field amplitudes ``E_inf``, ``H_inf`` over unit directions."""

    directions: np.ndarray
    E_inf: np.ndarray
    H_inf: np.ndarray
    k0: float
    omega: float

    def __post_init__(self):
        self.directions = np.atleast_2d(np.asarray(self.directions, dtype=float))
        self.E_inf = np.atleast_2d(np.asarray(self.E_inf, dtype=complex))
        self.H_inf = np.atleast_2d(np.asarray(self.H_inf, dtype=complex))

    def __add__(self, other):
        if not np.array_equal(self.directions, other.directions):
            raise ValueError("far fields tabulated on different direction sets")
        return FarField(self.directions, self.E_inf + other.E_inf,
                        self.H_inf + other.H_inf, self.k0, self.omega)

    def transversality_error(self):
        """Largest ``|theta . E_inf| / max|E_inf|`` and likewise for ``H_inf``."""
        scale_e = max(np.abs(self.E_inf).max(), 1e-300)
        scale_h = max(np.abs(self.H_inf).max(), 1e-300)
        te = np.abs(np.einsum("ij,ij->i", self.directions, self.E_inf)).max() / scale_e
        th = np.abs(np.einsum("ij,ij->i", self.directions, self.H_inf)).max() / scale_h
        return float(max(te, th))

    def impedance_error(self, eps0, mu0):
        """Relative deviation of ``H_inf`` from ``sqrt(eps0/mu0) theta x E_inf``."""
        expected = np.sqrt(eps0 / mu0) * np.cross(self.directions, self.E_inf)
        scale = max(np.abs(expected).max(), 1e-300)
        return float(np.abs(self.H_inf - expected).max() / scale)

    def to_csv(self, path=None):
        buf = io.StringIO()
        buf.write(f"# mvie-farfield-csv v{CSV_SCHEMA_VERSION}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for th, e, h in zip(self.directions, self.E_inf, self.H_inf):
            row = list(th)
            for z in np.concatenate([e, h]):
                row += [z.real, z.imag]
            w.writerow([repr(float(v)) for v in row])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path, k0=float("nan"), omega=float("nan")):
        rows = []
        with open(path) as fh:
            lines = [ln for ln in fh if not ln.startswith("#")]
        reader = csv.reader(lines)
        header = next(reader)
        if header != CSV_COLUMNS:
            raise ValueError(f"unexpected far-field CSV header {header}")
        for r in reader:
            rows.append([float(v) for v in r])
        a = np.array(rows)
        comp = a[:, 3::2] + 1j * a[:, 4::2]
        return cls(a[:, :3], comp[:, :3], comp[:, 3:], k0, omega)

    def to_json(self, **metadata):
        doc = {
            "schema": f"mvie-farfield-json v{CSV_SCHEMA_VERSION}",
            "k0": self.k0,
            "omega": self.omega,
            "metadata": metadata,
            "directions": self.directions.tolist(),
            "E_inf": [[[z.real, z.imag] for z in e] for e in self.E_inf],
            "H_inf": [[[z.real, z.imag] for z in h] for h in self.H_inf],
        }
        return json.dumps(doc)


def relative_l2_error(approx: FarField, reference: FarField):
    """Relative L2 distance of ``E_inf`` over the shared direction sample."""
    num = np.linalg.norm(approx.E_inf - reference.E_inf)
    den = np.linalg.norm(reference.E_inf)
    return float(num / den)


def fibonacci_sphere(n=196):
    """Quasi-uniform unit vectors on the sphere (golden-spiral lattice)."""
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    r = np.sqrt(1.0 - z * z)
    phi = np.pi * (1.0 + np.sqrt(5.0)) * i
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


# solver-coupled evaluations ----------------------------------------------------

def _density(op, u):
    """``chi M u h^3`` at occupied voxels, with their centres."""
    data = np.asarray(u.data if hasattr(u, "data") else u)
    if hasattr(u, "converged") and not u.converged:
        from .errors import NotConverged
        raise NotConverged("field state is flagged as not converged")
    J = op.pointwise(op.M, data) * op.domain.h**3
    sup = op.support
    return J[sup], op.domain.centers()[sup]


def scattered_at(op, u, x, chunk=64):
    """Scattered ``(E, H)`` at exterior points ``x`` by direct quadrature over the voxels.

    Raises
    ------
    TooCloseToSupport
        If a point lies within one cell of the occupied voxels.
    """
    from .errors import TooCloseToSupport
    from .greens import kernel_values

    x = np.atleast_2d(np.asarray(x, dtype=float))
    J, Y = _density(op, u)
    m = op.medium
    w = m.omega
    for xi in x:
        q = np.maximum(np.abs(Y - xi) - op.domain.h / 2, 0.0)
        if np.sqrt((q**2).sum(axis=1)).min() <= op.domain.h:
            raise TooCloseToSupport(f"point {xi} is within h of the body")
    E = np.zeros((len(x), 3), dtype=complex)
    H = np.zeros((len(x), 3), dtype=complex)
    JE, JH = J[:, :3], J[:, 3:]
    for s in range(0, len(x), chunk):
        R = x[s:s + chunk, None, :] - Y[None, :, :]
        _, N, grad = kernel_values(m.k0, R)
        E[s:s + chunk] = (np.einsum("xyab,yb->xa", N, JE)
                          + 1j * w * m.mu0 * np.cross(grad, JH[None]).sum(axis=1))
        H[s:s + chunk] = (-1j * w * m.eps0 * np.cross(grad, JE[None]).sum(axis=1)
                          + np.einsum("xyab,yb->xa", N, JH))
    return E, H


def far_field(op, u, dirs=None):
    """Far-field pattern of the solved state ``u`` over unit directions ``dirs``.

    With ``a(theta) = (1/4pi) sum_y e^{-i k0 theta.y} J(y)``::

        E_inf = k0^2 (I - theta theta) a_E - omega mu0 k0 theta x a_H

    and ``H_inf = sqrt(eps0/mu0) theta x E_inf``.
    """
    from .errors import BadDirection

    dirs = fibonacci_sphere() if dirs is None else np.atleast_2d(np.asarray(dirs, dtype=float))
    if np.any(np.abs(np.linalg.norm(dirs, axis=1) - 1.0) > 1e-9):
        raise BadDirection("far-field directions must be unit vectors")
    J, Y = _density(op, u)
    m = op.medium
    phase = np.exp(-1j * m.k0 * (dirs @ Y.T))
    a = phase @ J / (4.0 * np.pi)
    aE, aH = a[:, :3], a[:, 3:]
    proj = aE - dirs * np.einsum("di,di->d", dirs, aE)[:, None]
    E_inf = m.k0**2 * proj - m.omega * m.mu0 * m.k0 * np.cross(dirs, aH)
    H_inf = np.sqrt(m.eps0 / m.mu0) * np.cross(dirs, E_inf)
    return FarField(dirs, E_inf, H_inf, m.k0, m.omega)


def silver_muller_residual(op, u, radii, dirs=None, center=None, fields=None):
    """Max over ``dirs`` of ``|theta x H^s + sqrt(eps0/mu0) E^s|`` at each radius.

    ``fields(x) -> (E, H)`` replaces the scattered field of ``u`` when given.
    Returns the residual per radius and the fitted log-log decay exponent.
    """
    dirs = fibonacci_sphere(50) if dirs is None else np.atleast_2d(dirs)
    if center is None:
        center = op.domain.centers()[op.support].mean(axis=0) if op.support.any() else np.zeros(3)
    m = op.medium
    res = []
    for R in radii:
        x = center + R * dirs
        E, H = scattered_at(op, u, x) if fields is None else fields(x)
        v = np.cross(dirs, H) + np.sqrt(m.eps0 / m.mu0) * E
        res.append(float(np.linalg.norm(v, axis=1).max()))
    res = np.array(res)
    if np.all(res > 0) and len(radii) >= 2:
        slope = float(np.polyfit(np.log(radii), np.log(res), 1)[0])
    else:
        slope = float("nan")
    return res, slope
