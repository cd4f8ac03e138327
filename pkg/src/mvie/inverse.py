"""Identifiability experiments: far-field discrimination and the boundary blow-up probe."""
from __future__ import annotations

import itertools
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import TooCloseToSupport
from .farfield import far_field, fibonacci_sphere, relative_l2_error, scattered_at
from .greens import KernelTable
from .grid import ProbeSpec, ShapeSpec, rasterize
from .media import MediumSpec, check_regime
from .oracle import image_blowup_exponent, mie_far_field
from .scatter import IncidentSpec, LSOperator, solve


def default_incident_directions():
    """The 26 unit vectors towards the faces, edges and corners of a cube."""
    d = np.array([v for v in itertools.product((-1, 0, 1), repeat=3) if any(v)], dtype=float)
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def transverse_polarization(d):
    """A fixed rule for a unit polarization orthogonal to ``d``."""
    e = np.array([0.0, 0.0, 1.0]) if abs(d[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    p = np.cross(e, d)
    return p / np.linalg.norm(p)


def _log_fit(x, y):
    """Least-squares slope of ``log y`` on ``log x`` with its standard error (NaN if ``y <= 0``)."""
    if np.any(np.asarray(y) <= 0):
        return float("nan"), float("nan")
    lx, ly = np.log(x), np.log(y)
    A = np.column_stack([lx, np.ones_like(lx)])
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - A @ coef
    dof = len(x) - 2
    if dof > 0:
        s2 = float(resid @ resid) / dof
        se = float(np.sqrt(s2 / np.sum((lx - lx.mean()) ** 2)))
    else:
        se = 0.0
    return float(coef[0]), se


class _Forward:
    """Forward solves sharing kernel tables across lattices of equal ``(k0, h, dims)``."""

    def __init__(self, h, margin=1, method="krylov", tol=1e-8, maxit=500, cache_dir=None):
        self.h, self.margin, self.method = h, margin, method
        self.tol, self.maxit, self.cache_dir = tol, maxit, cache_dir
        self._tables = {}
        self.records = []

    def operator(self, shape, m):
        dom = rasterize(shape, self.h, self.margin)
        key = (m.k0, dom.h, dom.dims)
        if key not in self._tables:
            self._tables[key] = KernelTable.cached(m.k0, dom.h, dom.dims, self.cache_dir)
        return LSOperator(m, dom, self._tables[key])

    def run(self, op, inc):
        rep = solve(op, inc.on(op.domain, op.medium), self.method, tol=self.tol, maxit=self.maxit)
        self.records.append(rep.to_record())
        return rep


@dataclass
class DiscriminationReport:
    shape1: dict
    shape2: dict
    incident_directions: list
    polarizations: list
    per_direction: list
    delta: float
    threshold: float
    different: bool
    runs: list = field(default_factory=list, repr=False)

    def to_json(self):
        return json.dumps(asdict(self))


def far_field_set(shape, m, incidents, fwd: _Forward, dirs, cache=None):
    """Far-field tables for each incident ``(d, p)``; memoised in ``cache`` when given."""
    out = []
    op = None
    for d, p in incidents:
        key = (shape, m, fwd.h, tuple(d), tuple(p))
        if cache is not None and key in cache:
            out.append(cache[key])
            continue
        op = op or fwd.operator(shape, m)
        rep = fwd.run(op, IncidentSpec("plane", tuple(d), tuple(p)))
        ff = far_field(op, rep.total, dirs)
        if cache is not None:
            cache[key] = ff
        out.append(ff)
    return out


def cross_validation_error(m: MediumSpec, h, method="krylov", tol=1e-8, dirs=None):
    """Far-field error of the forward solver against Mie (unit sphere, body at rest)."""
    rest = m.with_velocity((0.0, 0.0, 0.0))
    fwd = _Forward(h, method=method, tol=tol)
    dirs = fibonacci_sphere() if dirs is None else dirs
    shape = ShapeSpec.sphere(1.0)
    ff = far_field_set(shape, rest, [((0.0, 0.0, 1.0), (1.0, 0.0, 0.0))], fwd, dirs)[0]
    ref = mie_far_field(1.0, rest, (0.0, 0.0, 1.0), (1.0, 0.0, 0.0), dirs)
    return relative_l2_error(ff, ref)


def discriminate(shape1: ShapeSpec, shape2: ShapeSpec, m1: MediumSpec, m2: MediumSpec,
                 incident_dirs=None, h=1.0 / 15.0, threshold=None, dirs=None,
                 method="krylov", tol=1e-8, cache=None, require_regime=True, cpw=1.0):
    """Far-field mismatch ``delta`` between two bodies over an incident set.

    ``delta`` is the largest relative L2 difference of ``E_inf`` over the
    direction sample, normalised by the larger of the two patterns. The
    default threshold is ten times :func:`cross_validation_error`.
    """
    if require_regime:
        for m in (m1, m2):
            rep = check_regime(m, cpw)
            if not rep.passed:
                from .errors import RegimeViolation
                raise RegimeViolation(f"medium outside the admissible regime: {rep.to_record()}")
    inc_d = default_incident_directions() if incident_dirs is None else np.atleast_2d(incident_dirs)
    incidents = [(tuple(d), tuple(transverse_polarization(d))) for d in inc_d]
    dirs = fibonacci_sphere() if dirs is None else dirs
    fwd = _Forward(h, method=method, tol=tol)
    f1 = far_field_set(shape1, m1, incidents, fwd, dirs, cache)
    f2 = far_field_set(shape2, m2, incidents, fwd, dirs, cache)
    per = []
    for a, b in zip(f1, f2):
        den = max(np.linalg.norm(a.E_inf), np.linalg.norm(b.E_inf))
        per.append(float(np.linalg.norm(a.E_inf - b.E_inf) / den) if den > 0 else 0.0)
    delta = max(per)
    if threshold is None:
        threshold = 10.0 * cross_validation_error(m1, h, method, tol, dirs)
    return DiscriminationReport(shape1.to_record(), shape2.to_record(),
                                [list(d) for d, _ in incidents], [list(p) for _, p in incidents],
                                per, float(delta), float(threshold), bool(delta > threshold),
                                fwd.records)


@dataclass
class ProbeExperiment:
    shape: dict
    distances: list
    requested: list
    polarization: list
    magnitudes: list
    exponent: float
    exponent_stderr: float
    image_exponent: float
    monotone: bool
    resolution_limited: bool
    h: float
    runs: list = field(default_factory=list, repr=False)

    def to_json(self):
        return json.dumps(asdict(self))


def probe_blowup(shape: ShapeSpec, m: MediumSpec, ray: ProbeSpec | None = None,
                 p=(1.0, 0.0, 0.0), h=None, dims=None, method="krylov", tol=1e-8):
    """Scattered field at a point dipole sliding towards the boundary.

    For each distance ``d_i`` the incident field is a dipole at
    ``z_i = anchor + d_i * direction``; the scattered field is evaluated at
    ``z_i`` itself. Distances at or below the grid floor ``2 h`` are dropped
    and the fit is flagged as resolution limited.

    Raises
    ------
    TooCloseToSupport
        If fewer than two distances remain above the floor.
    """
    ray = ray or ProbeSpec("ray", d0=0.5, levels=3)
    if h is None:
        h = 2.0 * min(shape.size) / (46 if dims is None else dims - 2)
    fwd = _Forward(h, method=method, tol=tol)
    op = fwd.operator(shape, m)
    requested = [float(d) for d in ray.distances()]
    kept = [d for d in requested if d > 2.0 * op.domain.h]
    if len(kept) < 2:
        raise TooCloseToSupport(f"fewer than two probe distances above 2h = {2 * op.domain.h:g}")
    u = np.asarray(ray.direction, dtype=float)
    u = u / np.linalg.norm(u)
    mags = []
    for d in kept:
        z = np.asarray(ray.anchor, dtype=float) + d * u
        rep = fwd.run(op, IncidentSpec("point-dipole", p=tuple(p), z=tuple(z)))
        E, H = scattered_at(op, rep.total, z)
        mags.append(float(np.sqrt(np.sum(np.abs(E) ** 2) + m.mu0 / m.eps0 * np.sum(np.abs(H) ** 2))))
    slope, se = _log_fit(np.array(kept), np.array(mags))
    img, _ = image_blowup_exponent(kept, p, m)
    return ProbeExperiment(shape.to_record(), kept, requested, list(map(float, p)), mags,
                           slope, se, img, bool(np.all(np.diff(mags) > 0)),
                           len(kept) < len(requested), float(op.domain.h), fwd.records)
