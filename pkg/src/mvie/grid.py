"""Voxelised geometry on a uniform cubic lattice."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateShape, ProbeInsideDomain

SHAPE_KINDS = ("sphere", "ellipsoid", "box", "two-spheres")
HEADER_VERSION = 1


@dataclass(frozen=True)
class ShapeSpec:
    """Analytic body description.

    Parameters
    ----------
    kind : {"sphere", "ellipsoid", "box", "two-spheres"}
    center : 3-vector, or a pair of 3-vectors for ``two-spheres``
    size : radius (sphere), three semi-axes (ellipsoid), three half-widths
        (box) or a pair of radii (two-spheres)
    """

    kind: str
    center: tuple = (0.0, 0.0, 0.0)
    size: tuple = (1.0,)

    def __post_init__(self):
        if self.kind not in SHAPE_KINDS:
            raise ValueError(f"unknown shape kind {self.kind!r}")
        size = tuple(float(s) for s in np.atleast_1d(self.size))
        center = np.asarray(self.center, dtype=float)
        if self.kind == "two-spheres":
            center = center.reshape(2, 3)
            if len(size) != 2:
                raise ValueError("two-spheres needs two radii")
            gap = np.linalg.norm(center[0] - center[1])
            if gap <= size[0] + size[1]:
                raise ValueError("two-spheres components must be disjoint")
            center = tuple(map(tuple, center))
        else:
            center = tuple(center.reshape(3))
            want = 1 if self.kind == "sphere" else 3
            if len(size) == 1 and want == 3:
                size = size * 3
            if len(size) != want:
                raise ValueError(f"{self.kind} needs {want} size parameter(s)")
        if min(size) <= 0:
            raise ValueError("all radii and half-widths must be positive")
        object.__setattr__(self, "size", size)
        object.__setattr__(self, "center", center)

    @classmethod
    def sphere(cls, radius=1.0, center=(0.0, 0.0, 0.0)):
        return cls("sphere", center, (radius,))

    def _centers(self):
        if self.kind == "two-spheres":
            return [np.array(c) for c in self.center]
        return [np.array(self.center)]

    def contains(self, pts, strict=False):
        """Indicator of the closed body (open body if ``strict``) at points ``(..., 3)``."""
        pts = np.asarray(pts, dtype=float)
        le = np.less if strict else np.less_equal
        if self.kind == "sphere":
            return le(np.sum((pts - self.center) ** 2, axis=-1), self.size[0] ** 2)
        if self.kind == "ellipsoid":
            return le(np.sum(((pts - self.center) / self.size) ** 2, axis=-1), 1.0)
        if self.kind == "box":
            return np.all(le(np.abs(pts - self.center), self.size), axis=-1)
        c1, c2 = self._centers()
        return (le(np.sum((pts - c1) ** 2, axis=-1), self.size[0] ** 2)
                | le(np.sum((pts - c2) ** 2, axis=-1), self.size[1] ** 2))

    def bounds(self):
        """Axis-aligned bounding box ``(lo, hi)``."""
        if self.kind == "two-spheres":
            c = np.array(self.center)
            r = np.array(self.size)[:, None]
            return (c - r).min(axis=0), (c + r).max(axis=0)
        half = np.array(self.size * 3 if self.kind == "sphere" else self.size)
        c = np.array(self.center)
        return c - half, c + half

    def volume(self):
        s = self.size
        if self.kind == "sphere":
            return 4.0 / 3.0 * np.pi * s[0] ** 3
        if self.kind == "ellipsoid":
            return 4.0 / 3.0 * np.pi * s[0] * s[1] * s[2]
        if self.kind == "box":
            return 8.0 * s[0] * s[1] * s[2]
        return 4.0 / 3.0 * np.pi * (s[0] ** 3 + s[1] ** 3)

    def distance(self, pts):
        """Euclidean distance to the body (zero inside); exact for spheres and boxes."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if self.kind == "sphere":
            r = np.linalg.norm(pts - self.center, axis=-1)
            return np.maximum(r - self.size[0], 0.0)
        if self.kind == "two-spheres":
            c1, c2 = self._centers()
            d1 = np.maximum(np.linalg.norm(pts - c1, axis=-1) - self.size[0], 0.0)
            d2 = np.maximum(np.linalg.norm(pts - c2, axis=-1) - self.size[1], 0.0)
            return np.minimum(d1, d2)
        if self.kind == "box":
            q = np.maximum(np.abs(pts - self.center) - self.size, 0.0)
            return np.linalg.norm(q, axis=-1)
        # ellipsoid: first-order estimate, exact on the axes
        s = np.array(self.size)
        y = (pts - self.center) / s
        rho = np.linalg.norm(y, axis=-1)
        grad = np.linalg.norm(y / s, axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            est = np.where(rho > 0, (rho - 1.0) * rho / np.maximum(grad, 1e-300), 0.0)
        return np.maximum(est, 0.0)

    def to_record(self):
        return {"kind": self.kind, "center": np.asarray(self.center).tolist(),
                "size": list(self.size)}


@dataclass(frozen=True)
class VoxelDomain:
    """Cell-centred lattice carrying the occupancy field ``chi``.

    Voxel ``(i, j, k)`` is centred at ``origin + h * (i, j, k)``.
    """

    origin: np.ndarray
    h: float
    chi: np.ndarray = field(repr=False)
    shape: ShapeSpec | None = None

    @property
    def dims(self):
        return tuple(self.chi.shape)

    @property
    def n_voxels(self):
        return int(np.prod(self.dims))

    def axes(self):
        return [self.origin[a] + self.h * np.arange(n) for a, n in enumerate(self.dims)]

    def centers(self):
        """Voxel centres, shape ``dims + (3,)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def occupied(self):
        return self.chi > 0

    def volume(self):
        return float(self.chi.sum() * self.h**3)

    def distance_to_support(self, x):
        """Distance from ``x`` to the nearest occupied voxel cube."""
        c = self.centers()[self.occupied()]
        q = np.maximum(np.abs(c - np.asarray(x, dtype=float)) - self.h / 2, 0.0)
        return float(np.sqrt((q**2).sum(axis=1)).min())

    def header(self):
        return json.dumps({"version": HEADER_VERSION, "dims": list(self.dims), "h": self.h,
                           "origin": list(map(float, self.origin)), "dtype": "float64",
                           "order": "C"})

    def export(self, stem):
        """Write ``stem.bin`` (raw little-endian chi) and ``stem.json`` (header)."""
        np.ascontiguousarray(self.chi, dtype="<f8").tofile(f"{stem}.bin")
        with open(f"{stem}.json", "w") as fh:
            fh.write(self.header() + "\n")

    @classmethod
    def load(cls, stem):
        with open(f"{stem}.json") as fh:
            hdr = json.load(fh)
        if hdr.get("version") != HEADER_VERSION:
            raise ValueError(f"unsupported voxel header version {hdr.get('version')}")
        chi = np.fromfile(f"{stem}.bin", dtype="<f8").reshape(hdr["dims"])
        return cls(np.array(hdr["origin"]), float(hdr["h"]), chi)


def rasterize(shape: ShapeSpec, h, margin=1, dims=None):
    """Sample the occupancy of ``shape`` on a lattice of spacing ``h``.

    Each voxel holds the mean of the indicator over its eight corners, a
    corner on the boundary counting one half. The
    lattice covers the bounding box plus ``margin`` empty voxels per side;
    ``dims`` may enlarge it symmetrically.

    Raises
    ------
    DegenerateShape
        If any radius or half-width is below ``2 h``.
    """
    if not h > 0:
        raise ValueError("h must be positive")
    if min(shape.size) < 2.0 * h:
        raise DegenerateShape(f"feature size {min(shape.size):g} < 2h = {2 * h:g}")
    lo, hi = shape.bounds()
    mid = (lo + hi) / 2
    need = np.ceil((hi - lo) / h - 1e-9).astype(int) + 2 * int(margin)
    if dims is not None:
        need = np.maximum(need, np.broadcast_to(np.asarray(dims, dtype=int), (3,)))
    origin = mid - h * (need - 1) / 2
    axes = [origin[a] + h * np.arange(need[a]) for a in range(3)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    chi = np.zeros(tuple(need))
    for corner in np.ndindex(2, 2, 2):
        off = (np.array(corner) - 0.5) * h
        q = pts + off
        chi += 0.5 * (shape.contains(q).astype(float) + shape.contains(q, strict=True))
    chi /= 8.0
    return VoxelDomain(origin, float(h), chi, shape)


def sphere_domain(n, radius=1.0, margin=1):
    """Unit-style sphere on an ``n``-per-axis lattice including the margin."""
    h = 2.0 * radius / (n - 2 * margin)
    return rasterize(ShapeSpec.sphere(radius), h, margin, dims=n)


@dataclass(frozen=True)
class ProbeSpec:
    """Exterior point set: ``{"kind": "sphere", R, n}`` or ``{"kind": "ray", ...}``.

    A ray starts from ``anchor`` (a boundary point) along the outward unit
    ``direction`` and places points at distances ``d0 * 2**-i``.
    """

    kind: str = "sphere"
    R: float = 10.0
    n: int = 6
    d0: float = 0.5
    levels: int = 3
    anchor: tuple = (0.0, 0.0, 1.0)
    direction: tuple = (0.0, 0.0, 1.0)

    def distances(self):
        return self.d0 * 2.0 ** -np.arange(self.levels)


def _axis_directions():
    I3 = np.eye(3)
    return np.vstack([I3, -I3])


def exterior_points(domain: VoxelDomain, spec: ProbeSpec):
    """Exterior evaluation points; see :class:`ProbeSpec`.

    Raises
    ------
    ProbeInsideDomain
        If a generated point lies inside the body or within ``h/2`` of it.
    """
    if spec.kind == "sphere":
        if spec.n == 6:
            dirs = _axis_directions()
        else:
            from .farfield import fibonacci_sphere
            dirs = fibonacci_sphere(spec.n)
        center = np.zeros(3) if domain.shape is None else np.mean(domain.shape.bounds(), axis=0)
        pts = center + spec.R * dirs
    elif spec.kind == "ray":
        u = np.asarray(spec.direction, dtype=float)
        u = u / np.linalg.norm(u)
        pts = np.asarray(spec.anchor, dtype=float) + np.outer(spec.distances(), u)
    else:
        raise ValueError(f"unknown probe kind {spec.kind!r}")
    for x in pts:
        if domain.shape is not None:
            d = float(domain.shape.distance(x)[0])
        else:
            d = domain.distance_to_support(x)
        if d < domain.h / 2:
            raise ProbeInsideDomain(f"probe point {x} lies within h/2 of the body")
    return [np.array(x) for x in pts]
