"""Helmholtz kernels, the volume potential and the dyadic Maxwell Green operator.

Two sign conventions coexist here:

* :func:`phi_k` and :func:`newtonian_apply` use ``Phi_k = -e^{ikr}/(4 pi r)``,
  the fundamental solution of ``Delta + k^2``.
* The Maxwell operator is built on the outgoing kernel ``g = e^{ikr}/(4 pi r) = -Phi_k``,
  which is the sign that makes the Lippmann-Schwinger map add the scattered
  field with a ``+``.

The dyadic operator on a six-component density ``j = (j_E, j_H)`` is::

    G j = (1/omega) [ (k0^2 + grad div) A_E + i omega mu0 curl A_H,
                      -i omega eps0 curl A_E + (k0^2 + grad div) A_H ],   A = g * j
"""
from __future__ import annotations

import hashlib
import io
import json
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from .errors import DimensionMismatch, SingularPoint

TABLE_MAGIC = b"MVIEKT"
TABLE_VERSION = 1
_PAIRS = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]
_PAIR_INDEX = {p: i for i, p in enumerate(_PAIRS)} | {(b, a): i for i, (a, b) in enumerate(_PAIRS)}
_LEVI = [(0, 1, 2, 1.0), (1, 2, 0, 1.0), (2, 0, 1, 1.0), (0, 2, 1, -1.0), (2, 1, 0, -1.0), (1, 0, 2, -1.0)]


def phi_k(k, x):
    """``Phi_k(x) = -exp(ik|x|) / (4 pi |x|)``."""
    r = float(np.linalg.norm(x))
    if r == 0.0:
        raise SingularPoint("Phi_k is singular at the origin")
    return -np.exp(1j * k * r) / (4.0 * np.pi * r)


def equivalent_radius(h):
    """Radius of the ball with the volume of an ``h``-cube."""
    return h * (3.0 / (4.0 * np.pi)) ** (1.0 / 3.0)


def self_term(k0, h):
    """Integral of ``Phi_k0`` over the volume-equivalent ball of one voxel.

    Equals ``(1 - e^{ika}(1 - ika)) / k0^2``, tending to ``-a^2/2`` as ``k0 -> 0``.
    """
    a = equivalent_radius(h)
    ka = k0 * a
    if abs(ka) < 1e-4:
        # series avoids cancellation: -a^2/2 - i k a^3/3 + k^2 a^4 / 8
        return complex(-(a**2) / 2 - 1j * k0 * a**3 / 3 + k0**2 * a**4 / 8)
    return complex((1.0 - np.exp(1j * ka) * (1.0 - 1j * ka)) / k0**2)


def dyadic_self_term(k0, h):
    """Principal-value integral of ``(k0^2 + grad grad) g`` over the equivalent ball (times I)."""
    # k0^2 * int g = e^{ika}(1 - ika) - 1, which is -k0^2 self_term
    return complex((2.0 / 3.0) * (-(k0**2) * self_term(k0, h)) - 1.0 / 3.0)


def kernel_values(k, R):
    """Outgoing kernel pieces at separations ``R`` of shape ``(..., 3)``.

    Returns ``g``, the dyadic ``N = (k^2 + grad grad) g`` as ``(..., 3, 3)`` and
    ``grad g`` as ``(..., 3)``. Zero separations must be excluded by the caller.
    """
    R = np.asarray(R, dtype=float)
    r = np.linalg.norm(R, axis=-1)
    g = np.exp(1j * k * r) / (4.0 * np.pi * r)
    rh = R / r[..., None]
    a = g * (k**2 + 1j * k / r - 1.0 / r**2)
    b = g * (-(k**2) - 3j * k / r + 3.0 / r**2)
    N = a[..., None, None] * np.eye(3) + b[..., None, None] * rh[..., :, None] * rh[..., None, :]
    grad = (g * (1j * k - 1.0 / r))[..., None] * rh
    return g, N, grad


def _offset_grid(dims, pad, h):
    axes = []
    for n, p in zip(dims, pad):
        idx = np.arange(p)
        axes.append(np.where(idx < n, idx, idx - p) * h)
    X = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    return X


def padded_dims(dims):
    """Smallest FFT-friendly sizes ``>= 2 n - 1`` per axis."""
    return tuple(int(sfft.next_fast_len(2 * n - 1)) for n in dims)


@dataclass
class KernelTable:
    """Spectral samples of the lattice kernels for fixed ``(k0, h, dims)``.

    ``phi_hat`` is the transform of ``Phi_k0`` (sampled at offsets, scaled by
    ``h^3``, self cell replaced by :func:`self_term`). ``g_hat`` is the same
    for the outgoing kernel. ``N_hat`` and ``D_hat`` hold the six distinct
    entries of the dyadic kernel and the three entries of ``grad g``.
    """

    k0: float
    h: float
    dims: tuple
    pad: tuple = None
    workers: int = 1
    self_value: complex = field(init=False)
    g_hat: np.ndarray = field(init=False, repr=False)
    N_hat: np.ndarray = field(init=False, repr=False)
    D_hat: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.dims = tuple(int(n) for n in self.dims)
        self.pad = padded_dims(self.dims) if self.pad is None else tuple(self.pad)
        if any(p < 2 * n - 1 for p, n in zip(self.pad, self.dims)):
            raise DimensionMismatch("padded dims must be >= 2 dims - 1")
        self.self_value = self_term(self.k0, self.h)
        self._build()

    def _build(self):
        k, h, w = self.k0, self.h, self.workers
        X = _offset_grid(self.dims, self.pad, h)
        zero = (0, 0, 0)
        r = np.sqrt(np.sum(X**2, axis=-1))
        r[zero] = 1.0
        for c in range(3):
            X[..., c] /= r
        g = np.exp(1j * k * r) / (4.0 * np.pi * r)
        a = g * (k**2 + 1j * k / r - 1.0 / r**2) * h**3
        b = g * (-(k**2) - 3j * k / r + 3.0 / r**2) * h**3
        dg = g * (1j * k - 1.0 / r) * h**3
        g *= h**3
        g[zero] = -self.self_value
        self.g_hat = sfft.fftn(g, workers=w)
        del g
        st = dyadic_self_term(k, h)
        self.N_hat = np.empty((6,) + self.pad, dtype=complex)
        for i, (p, q) in enumerate(_PAIRS):
            K = b * X[..., p] * X[..., q]
            if p == q:
                K += a
            K[zero] = st if p == q else 0.0
            self.N_hat[i] = sfft.fftn(K, workers=w)
        self.D_hat = np.empty((3,) + self.pad, dtype=complex)
        for p in range(3):
            K = dg * X[..., p]
            K[zero] = 0.0
            self.D_hat[p] = sfft.fftn(K, workers=w)

    @property
    def phi_hat(self):
        return -self.g_hat

    def cache_key(self):
        return hashlib.sha256(json.dumps([TABLE_VERSION, repr(float(self.k0)), repr(float(self.h)),
                                          list(self.dims), list(self.pad)]).encode()).hexdigest()[:16]

    def save(self, path):
        """Write a versioned binary file: magic, version, JSON header, raw arrays."""
        hdr = json.dumps({"k0": self.k0, "h": self.h, "dims": list(self.dims),
                          "pad": list(self.pad), "self_value": [self.self_value.real,
                                                               self.self_value.imag]}).encode()
        with open(path, "wb") as fh:
            fh.write(TABLE_MAGIC)
            fh.write(np.array([TABLE_VERSION, len(hdr)], dtype="<u4").tobytes())
            fh.write(hdr)
            for arr in (self.g_hat, self.N_hat, self.D_hat):
                buf = io.BytesIO()
                np.save(buf, arr, allow_pickle=False)
                fh.write(buf.getvalue())

    @classmethod
    def load(cls, path, workers=1):
        with open(path, "rb") as fh:
            if fh.read(len(TABLE_MAGIC)) != TABLE_MAGIC:
                raise ValueError("not a kernel table file")
            version, n = np.frombuffer(fh.read(8), dtype="<u4")
            if version != TABLE_VERSION:
                raise ValueError(f"kernel table version {version} != {TABLE_VERSION}")
            hdr = json.loads(fh.read(int(n)))
            arrays = [np.load(fh, allow_pickle=False) for _ in range(3)]
        obj = cls.__new__(cls)
        obj.k0, obj.h = hdr["k0"], hdr["h"]
        obj.dims, obj.pad = tuple(hdr["dims"]), tuple(hdr["pad"])
        obj.workers = workers
        obj.self_value = complex(*hdr["self_value"])
        obj.g_hat, obj.N_hat, obj.D_hat = arrays
        return obj

    @classmethod
    def cached(cls, k0, h, dims, cache_dir=None, workers=1):
        """Load from ``cache_dir`` when a matching table exists, else build and store."""
        table = None
        if cache_dir is not None:
            probe = cls.__new__(cls)
            probe.k0, probe.h, probe.dims = k0, h, tuple(dims)
            probe.pad = padded_dims(probe.dims)
            path = os.path.join(cache_dir, f"kernel-{probe.cache_key()}.bin")
            if os.path.exists(path):
                table = cls.load(path, workers)
        if table is None:
            table = cls(k0, h, dims, workers=workers)
            if cache_dir is not None:
                os.makedirs(cache_dir, exist_ok=True)
                table.save(os.path.join(cache_dir, f"kernel-{table.cache_key()}.bin"))
        return table

    # transforms ---------------------------------------------------------
    def forward(self, f):
        return sfft.fftn(f, s=self.pad, axes=(0, 1, 2), workers=self.workers)

    def backward(self, F):
        out = sfft.ifftn(F, axes=(0, 1, 2), workers=self.workers)
        n1, n2, n3 = self.dims
        return out[:n1, :n2, :n3]

    def wavenumbers(self):
        return [2 * np.pi * sfft.fftfreq(p, d=self.h) for p in self.pad]


def _check_dims(table, f, ncomp=None):
    f = np.asarray(f)
    if tuple(f.shape[:3]) != table.dims or (ncomp is not None and f.shape[3:] != (ncomp,)):
        raise DimensionMismatch(f"field of shape {f.shape} does not match dims {table.dims}")
    return f


def newtonian_apply(table: KernelTable, f, chi=None, full=False):
    """Lattice volume potential ``L_k f(x_i) = sum_j Phi_k(x_i - x_j) f_j chi_j h^3``.

    ``f`` may carry trailing component axes. ``full=True`` returns the result
    on the whole padded grid.
    """
    f = np.asarray(f)
    if tuple(f.shape[:3]) != table.dims:
        raise DimensionMismatch(f"field of shape {f.shape} does not match dims {table.dims}")
    if chi is not None:
        f = f * np.asarray(chi).reshape(table.dims + (1,) * (f.ndim - 3))
    kern = table.phi_hat.reshape(table.pad + (1,) * (f.ndim - 3))
    prod = table.forward(f) * kern
    if full:
        return sfft.ifftn(prod, axes=(0, 1, 2), workers=table.workers)
    return table.backward(prod)


def _curl_hat(D_hat, A_hat):
    # (curl)_a = eps_abc D_b * A_c
    out = [0, 0, 0]
    for a, b, c, s in _LEVI:
        out[a] = out[a] + s * D_hat[b] * A_hat[c]
    return out


def _dyadic_hat(N_hat, A_hat):
    return [sum(N_hat[_PAIR_INDEX[a, b]] * A_hat[b] for b in range(3)) for a in range(3)]


def dyadic_green_apply(table: KernelTable, m, j, derivatives="kernel"):
    """Apply the dyadic Green operator to a six-component density.

    Parameters
    ----------
    table : KernelTable
    m : MediumSpec
        Supplies ``omega``, ``eps0`` and ``mu0``; the kernel wavenumber is
        ``table.k0``.
    j : ndarray, shape ``dims + (6,)``
        Density, already masked to the body.
    derivatives : {"kernel", "spectral"}
        ``"kernel"`` convolves with analytically differentiated kernels.
        ``"spectral"`` forms ``g * j`` and applies ``grad`` as ``i xi``
        multipliers on the padded transform.

    Returns
    -------
    ndarray, shape ``dims + (6,)``
    """
    j = _check_dims(table, j, 6)
    w, k2 = m.omega, table.k0**2
    J_hat = table.forward(j)
    JE = [J_hat[..., a] for a in range(3)]
    JH = [J_hat[..., 3 + a] for a in range(3)]
    if derivatives == "kernel":
        NE, NH = _dyadic_hat(table.N_hat, JE), _dyadic_hat(table.N_hat, JH)
        cE, cH = _curl_hat(table.D_hat, JE), _curl_hat(table.D_hat, JH)
    elif derivatives == "spectral":
        xi = np.meshgrid(*table.wavenumbers(), indexing="ij", sparse=True)
        ixi = [1j * x for x in xi]
        AE = [table.g_hat * f for f in JE]
        AH = [table.g_hat * f for f in JH]
        divE = sum(ixi[b] * AE[b] for b in range(3))
        divH = sum(ixi[b] * AH[b] for b in range(3))
        NE = [k2 * AE[a] + ixi[a] * divE for a in range(3)]
        NH = [k2 * AH[a] + ixi[a] * divH for a in range(3)]
        cE, cH = _curl_hat(ixi, AE), _curl_hat(ixi, AH)
    else:
        raise ValueError(f"unknown derivative mode {derivatives!r}")
    out_hat = np.stack(
        [NE[a] + 1j * w * m.mu0 * cH[a] for a in range(3)]
        + [-1j * w * m.eps0 * cE[a] + NH[a] for a in range(3)], axis=-1)
    return table.backward(out_hat) / w


# dense references ----------------------------------------------------------

def _centers(dims, h):
    return np.stack(np.meshgrid(*[h * np.arange(n) for n in dims], indexing="ij"), -1).reshape(-1, 3)


def newtonian_dense(k, h, dims, f, chi=None):
    """Brute-force double sum with the same self-cell value as the lattice path."""
    shape = np.shape(f)
    f = np.asarray(f).reshape(int(np.prod(dims)), -1)
    if chi is not None:
        f = f * np.asarray(chi).reshape(-1, 1)
    X = _centers(dims, h)
    out = np.zeros(f.shape, dtype=complex)
    s = self_term(k, h)
    for i, x in enumerate(X):
        acc = s * f[i]
        for jdx, y in enumerate(X):
            if jdx != i:
                acc = acc + phi_k(k, x - y) * h**3 * f[jdx]
        out[i] = acc
    return out.reshape(shape)


def dyadic_dense_matrix(k0, h, dims, m):
    """Dense ``6N x 6N`` matrix of the lattice dyadic operator (``derivatives="kernel"``).

    Unknowns are ordered voxel-major, component-minor, matching
    ``field.reshape(-1)``.
    """
    X = _centers(dims, h)
    n = len(X)
    R = X[:, None, :] - X[None, :, :]
    diag = np.arange(n)
    R[diag, diag] = (1.0, 0.0, 0.0)
    _, N, grad = kernel_values(k0, R)
    N = N * h**3
    grad = grad * h**3
    N[diag, diag] = dyadic_self_term(k0, h) * np.eye(3)
    grad[diag, diag] = 0.0
    curl = np.zeros((n, n, 3, 3), dtype=complex)
    for a, b, c, s in _LEVI:
        curl[:, :, a, c] += s * grad[:, :, b]
    w = m.omega
    blocks = np.zeros((n, n, 6, 6), dtype=complex)
    blocks[:, :, :3, :3] = N
    blocks[:, :, 3:, 3:] = N
    blocks[:, :, :3, 3:] = 1j * w * m.mu0 * curl
    blocks[:, :, 3:, :3] = -1j * w * m.eps0 * curl
    return blocks.transpose(0, 2, 1, 3).reshape(6 * n, 6 * n) / w


def _gauss_cube(h, q, split=1):
    """Tensor Gauss-Legendre nodes and weights on ``[-h/2, h/2]^3`` with ``split^3`` subcells."""
    x, wts = np.polynomial.legendre.leggauss(q)
    sub = h / split
    xs = np.concatenate([(-h / 2 + sub * (i + 0.5)) + x * sub / 2 for i in range(split)])
    ws = np.tile(wts * sub / 2, split)
    P = np.stack(np.meshgrid(xs, xs, xs, indexing="ij"), -1).reshape(-1, 3)
    W = np.einsum("i,j,k->ijk", ws, ws, ws).ravel()
    return P, W


def _cube_integral_g(k, h, q=12):
    """``int_cube g`` by pyramid (Duffy) decomposition; regular integrands only."""
    x, wts = np.polynomial.legendre.leggauss(q)
    t = 0.5 * (x + 1.0)
    wt = 0.5 * wts
    u = x * h / 2
    wu = wts * h / 2
    a = h / 2
    T, U, V = np.meshgrid(t, u, u, indexing="ij")
    W = np.einsum("i,j,k->ijk", wt, wu, wu)
    rho = np.sqrt(U**2 + V**2 + a**2)
    r = T * rho
    integrand = T**2 * a * np.exp(1j * k * r) / (4 * np.pi * r)
    return complex(6.0 * np.sum(W * integrand))


def quadrature_offset_kernels(k0, h, max_offset, near=1, q_near=6, q_far=4):
    """Cell-integrated dyadic and gradient kernels per lattice offset.

    ``int_cell (k0^2 + grad grad) g(o h - y) dy`` and ``int_cell grad g``,
    Gauss-integrated (subdivided for neighbours). The self cell uses the cube
    principal value ``(2/3) k0^2 int_cube g - 1/3``.
    """
    Pn, Wn = _gauss_cube(h, q_near, split=2)
    Pf, Wf = _gauss_cube(h, q_far)
    rng = range(-max_offset, max_offset + 1)
    NK, DK = {}, {}
    for o in ((i, j, l) for i in rng for j in rng for l in rng):
        if o == (0, 0, 0):
            NK[o] = ((2.0 / 3.0) * k0**2 * _cube_integral_g(k0, h) - 1.0 / 3.0) * np.eye(3)
            DK[o] = np.zeros(3, dtype=complex)
            continue
        P, W = (Pn, Wn) if max(map(abs, o)) <= near else (Pf, Wf)
        _, N, grad = kernel_values(k0, np.array(o) * h - P)
        NK[o] = np.einsum("q,qab->ab", W, N)
        DK[o] = np.einsum("q,qa->a", W, grad)
    return NK, DK


def dyadic_quadrature_apply(k0, h, dims, m, j):
    """Independent O(N^2) reference: cell-integrated analytic-derivative quadrature."""
    dims = tuple(dims)
    j = np.asarray(j).reshape(-1, 6)
    idx = np.stack(np.meshgrid(*[np.arange(n) for n in dims], indexing="ij"), -1).reshape(-1, 3)
    NK, DK = quadrature_offset_kernels(k0, h, max(dims) - 1)
    w = m.omega
    out = np.zeros_like(j, dtype=complex)
    for i, xi in enumerate(idx):
        for jj, yj in enumerate(idx):
            o = tuple(xi - yj)
            N, D = NK[o], DK[o]
            jE, jH = j[jj, :3], j[jj, 3:]
            out[i, :3] += N @ jE + 1j * w * m.mu0 * np.cross(D, jH)
            out[i, 3:] += -1j * w * m.eps0 * np.cross(D, jE) + N @ jH
    return (out / w).reshape(dims + (6,))


def hessian_operator_norm(table: KernelTable, a=0, b=0, iters=30, seed=0, derivatives="kernel"):
    """Power-iteration estimate of the lattice norm of ``f -> d_a d_b L_k0 f``."""
    rng = np.random.default_rng(seed)
    k2 = table.k0**2

    def apply(f):
        Fh = table.forward(f)
        if derivatives == "kernel":
            Nab = table.N_hat[_PAIR_INDEX[a, b]]
            # N = (k^2 delta + grad grad) g, while Phi = -g
            hess = -(Nab - (k2 * table.g_hat if a == b else 0.0))
        else:
            xi = np.meshgrid(*table.wavenumbers(), indexing="ij", sparse=True)
            hess = -xi[a] * xi[b] * table.phi_hat
        return table.backward(hess * Fh)

    def apply_adj(f):
        # the kernel is even, so the lattice matrix is complex symmetric
        return np.conj(apply(np.conj(f)))

    x = rng.normal(size=table.dims) + 1j * rng.normal(size=table.dims)
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(iters):
        y = apply_adj(apply(x))
        est = np.sqrt(np.linalg.norm(y))
        x = y / np.linalg.norm(y)
    return float(est)
