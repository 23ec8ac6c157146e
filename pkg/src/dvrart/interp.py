"""Continuous reconstruction of the scalar field from voxels.

Three modes: nearest, trilinear and prefiltered tricubic B-spline. The
scalar kernels (``_nearest``, ``_trilinear``, ``_tricubic``) are numba
functions that take a ``(nz, ny, nx)`` grid and a voxel-space position;
the renderer calls them directly from its own compiled loop.

Positions outside the grid are clamped to ``[0, n-1]`` per axis before
reconstruction, so every mode returns edge values off-grid.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from enum import Enum

import numba
import numpy as np
from numba import njit, prange

from .errors import DimensionError, ParameterError
from .volcore import ScalarVolume, VolumeMeta, read_meta, read_raw_array, write_raw_array

POLE = math.sqrt(3.0) - 2.0
GAIN = (1.0 - POLE) * (1.0 - 1.0 / POLE)  # == 6
TOLERANCE = 1e-8
HORIZON = int(math.ceil(math.log(TOLERANCE) / math.log(abs(POLE))))


class InterpolationMode(str, Enum):
    NEAREST = "nearest"
    TRILINEAR = "trilinear"
    TRICUBIC_BSPLINE = "tricubic_bspline"

    @property
    def code(self) -> int:
        return _MODE_CODES[self]

    @classmethod
    def parse(cls, value) -> "InterpolationMode":
        if isinstance(value, cls):
            return value
        aliases = {"tricubic": cls.TRICUBIC_BSPLINE, "linear": cls.TRILINEAR}
        try:
            return aliases.get(value) or cls(value)
        except ValueError:
            raise ParameterError(f"unknown interpolation mode {value!r}") from None


_MODE_CODES = {
    InterpolationMode.NEAREST: 0,
    InterpolationMode.TRILINEAR: 1,
    InterpolationMode.TRICUBIC_BSPLINE: 2,
}


@dataclass(frozen=True)
class CoefficientVolume:
    """B-spline coefficients of a source volume; values are unbounded."""

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float64).reshape(-1)
        nx, ny, nz = self.dims
        if data.size != nx * ny * nz:
            raise DimensionError("coefficient data length does not match dims")
        data.setflags(write=False)
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))
        object.__setattr__(self, "data", data)

    @property
    def grid(self) -> np.ndarray:
        nx, ny, nz = self.dims
        return self.data.reshape(nz, ny, nx)


def save_coefficients(coeffs: CoefficientVolume, path, extra: dict | None = None):
    meta = VolumeMeta(coeffs.dims, coeffs.spacing, "f32le", 0.0, 1.0, kind="coefficients")
    write_raw_array(coeffs.data, path, meta, extra)


def load_coefficients(path) -> CoefficientVolume:
    meta = read_meta(path)
    if meta.kind != "coefficients":
        raise ParameterError(f"{path}: metadata kind is {meta.kind!r}, not 'coefficients'")
    return CoefficientVolume(meta.dims, meta.spacing, read_raw_array(path, meta))


# -- scalar kernels -------------------------------------------------------------


@njit(cache=True, inline="always")
def _clampf(x, n):
    if x < 0.0:
        return 0.0
    hi = n - 1.0
    if x > hi:
        return hi
    return x


@njit(cache=True, inline="always")
def _mirror(i, n):
    """Whole-sample symmetric extension (reflect without repeating the edge)."""
    if n == 1:
        return 0
    period = 2 * (n - 1)
    i = abs(i) % period
    if i >= n:
        i = period - i
    return i


@njit(cache=True)
def _nearest(g, x, y, z):
    nz, ny, nx = g.shape
    i = int(math.floor(_clampf(x, nx) + 0.5))
    j = int(math.floor(_clampf(y, ny) + 0.5))
    k = int(math.floor(_clampf(z, nz) + 0.5))
    return g[min(k, nz - 1), min(j, ny - 1), min(i, nx - 1)]


@njit(cache=True)
def _trilinear(g, x, y, z):
    nz, ny, nx = g.shape
    x = _clampf(x, nx)
    y = _clampf(y, ny)
    z = _clampf(z, nz)
    i0 = int(math.floor(x))
    j0 = int(math.floor(y))
    k0 = int(math.floor(z))
    fx = x - i0
    fy = y - j0
    fz = z - k0
    i1 = min(i0 + 1, nx - 1)
    j1 = min(j0 + 1, ny - 1)
    k1 = min(k0 + 1, nz - 1)
    c00 = g[k0, j0, i0] * (1.0 - fx) + g[k0, j0, i1] * fx
    c10 = g[k0, j1, i0] * (1.0 - fx) + g[k0, j1, i1] * fx
    c01 = g[k1, j0, i0] * (1.0 - fx) + g[k1, j0, i1] * fx
    c11 = g[k1, j1, i0] * (1.0 - fx) + g[k1, j1, i1] * fx
    c0 = c00 * (1.0 - fy) + c10 * fy
    c1 = c01 * (1.0 - fy) + c11 * fy
    return c0 * (1.0 - fz) + c1 * fz


@njit(cache=True, inline="always")
def _bspline_weights(t, w):
    s = 1.0 - t
    t2 = t * t
    w[0] = s * s * s / 6.0
    w[1] = (4.0 - 6.0 * t2 + 3.0 * t2 * t) / 6.0
    w[3] = t2 * t / 6.0
    w[2] = 1.0 - w[0] - w[1] - w[3]


@njit(cache=True)
def _tricubic(c, x, y, z):
    nz, ny, nx = c.shape
    x = _clampf(x, nx)
    y = _clampf(y, ny)
    z = _clampf(z, nz)
    i0 = int(math.floor(x))
    j0 = int(math.floor(y))
    k0 = int(math.floor(z))
    wx = np.empty(4)
    wy = np.empty(4)
    wz = np.empty(4)
    _bspline_weights(x - i0, wx)
    _bspline_weights(y - j0, wy)
    _bspline_weights(z - k0, wz)
    ix = np.empty(4, np.int64)
    iy = np.empty(4, np.int64)
    iz = np.empty(4, np.int64)
    for m in range(4):
        ix[m] = _mirror(i0 - 1 + m, nx)
        iy[m] = _mirror(j0 - 1 + m, ny)
        iz[m] = _mirror(k0 - 1 + m, nz)
    total = 0.0
    for a in range(4):
        plane = 0.0
        for b in range(4):
            row = 0.0
            for m in range(4):
                row += wx[m] * c[iz[a], iy[b], ix[m]]
            plane += wy[b] * row
        total += wz[a] * plane
    return total


@njit(cache=True)
def _sample_points(g, pts, mode):
    out = np.empty(pts.shape[0])
    for n in range(pts.shape[0]):
        x, y, z = pts[n, 0], pts[n, 1], pts[n, 2]
        if mode == 0:
            out[n] = _nearest(g, x, y, z)
        elif mode == 1:
            out[n] = _trilinear(g, x, y, z)
        else:
            out[n] = _tricubic(g, x, y, z)
    return out


def _sample(grid, x, mode):
    pts = np.asarray(x, dtype=np.float64)
    single = pts.ndim == 1
    pts = np.ascontiguousarray(pts.reshape(-1, 3))
    out = _sample_points(grid, pts, mode)
    return float(out[0]) if single else out.reshape(np.shape(x)[:-1])


def sample_nearest(vol: ScalarVolume, x):
    """Value of the voxel nearest to voxel-space ``x`` (ties round up).

    ``x`` is a 3-vector or an ``(..., 3)`` array of ``(x, y, z)`` positions.
    """
    return _sample(vol.grid, x, 0)


def sample_trilinear(vol: ScalarVolume, x):
    return _sample(vol.grid, x, 1)


def sample_tricubic_bspline(coeffs: CoefficientVolume, x):
    """4x4x4 cubic B-spline sum over ``coeffs``; the result is not clamped."""
    return _sample(coeffs.grid, x, 2)


def bspline_weights(t: float) -> np.ndarray:
    """Cubic B-spline weights for the four taps around fractional offset ``t``."""
    w = np.empty(4)
    _bspline_weights(float(t), w)
    return w


# -- prefilter ------------------------------------------------------------------


@njit(cache=True)
def _filter_line(c, z, horizon):
    """In-place conversion of samples ``c`` to cubic B-spline coefficients."""
    n = c.shape[0]
    lam = (1.0 - z) * (1.0 - 1.0 / z)
    for k in range(n):
        c[k] *= lam
    # causal initialization under mirror boundaries
    if horizon < n:
        zn = z
        s = c[0]
        for k in range(1, horizon):
            s += zn * c[k]
            zn *= z
        c0 = s
    else:
        zn = z
        iz = 1.0 / z
        z2n = z ** (n - 1)
        s = c[0] + z2n * c[n - 1]
        z2n *= z2n * iz
        for k in range(1, n - 1):
            s += (zn + z2n) * c[k]
            zn *= z
            z2n *= iz
        c0 = s / (1.0 - zn * zn)
    c[0] = c0
    for k in range(1, n):
        c[k] += z * c[k - 1]
    c[n - 1] = (z / (z * z - 1.0)) * (z * c[n - 2] + c[n - 1])
    for k in range(n - 2, -1, -1):
        c[k] = z * (c[k + 1] - c[k])


@njit(cache=True)
def _prefilter_serial(a, z, horizon):
    nz, ny, nx = a.shape
    buf = np.empty(nx)
    for k in range(nz):
        for j in range(ny):
            buf[:] = a[k, j, :]
            _filter_line(buf, z, horizon)
            a[k, j, :] = buf
    buf = np.empty(ny)
    for k in range(nz):
        for i in range(nx):
            buf[:] = a[k, :, i]
            _filter_line(buf, z, horizon)
            a[k, :, i] = buf
    buf = np.empty(nz)
    for j in range(ny):
        for i in range(nx):
            buf[:] = a[:, j, i]
            _filter_line(buf, z, horizon)
            a[:, j, i] = buf


@njit(cache=True, parallel=True)
def _prefilter_parallel(a, z, horizon):
    nz, ny, nx = a.shape
    # each pass is a barrier; lines inside a pass are independent
    for m in prange(nz * ny):
        k, j = m // ny, m % ny
        buf = a[k, j, :].copy()
        _filter_line(buf, z, horizon)
        a[k, j, :] = buf
    for m in prange(nz * nx):
        k, i = m // nx, m % nx
        buf = a[k, :, i].copy()
        _filter_line(buf, z, horizon)
        a[k, :, i] = buf
    for m in prange(ny * nx):
        j, i = m // nx, m % nx
        buf = a[:, j, i].copy()
        _filter_line(buf, z, horizon)
        a[:, j, i] = buf


def prefilter_bspline_coefficients(
    vol: ScalarVolume, parallel: bool = False, threads: int | None = None
) -> CoefficientVolume:
    """Cubic B-spline coefficients that interpolate ``vol`` at voxel centers.

    Separable recursive causal/anticausal filtering along x, then y, then z.
    ``parallel`` splits each pass over independent lines.
    """
    if min(vol.dims) < 2:
        raise ParameterError(f"prefilter needs every axis length >= 2, got {vol.dims}")
    a = np.array(vol.grid, dtype=np.float64, order="C")
    if parallel:
        prev = numba.get_num_threads()
        if threads:
            numba.set_num_threads(min(int(threads), numba.config.NUMBA_NUM_THREADS))
        try:
            _prefilter_parallel(a, POLE, HORIZON)
        finally:
            numba.set_num_threads(prev)
    else:
        _prefilter_serial(a, POLE, HORIZON)
    return CoefficientVolume(vol.dims, vol.spacing, a.reshape(-1))


def execution_units() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count() or 1
