"""Ray casting: cameras, clipping, segment marching and frame rendering.

Marching happens in voxel space. A world ray ``o + t*u`` maps to voxel
coordinates ``o/s + t*u/s``; segment lengths (``1/spv``) are measured in
voxel units along that mapped ray, so anisotropic spacing is handled per
ray. Segment opacities are composited front to back with the transmittance
of the strictly preceding segments.

Jitter uses the 32-bit PCG hash (RXS-M-XS output permutation)::

    pcg(v):  s = v * 747796405 + 2891336453            (mod 2**32)
             w = ((s >> ((s >> 28) + 4)) ^ s) * 277803737  (mod 2**32)
             return (w >> 22) ^ w
    offset(px, py, seed) = pcg(px + pcg(py + pcg(seed))) / 2**32 * d
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Sequence, Union

import numba
import numpy as np
from numba import njit, prange

from .errors import ConfigurationError, ParameterError
from .interp import CoefficientVolume, InterpolationMode, _nearest, _tricubic, _trilinear
from .transfer import PreintegrationTable, TransferFunction
from .volcore import MipPyramid, ScalarVolume

numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]


class SegmentMode(str, Enum):
    SINGLE_SAMPLE = "single_sample"
    PREINTEGRATED = "preintegrated"

    @classmethod
    def parse(cls, value):
        aliases = {"single": cls.SINGLE_SAMPLE, "preint": cls.PREINTEGRATED}
        try:
            return value if isinstance(value, cls) else aliases.get(value) or cls(value)
        except ValueError:
            raise ParameterError(f"unknown segment mode {value!r}") from None


class BoundaryMode(str, Enum):
    TRUNCATE = "truncate"
    PARTIAL_SEGMENT = "partial_segment"

    @classmethod
    def parse(cls, value):
        aliases = {"partial": cls.PARTIAL_SEGMENT}
        try:
            return value if isinstance(value, cls) else aliases.get(value) or cls(value)
        except ValueError:
            raise ParameterError(f"unknown boundary mode {value!r}") from None


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=np.float64)
        n = np.linalg.norm(d)
        if n == 0:
            raise ParameterError("ray direction must be non-zero")
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=np.float64))
        object.__setattr__(self, "direction", d / n)

    def at(self, t):
        return self.origin + t * self.direction


@dataclass(frozen=True)
class ClipPlane:
    """Keeps the half-space ``dot(normal, x) <= offset`` (world units)."""

    normal: tuple[float, float, float]
    offset: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=np.float64)
        if n.shape != (3,) or not np.any(n):
            raise ParameterError("clip plane normal must be a non-zero 3-vector")
        object.__setattr__(self, "normal", tuple(float(c) for c in n))
        object.__setattr__(self, "offset", float(self.offset))


@dataclass(frozen=True)
class Camera:
    position: tuple[float, float, float]
    target: tuple[float, float, float]
    up: tuple[float, float, float] = (0.0, 1.0, 0.0)
    width: int = 256
    height: int = 256
    projection: str = "orthographic"
    fov_y: float = 30.0  # degrees, perspective only
    ortho_height: float = 1.0  # world height of the view, orthographic only

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ParameterError(f"viewport must be at least 1x1, got {self.width}x{self.height}")
        if self.projection not in ("orthographic", "perspective"):
            raise ParameterError(f"unknown projection {self.projection!r}")
        fwd = np.subtract(self.target, self.position, dtype=np.float64)
        if not np.any(fwd):
            raise ParameterError("camera position and target coincide")
        cross = np.cross(fwd, np.asarray(self.up, dtype=np.float64))
        if np.linalg.norm(cross) <= 1e-12 * np.linalg.norm(fwd) * max(np.linalg.norm(self.up), 1e-300):
            raise ParameterError("up vector is parallel to the view direction")

    def basis(self):
        fwd = np.subtract(self.target, self.position, dtype=np.float64)
        fwd /= np.linalg.norm(fwd)
        right = np.cross(fwd, np.asarray(self.up, dtype=np.float64))
        right /= np.linalg.norm(right)
        up = np.cross(right, fwd)
        return fwd, right, up

    def pixel_coords(self, px, py):
        """Normalized device coordinates of pixel centers; row 0 is the top."""
        u = (np.asarray(px, dtype=np.float64) + 0.5) / self.width * 2.0 - 1.0
        v = 1.0 - (np.asarray(py, dtype=np.float64) + 0.5) / self.height * 2.0
        return u, v

    def rays(self, px=None, py=None):
        """Origins and unit directions for pixel index arrays (default: all)."""
        if px is None:
            py, px = np.mgrid[0 : self.height, 0 : self.width]
        u, v = self.pixel_coords(px, py)
        u, v = u[..., None], v[..., None]
        fwd, right, up = self.basis()
        aspect = self.width / self.height
        pos = np.asarray(self.position, dtype=np.float64)
        if self.projection == "orthographic":
            half_h = 0.5 * self.ortho_height
            origins = pos + right * (u * half_h * aspect) + up * (v * half_h)
            dirs = np.broadcast_to(fwd, origins.shape).copy()
        else:
            th = math.tan(math.radians(self.fov_y) / 2.0)
            dirs = fwd + right * (u * th * aspect) + up * (v * th)
            dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
            origins = np.broadcast_to(pos, dirs.shape).copy()
        return origins, dirs


def orbit_camera(volume, width=256, height=256, axis="z", projection="orthographic", margin=1.05):
    """Camera looking at the volume center from the +``axis`` side, framing it."""
    lo, hi = volume.bounds
    center = 0.5 * (lo + hi)
    a = "xyz".index(axis)
    pos = center.copy()
    pos[a] = hi[a] + 2.0 * np.max(hi - lo)
    up = (0.0, 1.0, 0.0) if axis != "y" else (0.0, 0.0, 1.0)
    extent = float(np.max(np.delete(hi - lo, a))) * margin
    return Camera(tuple(pos), tuple(center), up, width, height, projection, 30.0, extent)


def generate_ray(camera: Camera, px: int, py: int) -> Ray:
    if not (0 <= px < camera.width and 0 <= py < camera.height):
        raise ParameterError(f"pixel ({px}, {py}) is outside the viewport")
    o, d = camera.rays(np.array(px), np.array(py))
    return Ray(o, d)


def intersect_many(origins, dirs, lo, hi, clip: ClipPlane | None = None):
    """Slab test for arrays of rays. Returns ``(t_in, t_out, hit)``."""
    o = np.asarray(origins, dtype=np.float64)
    d = np.asarray(dirs, dtype=np.float64)
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        inv = 1.0 / d
        t1 = (lo - o) * inv
        t2 = (hi - o) * inv
    near = np.minimum(t1, t2)
    far = np.maximum(t1, t2)
    parallel = d == 0.0
    inside = (o >= lo) & (o <= hi)
    near = np.where(parallel, np.where(inside, -np.inf, np.inf), near)
    far = np.where(parallel, np.where(inside, np.inf, -np.inf), far)
    t_in = np.maximum(near.max(axis=-1), 0.0)
    t_out = far.min(axis=-1)
    if clip is not None:
        n = np.asarray(clip.normal)
        a = o @ n - clip.offset
        b = d @ n
        with np.errstate(divide="ignore", invalid="ignore"):
            tc = -a / b
        t_out = np.where(b > 0, np.minimum(t_out, tc), t_out)
        t_in = np.where(b < 0, np.maximum(t_in, tc), t_in)
        t_out = np.where((b == 0) & (a > 0), -np.inf, t_out)
    return t_in, t_out, t_out > t_in


def ray_box_intersect(ray: Ray, box, clip_plane: ClipPlane | None = None):
    """``(t_in, t_out)`` of ``ray`` inside ``box = (lo, hi)`` and the clip half-space, or None."""
    lo, hi = (np.asarray(b, dtype=np.float64) for b in box)
    if np.any(hi <= lo):
        raise ParameterError("box must be non-degenerate")
    t_in, t_out, hit = intersect_many(ray.origin, ray.direction, lo, hi, clip_plane)
    if not hit:
        return None
    return float(t_in), float(t_out)


# -- jitter -------------------------------------------------------------------

_M32 = 0xFFFFFFFF


@njit(cache=True)
def _pcg(v):
    state = (v * 747796405 + 2891336453) & 0xFFFFFFFF
    word = (((state >> ((state >> 28) + 4)) ^ state) * 277803737) & 0xFFFFFFFF
    return ((word >> 22) ^ word) & 0xFFFFFFFF


@njit(cache=True)
def _jitter_unit(px, py, seed):
    h = _pcg((py + _pcg(seed & 0xFFFFFFFF)) & 0xFFFFFFFF)
    h = _pcg((px + h) & 0xFFFFFFFF)
    return h / 4294967296.0


def jitter_offset(px: int, py: int, seed: int, d: float) -> float:
    """Deterministic per-pixel start offset, uniform on ``[0, d)``."""
    if not d > 0:
        raise ParameterError("segment length must be > 0")
    return _jitter_unit(int(px) & _M32, int(py) & _M32, int(seed) & _M32) * d


# -- compositing ------------------------------------------------------------------


@dataclass(frozen=True)
class SegmentSample:
    """One ray segment: premultiplied color, opacity and length (voxels)."""

    color: tuple[float, float, float]
    alpha: float
    length: float = 1.0

    @classmethod
    def from_straight(cls, color, alpha, length=1.0) -> "SegmentSample":
        return cls(tuple(float(c) * alpha for c in color), float(alpha), length)


def composite_front_to_back(samples: Sequence[SegmentSample]):
    """Accumulate near-to-far segments; returns premultiplied ``(rgb, alpha)``."""
    rgb = np.zeros(3)
    trans = 1.0
    for s in samples:
        rgb += trans * np.asarray(s.color, dtype=np.float64)
        trans *= 1.0 - s.alpha
    return rgb, 1.0 - trans


# -- settings and scene -------------------------------------------------------------


@dataclass(frozen=True)
class RenderSettings:
    samples_per_voxel: float = 1.0
    segment_mode: SegmentMode = SegmentMode.SINGLE_SAMPLE
    interpolation: InterpolationMode = InterpolationMode.TRILINEAR
    jitter: bool = False
    seed: int = 0
    boundary_mode: BoundaryMode = BoundaryMode.PARTIAL_SEGMENT
    early_termination: float | None = None
    adaptive: bool = False
    subdivide_threshold: float = 0.1
    max_depth: int = 3
    clip_plane: ClipPlane | None = None
    mip_level: int = 0
    opacity_correction: bool = True
    threads: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "segment_mode", SegmentMode.parse(self.segment_mode))
        object.__setattr__(self, "interpolation", InterpolationMode.parse(self.interpolation))
        object.__setattr__(self, "boundary_mode", BoundaryMode.parse(self.boundary_mode))
        object.__setattr__(self, "samples_per_voxel", float(self.samples_per_voxel))
        if not self.samples_per_voxel > 0:
            raise ParameterError("samples_per_voxel must be > 0")
        eps = self.early_termination
        if eps is not None and not 0.0 <= eps < 1.0:
            raise ParameterError("early termination epsilon must be in [0, 1)")
        if not 0 <= self.max_depth <= 32:
            raise ParameterError("max_depth must be in [0, 32]")
        if self.mip_level < 0:
            raise ParameterError("mip_level must be >= 0")

    @property
    def segment_length(self) -> float:
        return 1.0 / self.samples_per_voxel

    def replace(self, **changes) -> "RenderSettings":
        return replace(self, **changes)

    def as_dict(self) -> dict:
        out = {}
        for k, v in asdict(self).items():
            out[k] = v.value if isinstance(v, Enum) else v
        if self.clip_plane is not None:
            out["clip_plane"] = [*self.clip_plane.normal, self.clip_plane.offset]
        out.pop("threads")
        return out

    def digest(self) -> str:
        blob = json.dumps(self.as_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


AnyVolume = Union[ScalarVolume, MipPyramid]


@dataclass(frozen=True)
class Scene:
    """Everything a render reads besides the camera and settings."""

    volume: AnyVolume
    tf: TransferFunction | None = None
    table: PreintegrationTable | None = None
    coeffs: CoefficientVolume | None = None

    def level(self, mip_level: int = 0) -> ScalarVolume:
        if isinstance(self.volume, MipPyramid):
            if mip_level >= len(self.volume):
                raise ConfigurationError(
                    f"mip level {mip_level} requested but pyramid has {len(self.volume)} levels"
                )
            return self.volume[mip_level]
        if mip_level != 0:
            raise ConfigurationError("mip_level > 0 needs a MipPyramid")
        return self.volume

    def resolve(self, settings: RenderSettings) -> "_Bound":
        vol = self.level(settings.mip_level)
        # reference lengths are in level-0 voxels; a level-L voxel spans 2**L of them
        scale = vol.spacing[0] / self.level(0).spacing[0]
        if settings.interpolation is InterpolationMode.TRICUBIC_BSPLINE:
            if self.coeffs is None:
                raise ConfigurationError("tricubic interpolation needs prefiltered coefficients")
            if tuple(self.coeffs.dims) != tuple(vol.dims):
                raise ConfigurationError(
                    f"coefficient dims {self.coeffs.dims} do not match volume dims {vol.dims}"
                )
            grid = self.coeffs.grid
        else:
            grid = vol.grid
        dummy = np.zeros((2, 4))
        if settings.segment_mode is SegmentMode.PREINTEGRATED:
            if self.table is None:
                raise ConfigurationError("pre-integrated mode needs a pre-integration table")
            tf, d_ref = dummy, 1.0
            table, d_base = self.table.rgba, self.table.d_base / scale
        else:
            if self.tf is None:
                raise ConfigurationError("single-sample mode needs a transfer function")
            tf, d_ref = self.tf.entries, self.tf.d_ref / scale
            table, d_base = np.zeros((2, 2, 4)), 1.0
        return _Bound(vol, grid, tf, d_ref, table, d_base)


@dataclass(frozen=True)
class _Bound:
    vol: ScalarVolume
    grid: np.ndarray = field(repr=False)
    tf: np.ndarray = field(repr=False)
    d_ref: float
    table: np.ndarray = field(repr=False)
    d_base: float


# -- marching kernel ---------------------------------------------------------------


@njit(cache=True, inline="always")
def _sample(g, interp, x, y, z):
    if interp == 0:
        return _nearest(g, x, y, z)
    if interp == 1:
        return _trilinear(g, x, y, z)
    return _tricubic(g, x, y, z)


@njit(cache=True, inline="always")
def _correct(alpha, d1, d2):
    if d2 == d1:
        return alpha
    if alpha >= 1.0:
        return 1.0 if d2 > 0.0 else 0.0
    return 1.0 - math.pow(1.0 - alpha, d2 / d1)


@njit(cache=True, inline="always")
def _classify(tf, v):
    L = tf.shape[0]
    if v < 0.0:
        v = 0.0
    elif v > 1.0:
        v = 1.0
    p = v * (L - 1)
    i0 = min(int(math.floor(p)), L - 2)
    f = p - i0
    r = tf[i0, 0] * (1.0 - f) + tf[i0 + 1, 0] * f
    gg = tf[i0, 1] * (1.0 - f) + tf[i0 + 1, 1] * f
    b = tf[i0, 2] * (1.0 - f) + tf[i0 + 1, 2] * f
    a = tf[i0, 3] * (1.0 - f) + tf[i0 + 1, 3] * f
    return r, gg, b, a


@njit(cache=True, inline="always")
def _lookup(table, v0, v1):
    R = table.shape[0]
    v0 = min(max(v0, 0.0), 1.0) * (R - 1)
    v1 = min(max(v1, 0.0), 1.0) * (R - 1)
    i0 = min(int(math.floor(v0)), R - 2)
    j0 = min(int(math.floor(v1)), R - 2)
    fp = v0 - i0
    fq = v1 - j0
    w00 = (1.0 - fp) * (1.0 - fq)
    w10 = fp * (1.0 - fq)
    w01 = (1.0 - fp) * fq
    w11 = fp * fq
    out = np.empty(4)
    for c in range(4):
        out[c] = (
            table[i0, j0, c] * w00
            + table[i0 + 1, j0, c] * w10
            + table[i0, j0 + 1, c] * w01
            + table[i0 + 1, j0 + 1, c] * w11
        )
    return out[0], out[1], out[2], out[3]


@njit(cache=True, inline="always")
def _segment(g, interp, seg_mode, tf, d_ref, table, d_base, ox, oy, oz, ux, uy, uz, a, b, correct):
    """Premultiplied color and opacity of the segment ``[a, b]`` (voxel lengths)."""
    length = b - a
    if seg_mode == 0:
        m = 0.5 * (a + b)
        v = _sample(g, interp, ox + m * ux, oy + m * uy, oz + m * uz)
        r, gg, bb, al = _classify(tf, v)
        if correct:
            al = _correct(al, d_ref, length)
        return r * al, gg * al, bb * al, al
    v0 = _sample(g, interp, ox + a * ux, oy + a * uy, oz + a * uz)
    v1 = _sample(g, interp, ox + b * ux, oy + b * uy, oz + b * uz)
    r, gg, bb, al = _lookup(table, v0, v1)
    if correct and length != d_base:
        ac = _correct(al, d_base, length)
        if al >= 1e-7:
            s = ac / al
            r *= s
            gg *= s
            bb *= s
        al = ac
    return r, gg, bb, al


@njit(cache=True, error_model="numpy")
def _march(
    g, interp, seg_mode, tf, d_ref, table, d_base,
    ox, oy, oz, ux, uy, uz, tau_in, tau_out,
    d, offset, partial, eps, adaptive, theta, max_depth, correct,
):  # fmt: skip
    r = 0.0
    gg = 0.0
    bb = 0.0
    trans = 1.0
    start = tau_in + offset
    span = tau_out - start
    n_full = int(math.floor(span / d + 1e-9)) if span > 0.0 else 0
    n_seg = n_full
    head = partial and offset > 1e-12 * d
    head_end = min(start, tau_out)
    tail_start = start + n_full * d
    tail = partial and tau_out - tail_start > 1e-9 * d
    if head:
        n_seg += 1
    if tail:
        n_seg += 1
    stack_a = np.empty(max_depth + 2)
    stack_b = np.empty(max_depth + 2)
    stack_d = np.empty(max_depth + 2, np.int64)
    for s in range(n_seg):
        if head:
            idx = s - 1
        else:
            idx = s
        if idx < 0:
            a, b = tau_in, head_end
        elif idx < n_full:
            a = start + idx * d
            b = start + (idx + 1) * d
        else:
            a, b = tail_start, tau_out
        if not adaptive:
            cr, cg, cb, al = _segment(
                g, interp, seg_mode, tf, d_ref, table, d_base, ox, oy, oz, ux, uy, uz, a, b, correct
            )
            r += trans * cr
            gg += trans * cg
            bb += trans * cb
            trans *= 1.0 - al
        else:
            top = 0
            stack_a[0] = a
            stack_b[0] = b
            stack_d[0] = 0
            while top >= 0:
                sa = stack_a[top]
                sb = stack_b[top]
                depth = stack_d[top]
                top -= 1
                cr, cg, cb, al = _segment(
                    g, interp, seg_mode, tf, d_ref, table, d_base, ox, oy, oz, ux, uy, uz, sa, sb, correct
                )
                if al > theta and depth < max_depth:
                    mid = 0.5 * (sa + sb)
                    # far half first so the near half pops next
                    top += 1
                    stack_a[top] = mid
                    stack_b[top] = sb
                    stack_d[top] = depth + 1
                    top += 1
                    stack_a[top] = sa
                    stack_b[top] = mid
                    stack_d[top] = depth + 1
                    continue
                r += trans * cr
                gg += trans * cg
                bb += trans * cb
                trans *= 1.0 - al
        if trans <= eps:
            break
    return r, gg, bb, 1.0 - trans


@njit(cache=True, parallel=True, error_model="numpy")
def _render_rays(
    g, interp, seg_mode, tf, d_ref, table, d_base,
    org, dirv, tau_in, tau_out, hit, px, py,
    jitter, seed, d, partial, eps, adaptive, theta, max_depth, correct, out,
):  # fmt: skip
    for n in prange(org.shape[0]):
        if not hit[n]:
            continue
        offset = _jitter_unit(px[n], py[n], seed) * d if jitter else 0.0
        r, gg, bb, a = _march(
            g, interp, seg_mode, tf, d_ref, table, d_base,
            org[n, 0], org[n, 1], org[n, 2], dirv[n, 0], dirv[n, 1], dirv[n, 2],
            tau_in[n], tau_out[n], d, offset, partial, eps, adaptive, theta, max_depth, correct,
        )  # fmt: skip
        out[n, 0] = r
        out[n, 1] = gg
        out[n, 2] = bb
        out[n, 3] = a


def _to_voxel_space(origins, dirs, t_in, t_out, spacing):
    """Map world rays to voxel space; t values become voxel path lengths."""
    s = np.asarray(spacing, dtype=np.float64)
    dv = dirs / s
    scale = np.linalg.norm(dv, axis=-1)
    return origins / s, dv / scale[..., None], t_in * scale, t_out * scale


def _kernel_args(bound: _Bound, settings: RenderSettings):
    eps = -1.0 if settings.early_termination is None else float(settings.early_termination)
    return (
        settings.segment_length,
        settings.boundary_mode is BoundaryMode.PARTIAL_SEGMENT,
        eps,
        bool(settings.adaptive),
        float(settings.subdivide_threshold),
        int(settings.max_depth),
        bool(settings.opacity_correction),
    )


def integrate_ray(scene: Scene, ray: Ray, t_in: float, t_out: float, settings: RenderSettings, px=0, py=0):
    """Integrate one ray over ``[t_in, t_out]`` (world units).

    ``px``/``py`` only feed the jitter hash. Returns premultiplied ``(rgb, alpha)``.
    """
    if not t_in < t_out:
        raise ParameterError(f"need t_in < t_out, got {t_in} >= {t_out}")
    bound = scene.resolve(settings)
    o, u, a, b = _to_voxel_space(
        ray.origin[None], ray.direction[None], np.array([t_in]), np.array([t_out]), bound.vol.spacing
    )
    d, partial, eps, adaptive, theta, max_depth, correct = _kernel_args(bound, settings)
    offset = jitter_offset(px, py, settings.seed, d) if settings.jitter else 0.0
    r, g, b_, al = _march(
        bound.grid, settings.interpolation.code, _seg_code(settings), bound.tf, bound.d_ref,
        bound.table, bound.d_base, *o[0], *u[0], a[0], b[0],
        d, offset, partial, eps, adaptive, theta, max_depth, correct,
    )  # fmt: skip
    return np.array([r, g, b_]), al


def _seg_code(settings):
    return 0 if settings.segment_mode is SegmentMode.SINGLE_SAMPLE else 1


# -- frames ---------------------------------------------------------------------------


@dataclass
class Framebuffer:
    """Per-pixel premultiplied RGB plus accumulated opacity, shape ``(H, W, 4)``."""

    rgba: np.ndarray

    @classmethod
    def blank(cls, width, height):
        return cls(np.zeros((height, width, 4)))

    @property
    def width(self) -> int:
        return self.rgba.shape[1]

    @property
    def height(self) -> int:
        return self.rgba.shape[0]

    @property
    def rgb(self) -> np.ndarray:
        return self.rgba[..., :3]

    @property
    def alpha(self) -> np.ndarray:
        return self.rgba[..., 3]

    def straight_rgb(self) -> np.ndarray:
        a = self.alpha[..., None]
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(a > 0, self.rgb / a, 0.0)
        return np.clip(out, 0.0, 1.0)

    def write_ppm(self, path):
        """8-bit binary PPM of straight color: ``floor(255*c + 0.5)``."""
        img = np.floor(self.straight_rgb() * 255.0 + 0.5).astype(np.uint8)
        with open(path, "wb") as f:
            f.write(f"P6\n{self.width} {self.height}\n255\n".encode())
            f.write(img.tobytes())

    def write_pfm(self, path):
        """Little-endian float32 PFM of premultiplied RGB, rows bottom to top."""
        img = np.ascontiguousarray(self.rgb[::-1], dtype="<f4")
        with open(path, "wb") as f:
            f.write(f"PF\n{self.width} {self.height}\n-1.0\n".encode())
            f.write(img.tobytes())


def read_pfm(path) -> np.ndarray:
    """RGB float image ``(H, W, 3)`` from a PFM file, top row first."""
    with open(path, "rb") as f:
        header = f.readline().strip()
        if header not in (b"PF", b"Pf"):
            raise ParameterError(f"{path}: not a PFM file")
        channels = 3 if header == b"PF" else 1
        w, h = (int(v) for v in f.readline().split())
        scale = float(f.readline())
        dt = "<f4" if scale < 0 else ">f4"
        data = np.frombuffer(f.read(), dtype=dt, count=w * h * channels)
    img = data.reshape(h, w, channels)[::-1].astype(np.float64)
    return np.repeat(img, 3, axis=2) if channels == 1 else img


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as f:
        data = f.read()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P6":
        raise ParameterError(f"{path}: not a binary PPM file")
    w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    img = np.frombuffer(parts[4][: w * h * 3], dtype=np.uint8).reshape(h, w, 3)
    return img.astype(np.float64) / maxval


def render_frame(scene: Scene, camera: Camera, settings: RenderSettings) -> Framebuffer:
    """Render every pixel of ``camera``; rays missing the volume stay (0, 0, 0, 0)."""
    bound = scene.resolve(settings)
    lo, hi = bound.vol.bounds
    py, px = np.mgrid[0 : camera.height, 0 : camera.width]
    origins, dirs = camera.rays(px, py)
    origins = origins.reshape(-1, 3)
    dirs = dirs.reshape(-1, 3)
    t_in, t_out, hit = intersect_many(origins, dirs, lo, hi, settings.clip_plane)
    t_in = np.where(hit, t_in, 0.0)
    t_out = np.where(hit, t_out, 0.0)
    o, u, a, b = _to_voxel_space(origins, dirs, t_in, t_out, bound.vol.spacing)
    d, partial, eps, adaptive, theta, max_depth, correct = _kernel_args(bound, settings)
    out = np.zeros((origins.shape[0], 4))
    prev = numba.get_num_threads()
    if settings.threads:
        numba.set_num_threads(min(int(settings.threads), numba.config.NUMBA_NUM_THREADS))
    try:
        _render_rays(
            bound.grid, settings.interpolation.code, _seg_code(settings), bound.tf, bound.d_ref,
            bound.table, bound.d_base, np.ascontiguousarray(o), np.ascontiguousarray(u), a, b, hit,
            px.reshape(-1).astype(np.int64), py.reshape(-1).astype(np.int64),
            bool(settings.jitter), int(settings.seed) & _M32,
            d, partial, eps, adaptive, theta, max_depth, correct, out,
        )  # fmt: skip
    finally:
        numba.set_num_threads(prev)
    return Framebuffer(out.reshape(camera.height, camera.width, 4))
