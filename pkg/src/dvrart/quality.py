"""Reference renders and artifact metrics.

Every PSNR in this package is measured against :func:`render_oracle`, a
256 samples-per-voxel render with exact boundary segments and no jitter.
Luminance is taken on premultiplied channels with Rec. 709 weights.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ParameterError
from .raycast import (
    BoundaryMode,
    Camera,
    ClipPlane,
    Framebuffer,
    RenderSettings,
    Scene,
    SegmentMode,
    render_frame,
)

ORACLE_SPV = 256.0
LUMA = np.array([0.2126, 0.7152, 0.0722])


@dataclass
class QualityReport:
    psnr_db: float
    mse: float
    banding_energy: float = 0.0
    anisotropy: float = 0.0
    notes: str = ""


def oracle_settings(settings: RenderSettings | None = None, spv: float = ORACLE_SPV) -> RenderSettings:
    """Reference settings; keeps interpolation, clip plane and mip level of ``settings``."""
    base = settings or RenderSettings()
    return base.replace(
        samples_per_voxel=spv,
        segment_mode=SegmentMode.SINGLE_SAMPLE,
        boundary_mode=BoundaryMode.PARTIAL_SEGMENT,
        jitter=False,
        early_termination=None,
        adaptive=False,
        opacity_correction=True,
    )


def render_oracle(scene: Scene, camera: Camera, settings: RenderSettings | None = None,
                  spv: float = ORACLE_SPV) -> Framebuffer:
    return render_frame(scene, camera, oracle_settings(settings, spv))


def _rgb(img) -> np.ndarray:
    if isinstance(img, Framebuffer):
        return img.rgb
    a = np.asarray(img, dtype=np.float64)
    return a[..., :3]


def mse(a, b) -> float:
    """Mean squared error over the RGB channels of two images."""
    x, y = _rgb(a), _rgb(b)
    if x.shape != y.shape:
        raise ParameterError(f"image shapes differ: {x.shape} vs {y.shape}")
    return float(np.mean((x - y) ** 2))


def psnr(a, b) -> float:
    """PSNR in dB for unit peak; identical images give ``math.inf``."""
    m = mse(a, b)
    return math.inf if m == 0 else 10.0 * math.log10(1.0 / m)


def luminance(img) -> np.ndarray:
    return _rgb(img) @ LUMA


def radial_profile(img, center):
    """Mean luminance and mean radius of 1-pixel annuli around ``center``.

    Pixel ``(x, y)`` lives at integer coordinates (column, row). Annuli stop
    at the largest circle that fits inside the image.
    """
    return _profile(luminance(img), center)


def _profile(lum, center):
    h, w = lum.shape
    cx, cy = (float(c) for c in center)
    if not (0 <= cx <= w - 1 and 0 <= cy <= h - 1):
        raise ParameterError("center must lie inside the image")
    rmax = min(cx, cy, w - 1 - cx, h - 1 - cy)
    y, x = np.mgrid[0:h, 0:w]
    r = np.hypot(x - cx, y - cy)
    ring = np.floor(r).astype(np.int64)
    n_rings = int(math.floor(rmax))
    keep = ring < n_rings
    counts = np.bincount(ring[keep], minlength=n_rings)
    lum_sum = np.bincount(ring[keep], weights=lum[keep], minlength=n_rings)
    r_sum = np.bincount(ring[keep], weights=r[keep], minlength=n_rings)
    ok = counts > 0
    return lum_sum[ok] / counts[ok], r_sum[ok] / counts[ok]


def banding_energy(img, center) -> float:
    """Mean squared second divided difference of the radial luminance profile.

    Divided differences use each annulus' mean radius, so a profile linear
    in radius scores exactly zero.
    """
    lum = luminance(img)
    # offsetting by one pixel keeps a constant image exactly at zero
    p, r = _profile(lum - lum.flat[0], center)
    if p.size < 3:
        return 0.0
    d1 = np.diff(p) / np.diff(r)
    d2 = 2.0 * np.diff(d1) / (r[2:] - r[:-2])
    return float(np.mean(d2**2))


def angular_anisotropy(img, center, radius, steps: int = 360) -> float:
    """Variance of bilinear luminance over ``steps`` angles on a circle."""
    lum = luminance(img)
    h, w = lum.shape
    cx, cy = (float(c) for c in center)
    if cx - radius < 0 or cy - radius < 0 or cx + radius > w - 1 or cy + radius > h - 1:
        raise ParameterError("circle must lie inside the image")
    th = 2.0 * np.pi * np.arange(steps) / steps
    xs = cx + radius * np.cos(th)
    ys = cy + radius * np.sin(th)
    vals = _bilinear(lum - lum.flat[0], xs, ys)
    return float(np.var(vals))


def _bilinear(a, xs, ys):
    x0 = np.minimum(np.floor(xs).astype(np.int64), a.shape[1] - 2)
    y0 = np.minimum(np.floor(ys).astype(np.int64), a.shape[0] - 2)
    fx, fy = xs - x0, ys - y0
    top = a[y0, x0] + fx * (a[y0, x0 + 1] - a[y0, x0])
    bot = a[y0 + 1, x0] + fx * (a[y0 + 1, x0 + 1] - a[y0 + 1, x0])
    return top + fy * (bot - top)


def edge_continuity_sweep(scene: Scene, camera: Camera, settings: RenderSettings,
                          normal, positions: Sequence[float]) -> float:
    """Largest per-pixel, per-channel change between renders at consecutive
    clip-plane offsets along ``normal``."""
    if len(positions) < 2:
        raise ParameterError("need at least two plane positions")
    worst = 0.0
    prev = None
    for p in positions:
        fb = render_frame(scene, camera, settings.replace(clip_plane=ClipPlane(tuple(normal), p)))
        if prev is not None:
            worst = max(worst, float(np.max(np.abs(fb.rgba - prev))))
        prev = fb.rgba
    return worst


def quality_report(img, reference, center=None, radius=None, notes="") -> QualityReport:
    m = mse(img, reference)
    rep = QualityReport(psnr_db=math.inf if m == 0 else 10 * math.log10(1 / m), mse=m, notes=notes)
    if center is not None:
        rep.banding_energy = banding_energy(img, center)
        if radius is not None:
            rep.anisotropy = angular_anisotropy(img, center, radius)
    return rep


REPORT_FIELDS = ("scene", "settings_digest", "psnr_db", "mse", "banding_energy", "anisotropy", "notes")


def write_reports(rows: Iterable[tuple[str, str, QualityReport]], path):
    """CSV with one row per ``(scene id, settings digest, report)``."""
    with open(path, "w", newline="") as f:
        out = csv.writer(f)
        out.writerow(REPORT_FIELDS)
        for scene_id, digest, rep in rows:
            d = asdict(rep)
            out.writerow([scene_id, digest] + [d[k] for k in REPORT_FIELDS[2:]])
