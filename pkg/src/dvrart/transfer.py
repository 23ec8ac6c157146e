"""Classification: lookup tables, opacity correction and pre-integration.

Entries of a :class:`TransferFunction` are straight (non-premultiplied)
RGBA. Their opacity is the opacity of a segment of length ``d_ref`` voxels;
any other segment length goes through :func:`correct_opacity`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter1d

from .errors import DimensionError, ParameterError
from .volcore import VolumeMeta, meta_path, parse_key_values, read_raw_array, write_raw_array


@dataclass(frozen=True)
class TransferFunction:
    entries: np.ndarray = field(repr=False)
    d_ref: float = 1.0

    def __post_init__(self):
        e = np.array(self.entries, dtype=np.float64)
        if e.ndim != 2 or e.shape[1] != 4:
            raise DimensionError(f"entries must be shaped (L, 4), got {e.shape}")
        if e.shape[0] < 2:
            raise ParameterError("a transfer function needs at least 2 entries")
        if e.min() < 0.0 or e.max() > 1.0:
            raise ParameterError("transfer function channels must lie in [0, 1]")
        if not self.d_ref > 0:
            raise ParameterError("d_ref must be > 0")
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)
        object.__setattr__(self, "d_ref", float(self.d_ref))

    def __len__(self):
        return self.entries.shape[0]


def classify(tf: TransferFunction, v):
    """Straight color and ``d_ref``-opacity for scalar(s) ``v``.

    Returns ``(rgb, alpha)`` where ``rgb`` has a trailing axis of 3.
    """
    e = tf.entries
    L = e.shape[0]
    p = np.clip(np.asarray(v, dtype=np.float64), 0.0, 1.0) * (L - 1)
    i0 = np.minimum(np.floor(p).astype(np.int64), L - 2)
    f = (p - i0)[..., None]
    out = e[i0] * (1.0 - f) + e[i0 + 1] * f
    return out[..., :3], out[..., 3]


def correct_opacity(alpha, d1, d2):
    """Opacity of a segment of length ``d2`` given opacity ``alpha`` at ``d1``.

    ``1 - (1 - alpha) ** (d2 / d1)``. Fully opaque input stays opaque for
    any ``d2 > 0``.
    """
    d1 = np.asarray(d1, dtype=np.float64)
    if np.any(d1 <= 0):
        raise ParameterError("reference length d1 must be > 0")
    d2 = np.asarray(d2, dtype=np.float64)
    if np.any(d2 < 0):
        raise ParameterError("target length d2 must be >= 0")
    a = np.clip(np.asarray(alpha, dtype=np.float64), 0.0, 1.0)
    out = 1.0 - np.power(1.0 - a, d2 / d1)
    return float(out) if out.ndim == 0 else out


def step_transfer_function(
    threshold: int = 128,
    color=(1.0, 0.85, 0.6),
    alpha: float = 0.5,
    entries: int = 256,
    d_ref: float = 1.0,
) -> TransferFunction:
    """Transparent below entry ``threshold``, constant ``color``/``alpha`` from it on."""
    e = np.zeros((entries, 4))
    e[threshold:, :3] = color
    e[threshold:, 3] = alpha
    return TransferFunction(e, d_ref)


def piecewise_linear_transfer_function(points, entries: int = 256, d_ref: float = 1.0) -> TransferFunction:
    """Sample control points ``[(v, r, g, b, a), ...]`` onto an ``entries`` LUT."""
    pts = np.asarray(sorted(points), dtype=np.float64)
    v = np.linspace(0.0, 1.0, entries)
    e = np.stack([np.interp(v, pts[:, 0], pts[:, c]) for c in range(1, 5)], axis=1)
    return TransferFunction(e, d_ref)


def ramp_transfer_function(entries: int = 256) -> TransferFunction:
    """Two soft material ramps, a typical smooth classification preset."""
    return piecewise_linear_transfer_function(
        [
            (0.0, 0.0, 0.0, 0.0, 0.0),
            (0.2, 0.8, 0.3, 0.2, 0.0),
            (0.45, 0.9, 0.5, 0.3, 0.15),
            (0.6, 0.9, 0.8, 0.6, 0.05),
            (0.8, 1.0, 1.0, 0.9, 0.6),
            (1.0, 1.0, 1.0, 1.0, 0.8),
        ],
        entries,
    )


def smooth_transfer_function(tf: TransferFunction, sigma: float) -> TransferFunction:
    """Gaussian blur of every channel over the entry index, edges clamped."""
    if sigma < 0:
        raise ParameterError("sigma must be >= 0")
    if sigma == 0:
        return tf
    e = gaussian_filter1d(tf.entries, sigma, axis=0, mode="nearest")
    return TransferFunction(np.clip(e, 0.0, 1.0), tf.d_ref)


def load_transfer_function(path, d_ref: float = 1.0) -> TransferFunction:
    e = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    return TransferFunction(e, d_ref)


def save_transfer_function(tf: TransferFunction, path):
    np.savetxt(path, tf.entries, delimiter=",", fmt="%.17g")


TF_PRESETS = {
    "step": step_transfer_function,
    "ramp": ramp_transfer_function,
}


def resolve_transfer_function(spec: str) -> TransferFunction:
    """A CSV path, or a preset name such as ``step`` / ``ramp``."""
    if spec in TF_PRESETS and not Path(spec).exists():
        return TF_PRESETS[spec]()
    return load_transfer_function(spec)


# -- pre-integration --------------------------------------------------------------


@dataclass(frozen=True)
class PreintegrationTable:
    """``rgba[i, j]`` is the segment result for ``v0 = i/(R-1)``, ``v1 = j/(R-1)``.

    Color channels are premultiplied by opacity.
    """

    rgba: np.ndarray = field(repr=False)
    d_base: float = 1.0

    def __post_init__(self):
        t = np.ascontiguousarray(self.rgba, dtype=np.float64)
        if t.ndim != 3 or t.shape[0] != t.shape[1] or t.shape[2] != 4 or t.shape[0] < 2:
            raise DimensionError(f"table must be shaped (R, R, 4) with R >= 2, got {t.shape}")
        t.setflags(write=False)
        object.__setattr__(self, "rgba", t)
        object.__setattr__(self, "d_base", float(self.d_base))

    @property
    def resolution(self) -> int:
        return self.rgba.shape[0]


def integrate_linear_segment(tf: TransferFunction, v0, v1, length: float, steps: int):
    """Composite ``steps`` midpoint sub-samples of a linear scalar ramp.

    Returns premultiplied ``(rgb, alpha)`` for every broadcast ``(v0, v1)``.
    """
    v0 = np.asarray(v0, dtype=np.float64)
    v1 = np.asarray(v1, dtype=np.float64)
    v0, v1 = np.broadcast_arrays(v0, v1)
    h = length / steps
    color = np.zeros(v0.shape + (3,))
    trans = np.ones(v0.shape)
    for m in range(steps):
        v = v0 + (v1 - v0) * ((m + 0.5) / steps)
        c, a = classify(tf, v)
        a = correct_opacity(a, tf.d_ref, h)
        color += (trans * a)[..., None] * c
        trans *= 1.0 - a
    return color, 1.0 - trans


def build_preintegration_table(
    tf: TransferFunction, d_base: float = 1.0, resolution: int = 256, steps: int = 64
) -> PreintegrationTable:
    if resolution < 2:
        raise ParameterError("table resolution must be >= 2")
    if steps < 1:
        raise ParameterError("integration steps must be >= 1")
    if not d_base > 0:
        raise ParameterError("d_base must be > 0")
    knots = np.linspace(0.0, 1.0, resolution)
    color, alpha = integrate_linear_segment(tf, knots[:, None], knots[None, :], d_base, steps)
    rgba = np.concatenate([color, alpha[..., None]], axis=-1)
    # guard premultiplied <= alpha against rounding
    rgba[..., :3] = np.minimum(rgba[..., :3], rgba[..., 3:])
    return PreintegrationTable(np.clip(rgba, 0.0, 1.0), d_base)


def lookup_preintegrated(table: PreintegrationTable, v0, v1, d):
    """Bilinear table fetch, rescaled to segment length ``d``.

    Opacity is corrected from ``d_base`` to ``d``; premultiplied color is
    scaled by the same opacity ratio (skipped for near-transparent entries).
    """
    t = table.rgba
    R = t.shape[0]
    p = np.clip(np.asarray(v0, dtype=np.float64), 0.0, 1.0) * (R - 1)
    q = np.clip(np.asarray(v1, dtype=np.float64), 0.0, 1.0) * (R - 1)
    p, q = np.broadcast_arrays(p, q)
    i0 = np.minimum(np.floor(p).astype(np.int64), R - 2)
    j0 = np.minimum(np.floor(q).astype(np.int64), R - 2)
    fp = (p - i0)[..., None]
    fq = (q - j0)[..., None]
    out = (
        t[i0, j0] * (1 - fp) * (1 - fq)
        + t[i0 + 1, j0] * fp * (1 - fq)
        + t[i0, j0 + 1] * (1 - fp) * fq
        + t[i0 + 1, j0 + 1] * fp * fq
    )
    color, alpha = out[..., :3], out[..., 3]
    d = np.asarray(d, dtype=np.float64)
    if np.any(d != table.d_base):
        corrected = correct_opacity(alpha, table.d_base, d)
        ratio = np.where(alpha >= 1e-7, corrected / np.maximum(alpha, 1e-300), 1.0)
        color = color * np.asarray(ratio)[..., None]
        alpha = np.asarray(corrected)
    return color, alpha


def save_preintegration_table(table: PreintegrationTable, path, extra: dict | None = None):
    R = table.resolution
    meta = VolumeMeta((4, R, R), (1.0, 1.0, 1.0), "f32le", 0.0, 1.0, kind="preintegration")
    write_raw_array(table.rgba.reshape(-1), path, meta, {"d_base": repr(table.d_base), **(extra or {})})


def load_preintegration_table(path) -> PreintegrationTable:
    text = meta_path(path).read_text()
    meta = VolumeMeta.from_text(text)
    if meta.kind != "preintegration":
        raise ParameterError(f"{path}: metadata kind is {meta.kind!r}, not 'preintegration'")
    kv = parse_key_values(text)
    R = meta.dims[1]
    rgba = read_raw_array(path, meta).reshape(R, R, 4)
    return PreintegrationTable(rgba, float(kv.get("d_base", 1.0)))
