"""Canonical test scenes for the artifact experiments.

Each builder returns a :class:`Setup`: scene, camera and the image-space
center used by the radial metrics. Parameters were fixed once so that the
artifact under study dominates the metric (see the README for the numbers
recorded on the first verified run).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .interp import prefilter_bspline_coefficients
from .raycast import Camera, Scene
from .transfer import (
    TransferFunction,
    build_preintegration_table,
    piecewise_linear_transfer_function,
    step_transfer_function,
)
from .volcore import PhantomSpec, make_phantom


@dataclass(frozen=True)
class Setup:
    name: str
    scene: Scene
    camera: Camera
    center: tuple[float, float]


def _look_down_z(target, width, height, view_height, projection="orthographic"):
    target = np.asarray(target, dtype=np.float64)
    pos = target + np.array([0.0, 0.0, 4.0 * view_height + 1000.0])
    return Camera(tuple(pos), tuple(target), (0.0, 1.0, 0.0), width, height, projection,
                  30.0, float(view_height))


def sphere_step_tf(alpha: float = 0.03) -> TransferFunction:
    return step_transfer_function(threshold=128, color=(1.0, 0.85, 0.6), alpha=alpha)


def sphere_scene(n: int = 128, width: int = 256, tf: TransferFunction | None = None,
                 table: bool = True) -> Setup:
    """Smooth-edged sphere shell behind a translucent step transfer function.

    The view is zoomed to 70% of the outer radius so the silhouette falls
    outside every annulus of the radial profile; what remains is the
    onion-ring structure.
    """
    outer = 0.42 * n
    spec = PhantomSpec("sphere_shell", inner_radius=0.25 * n, outer_radius=outer,
                       interior_value=0.3, shell_value=0.9, edge_width=n / 8)
    vol = make_phantom(spec, (n, n, n))
    tf = tf or sphere_step_tf()
    tab = build_preintegration_table(tf) if table else None
    cam = _look_down_z([n // 2] * 3, width, width, 1.4 * outer)
    c = (width - 1) / 2.0
    return Setup("sphere_shell", Scene(vol, tf, tab), cam, (c, c))


def vessel_tf() -> TransferFunction:
    """White emission with opacity rising linearly in the scalar."""
    return piecewise_linear_transfer_function([(0.0, 1.0, 1.0, 1.0, 0.0), (1.0, 1.0, 1.0, 1.0, 0.05)])


def tube_scene(n: int = 32, width: int = 64, voxels_across: float = 4.0, length: int = 8) -> Setup:
    """One-voxel-wide vessel along z, viewed end-on and magnified.

    ``width / voxels_across`` pixels per voxel; the default puts a circle of
    8 pixels at half a voxel from the vessel axis.
    """
    vol = make_phantom(PhantomSpec("tube", radius=0.5, axis="z"), (n, n, length))
    coeffs = prefilter_bspline_coefficients(vol)
    cam = _look_down_z([n // 2, n // 2, length // 2], width, width, voxels_across)
    c = (width - 1) / 2.0
    return Setup("tube", Scene(vol, vessel_tf(), None, coeffs), cam, (c, c))


def slab_tf(alpha: float = 0.2) -> TransferFunction:
    return step_transfer_function(threshold=128, color=(0.9, 0.9, 0.9), alpha=alpha)


def slab_scene(n: int = 32, width: int = 32, alpha: float = 0.2) -> Setup:
    """Homogeneous slab filling z in [4, n-4], seen along -z."""
    vol = make_phantom(PhantomSpec("slab", axis="z", slab_extent=(4.0, n - 5.0), interior_value=1.0),
                       (n, n, n))
    cam = _look_down_z([n // 2] * 3, width, width, 0.5 * n)
    c = (width - 1) / 2.0
    return Setup("slab", Scene(vol, slab_tf(alpha)), cam, (c, c))


def homogeneous_scene(n: int = 32, width: int = 32, value: float = 0.5, alpha: float = 0.02,
                      spacing=(1.0, 1.0, 1.0)) -> Setup:
    """Constant-scalar volume with a constant transfer function.

    The camera frame is slightly larger than the box so some rays miss.
    """
    vol = make_phantom(PhantomSpec("constant", interior_value=value), (n, n, n), spacing)
    tf = TransferFunction(np.tile([0.8, 0.6, 0.4, alpha], (256, 1)))
    lo, hi = vol.bounds
    cam = _look_down_z(0.5 * (lo + hi), width, width, 1.1 * float(np.max(hi - lo)))
    c = (width - 1) / 2.0
    return Setup("homogeneous", Scene(vol, tf, build_preintegration_table(tf, resolution=8)), cam, (c, c))
