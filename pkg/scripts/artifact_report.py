"""Artifact metrics for every canonical scene, printed and written as CSV.

Reproduces the numbers behind the acceptance criteria without pytest.
``--quick`` shrinks the sphere scene (64^3, 128^2) for a fast look.
"""

import argparse
import time

import numpy as np

from dvrart.quality import edge_continuity_sweep, quality_report, render_oracle, write_reports
from dvrart.raycast import RenderSettings, Scene, render_frame
from dvrart.scenes import slab_scene, sphere_scene, sphere_step_tf, tube_scene
from dvrart.transfer import smooth_transfer_function


def sphere_rows(n, width, seeds):
    st = sphere_scene(n=n, width=width)
    ref = render_oracle(st.scene, st.camera)
    rows = []

    def add(label, scene, settings, fb=None):
        fb = fb if fb is not None else render_frame(scene, st.camera, settings)
        rows.append((f"sphere/{label}", settings.digest(), quality_report(fb, ref, st.center)))

    for spv in (0.5, 1, 2, 4, 8):
        add(f"single spv={spv:g}", st.scene, RenderSettings(samples_per_voxel=spv))
    add("preint spv=1", st.scene, RenderSettings(segment_mode="preintegrated"))
    jit = RenderSettings(jitter=True)
    add("jitter spv=1", st.scene, jit)
    acc = sum(render_frame(st.scene, st.camera, jit.replace(seed=s)).rgba for s in range(seeds)) / seeds
    add(f"jitter mean of {seeds} seeds", st.scene, jit, acc)
    add("smoothed tf sigma=4", Scene(st.scene.volume, smooth_transfer_function(sphere_step_tf(), 4)),
        RenderSettings())
    return rows


def tube_rows():
    st = tube_scene()
    radius = st.camera.width / 4.0 * 0.5
    rows = []
    for interp in ("trilinear", "tricubic"):
        s = RenderSettings(samples_per_voxel=4, interpolation=interp)
        fb = render_frame(st.scene, st.camera, s)
        ref = render_oracle(st.scene, st.camera, s)
        rows.append((f"tube/{interp}", s.digest(), quality_report(fb, ref, st.center, radius)))
    return rows


def slab_summary():
    st = slab_scene()
    pos = -(20 - 0.01 * np.arange(301))
    out = {}
    for mode in ("partial_segment", "truncate"):
        out[mode] = edge_continuity_sweep(st.scene, st.camera, RenderSettings(boundary_mode=mode), (0, 0, -1), pos)
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--quick", action="store_true")
    ap.add_argument("--seeds", type=int, default=None, help="jittered renders to average")
    ap.add_argument("--out", default="artifact_report.csv")
    args = ap.parse_args()
    n, width = (64, 128) if args.quick else (128, 256)
    seeds = args.seeds or (16 if args.quick else 256)
    t0 = time.perf_counter()
    rows = sphere_rows(n, width, seeds) + tube_rows()
    print(f"{'scene':34s} {'psnr_db':>8s} {'banding':>10s} {'anisotropy':>11s}")
    for name, _, rep in rows:
        print(f"{name:34s} {rep.psnr_db:8.2f} {rep.banding_energy:10.3e} {rep.anisotropy:11.3e}")
    jumps = slab_summary()
    print(f"slab clip sweep max jump: partial {jumps['partial_segment']:.3e}, truncate {jumps['truncate']:.3e}")
    write_reports(rows, args.out)
    print(f"wrote {args.out} in {time.perf_counter() - t0:.0f} s")


if __name__ == "__main__":
    main()
