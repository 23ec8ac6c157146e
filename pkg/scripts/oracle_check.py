"""Self-consistency of the reference render: spv 256 vs spv 512 on the sphere scene."""

import argparse
import time

from dvrart.quality import psnr, render_oracle
from dvrart.scenes import sphere_scene


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=128, help="phantom edge length in voxels")
    ap.add_argument("--width", type=int, default=256, help="viewport edge length in pixels")
    args = ap.parse_args()
    st = sphere_scene(n=args.n, width=args.width, table=False)
    t0 = time.perf_counter()
    a = render_oracle(st.scene, st.camera, spv=256)
    b = render_oracle(st.scene, st.camera, spv=512)
    print(f"sphere {args.n}^3 @ {args.width}^2: psnr(spv256, spv512) = {psnr(a, b):.2f} dB "
          f"({time.perf_counter() - t0:.0f} s)")


if __name__ == "__main__":
    main()
