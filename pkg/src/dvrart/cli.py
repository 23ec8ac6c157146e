"""Command-line entry point: ``dvrart <subcommand> [flags]``.

Exit codes: 0 success, 1 usage or configuration error, 2 I/O error,
3 numerical/validation failure (e.g. ``compare`` below ``--min-psnr``).

``--config FILE`` reads ``key=value`` lines whose keys are the long flag
names without dashes (``spv=2``, ``interp=tricubic``, ``adaptive=true``).
Config entries are applied first, so explicit flags override them.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import bench as benchmod
from .errors import ConfigurationError, DimensionError, ParameterError
from .interp import load_coefficients, prefilter_bspline_coefficients, save_coefficients
from .quality import mse, psnr
from .raycast import Camera, ClipPlane, RenderSettings, Scene, orbit_camera, read_pfm, read_ppm, render_frame
from .transfer import (
    build_preintegration_table,
    load_preintegration_table,
    resolve_transfer_function,
    save_preintegration_table,
)
from .volcore import (
    PhantomSpec,
    VolumeMeta,
    build_mip_pyramid,
    load_raw_volume,
    make_phantom,
    save_raw_volume,
)

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_VALIDATION = 0, 1, 2, 3
# resolved values that do not change what gets computed
_NOT_DIGESTED = {"command", "config", "out", "threads", "func"}


class UsageError(Exception):
    pass


class ValidationFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _floats(text, n=None, name="value"):
    try:
        vals = [float(v) for v in str(text).replace("x", ",").split(",") if v != ""]
    except ValueError:
        raise UsageError(f"{name}: cannot parse {text!r}") from None
    if n is not None and len(vals) == 1 and n == 3:
        vals = vals * 3
    if n is not None and len(vals) != n:
        raise UsageError(f"{name}: expected {n} numbers, got {text!r}")
    return vals


def _size(text):
    try:
        w, h = (int(v) for v in str(text).lower().split("x"))
    except ValueError:
        raise UsageError(f"--size expects WxH, got {text!r}") from None
    if w < 1 or h < 1:
        raise UsageError(f"--size must be positive, got {text!r}")
    return w, h


def _on_off(text):
    t = str(text).lower()
    if t in ("on", "true", "1", "yes"):
        return True
    if t in ("off", "false", "0", "no"):
        return False
    raise UsageError(f"expected on|off, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dvrart", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", help="key=value file; flags override it")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--threads", type=int, default=None, help="cap on worker threads")
        return sp

    ph = common(sub.add_parser("phantom", help="write a synthetic test volume"))
    ph.add_argument("--kind", default=None, choices=["sphere_shell", "tube", "slab", "constant", "linear_ramp"])
    ph.add_argument("--dims", default="64")
    ph.add_argument("--spacing", default="1")
    ph.add_argument("--center", default=None)
    ph.add_argument("--inner", type=float, default=None, help="inner radius; default dims/4")
    ph.add_argument("--outer", type=float, default=None, help="outer radius; default 0.42*dims")
    ph.add_argument("--radius", type=float, default=0.5)
    ph.add_argument("--axis", default="z", choices=["x", "y", "z"])
    ph.add_argument("--extent", default=None, help="slab lo,hi in voxels")
    ph.add_argument("--value", type=float, default=None)
    ph.add_argument("--shell-value", type=float, default=0.9)
    ph.add_argument("--edge", type=float, default=0.0)
    ph.add_argument("--dtype", default="f32le", choices=["u8", "u16le", "f32le"])
    ph.add_argument("--out")

    pf = common(sub.add_parser("prefilter", help="compute cubic B-spline coefficients"))
    pf.add_argument("--volume")
    pf.add_argument("--meta")
    pf.add_argument("--parallel", default="off")
    pf.add_argument("--out")

    pt = common(sub.add_parser("preint-table", help="build a pre-integration table"))
    pt.add_argument("--tf")
    pt.add_argument("--dbase", type=float, default=1.0)
    pt.add_argument("--resolution", type=int, default=256)
    pt.add_argument("--steps", type=int, default=64)
    pt.add_argument("--out")

    r = common(sub.add_parser("render", help="render a frame to PFM or PPM"))
    r.add_argument("--volume")
    r.add_argument("--meta")
    r.add_argument("--coeffs")
    r.add_argument("--tf")
    r.add_argument("--preint")
    r.add_argument("--camera", default=None,
                   help="'pos=x,y,z;target=x,y,z;up=x,y,z;fov=deg' or '...;ortho=height'")
    r.add_argument("--view-axis", default="z", choices=["x", "y", "z"])
    r.add_argument("--size", default="256x256")
    r.add_argument("--spv", type=float, default=1.0)
    r.add_argument("--mode", default="single", choices=["single", "preint"])
    r.add_argument("--interp", default="trilinear", choices=["nearest", "trilinear", "tricubic"])
    r.add_argument("--jitter", default="off")
    r.add_argument("--boundary", default="partial", choices=["truncate", "partial"])
    r.add_argument("--ert", default="off", help="early termination epsilon, or off")
    r.add_argument("--adaptive", action="store_true")
    r.add_argument("--theta", type=float, default=0.1)
    r.add_argument("--max-depth", type=int, default=3)
    r.add_argument("--clip", default=None, help="'nx,ny,nz,d' keeps dot(n, x) <= d")
    r.add_argument("--mip", type=int, default=0)
    r.add_argument("--opacity-correction", default="on")
    r.add_argument("--out")

    c = common(sub.add_parser("compare", help="MSE/PSNR between two images"))
    c.add_argument("images", nargs=2)
    c.add_argument("--min-psnr", type=float, default=None)

    b = common(sub.add_parser("bench", help="timing sweeps"))
    b.add_argument("--scenario", default="samples", choices=["samples", "resolution", "prefilter"])
    b.add_argument("--dims", default="64")
    b.add_argument("--size", default="256x256")
    b.add_argument("--spv", default="1,2,4,8")
    b.add_argument("--modes", default="simple,preint,tricubic,preint_tricubic")
    b.add_argument("--resolutions", default=",".join(f"{w}x{h}" for w, h in benchmod.VIEWPORT_LADDER))
    b.add_argument("--reps", type=int, default=5)
    b.add_argument("--warmup", type=int, default=1)
    b.add_argument("--out")
    return p


def _config_tokens(parser, command, path) -> list[str]:
    from .volcore import parse_key_values

    sp = parser._subparsers._group_actions[0].choices[command]
    flags = {}
    for act in sp._actions:
        for opt in act.option_strings:
            if opt.startswith("--"):
                flags[opt[2:].replace("-", "_")] = (opt, act)
    tokens = []
    for key, value in parse_key_values(Path(path).read_text()).items():
        k = key.replace("-", "_")
        if k not in flags or k == "config":
            raise UsageError(f"{path}: unknown setting {key!r}")
        opt, act = flags[k]
        if isinstance(act, argparse._StoreTrueAction):
            if _on_off(value):
                tokens.append(opt)
        else:
            tokens.append(f"{opt}={value}")
    return tokens


def parse_args(argv):
    parser = build_parser()
    argv = list(argv)
    if not argv or argv[0] in ("-h", "--help"):
        parser.print_help()
        raise SystemExit(EXIT_OK if argv else EXIT_USAGE)
    command, rest = argv[0], argv[1:]
    if command not in parser._subparsers._group_actions[0].choices:
        raise UsageError(f"unknown subcommand {command!r}")
    cfg = None
    if "--config" in rest:
        i = rest.index("--config")
        if i + 1 >= len(rest):
            raise UsageError("--config needs a file")
        cfg = rest[i + 1]
        rest = rest[:i] + rest[i + 2 :]
    pre = _config_tokens(parser, command, cfg) if cfg else []
    args = parser.parse_args([command] + pre + rest)
    args.config = cfg
    return args


def settings_digest(args) -> tuple[str, dict]:
    resolved = {k: v for k, v in sorted(vars(args).items()) if k not in _NOT_DIGESTED}
    blob = json.dumps(resolved, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16], resolved


def _write_sidecar(out, args, digest, resolved):
    lines = [f"command={args.command}", f"digest={digest}"]
    lines += [f"{k}={v}" for k, v in resolved.items()]
    Path(str(out) + ".settings").write_text("\n".join(lines) + "\n")


def _need(args, *names):
    for n in names:
        if getattr(args, n) in (None, ""):
            raise UsageError(f"{args.command}: --{n.replace('_', '-')} is required")


def _load_volume(args):
    meta = VolumeMeta.from_text(Path(args.meta).read_text()) if args.meta else None
    return load_raw_volume(args.volume, meta)


def parse_camera(text, volume, width, height, axis="z") -> Camera:
    base = orbit_camera(volume, width, height, axis=axis)
    if not text:
        return base
    kw = {}
    for part in str(text).split(";"):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise UsageError(f"--camera: expected key=value, got {part!r}")
        k, v = (s.strip() for s in part.split("=", 1))
        if k in ("pos", "position"):
            kw["position"] = tuple(_floats(v, 3, "camera pos"))
        elif k == "target":
            kw["target"] = tuple(_floats(v, 3, "camera target"))
        elif k == "up":
            kw["up"] = tuple(_floats(v, 3, "camera up"))
        elif k == "fov":
            kw["projection"], kw["fov_y"] = "perspective", float(v)
        elif k == "ortho":
            kw["projection"], kw["ortho_height"] = "orthographic", float(v)
        else:
            raise UsageError(f"--camera: unknown key {k!r}")
    fields = dict(position=base.position, target=base.target, up=base.up, width=width, height=height,
                  projection=base.projection, fov_y=base.fov_y, ortho_height=base.ortho_height)
    fields.update(kw)
    return Camera(**fields)


def cmd_phantom(args, digest, resolved):
    _need(args, "kind", "out")
    dims = [int(v) for v in _floats(args.dims, 3, "--dims")]
    n = min(dims)
    spec = PhantomSpec(
        kind=args.kind,
        center=tuple(_floats(args.center, 3, "--center")) if args.center else None,
        inner_radius=args.inner if args.inner is not None else 0.25 * n,
        outer_radius=args.outer if args.outer is not None else 0.42 * n,
        radius=args.radius,
        axis=args.axis,
        slab_extent=tuple(_floats(args.extent, 2, "--extent")) if args.extent else (0.25 * n, 0.75 * n),
        interior_value=args.value if args.value is not None else (0.3 if args.kind == "sphere_shell" else 1.0),
        shell_value=args.shell_value,
        edge_width=args.edge,
    )
    vol = make_phantom(spec, dims, tuple(_floats(args.spacing, 3, "--spacing")))
    save_raw_volume(vol, args.out, args.dtype, extra={"digest": digest})
    _write_sidecar(args.out, args, digest, resolved)
    print(f"wrote {args.out} dims={vol.dims}")


def cmd_prefilter(args, digest, resolved):
    _need(args, "volume", "out")
    vol = _load_volume(args)
    coeffs = prefilter_bspline_coefficients(vol, parallel=_on_off(args.parallel), threads=args.threads)
    save_coefficients(coeffs, args.out, extra={"digest": digest})
    _write_sidecar(args.out, args, digest, resolved)
    print(f"wrote {args.out}")


def cmd_preint(args, digest, resolved):
    _need(args, "tf", "out")
    tf = resolve_transfer_function(args.tf)
    table = build_preintegration_table(tf, args.dbase, args.resolution, args.steps)
    save_preintegration_table(table, args.out, extra={"digest": digest})
    _write_sidecar(args.out, args, digest, resolved)
    print(f"wrote {args.out} resolution={table.resolution}")


def render_settings_from_args(args) -> RenderSettings:
    ert = None if str(args.ert).lower() == "off" else float(args.ert)
    clip = None
    if args.clip:
        nx, ny, nz, d = _floats(args.clip, 4, "--clip")
        clip = ClipPlane((nx, ny, nz), d)
    return RenderSettings(
        samples_per_voxel=args.spv,
        segment_mode="single_sample" if args.mode == "single" else "preintegrated",
        interpolation=args.interp,
        jitter=_on_off(args.jitter),
        seed=args.seed,
        boundary_mode=args.boundary,
        early_termination=ert,
        adaptive=args.adaptive,
        subdivide_threshold=args.theta,
        max_depth=args.max_depth,
        clip_plane=clip,
        mip_level=args.mip,
        opacity_correction=_on_off(args.opacity_correction),
        threads=args.threads,
    )


def cmd_render(args, digest, resolved):
    _need(args, "volume", "out")
    out = Path(args.out)
    if out.suffix.lower() not in (".pfm", ".ppm"):
        raise UsageError("--out must end in .pfm or .ppm")
    settings = render_settings_from_args(args)
    if settings.interpolation.value == "tricubic_bspline" and not args.coeffs:
        raise ConfigurationError("tricubic interpolation needs --coeffs (run `dvrart prefilter`)")
    preint = settings.segment_mode.value == "preintegrated"
    if preint and not (args.preint or args.tf):
        raise ConfigurationError("pre-integrated mode needs --preint or --tf")
    if not preint and not args.tf:
        raise ConfigurationError("single-sample mode needs --tf")
    vol = _load_volume(args)
    volume = build_mip_pyramid(vol, args.mip + 1) if args.mip else vol
    tf = resolve_transfer_function(args.tf) if args.tf else None
    table = None
    if preint:
        table = load_preintegration_table(args.preint) if args.preint else build_preintegration_table(tf)
    coeffs = load_coefficients(args.coeffs) if args.coeffs else None
    w, h = _size(args.size)
    level = volume[args.mip] if args.mip else vol
    cam = parse_camera(args.camera, level, w, h, args.view_axis)
    fb = render_frame(Scene(volume, tf, table, coeffs), cam, settings)
    if out.suffix.lower() == ".pfm":
        fb.write_pfm(out)
    else:
        fb.write_ppm(out)
    _write_sidecar(out, args, digest, resolved)
    print(f"wrote {out} {w}x{h} render digest={settings.digest()}")


def _read_image(path):
    p = Path(path)
    return read_pfm(p) if p.suffix.lower() == ".pfm" else read_ppm(p)


def cmd_compare(args, digest, resolved):
    a, b = (_read_image(p) for p in args.images)
    m = mse(a, b)
    p = psnr(a, b)
    print(f"mse={m:.9g} psnr_db={'inf' if math.isinf(p) else f'{p:.4f}'}")
    if args.min_psnr is not None and p < args.min_psnr:
        raise ValidationFailure(f"psnr {p:.4f} dB below --min-psnr {args.min_psnr}")


def cmd_bench(args, digest, resolved):
    from .scenes import sphere_scene

    n = int(_floats(args.dims, None, "--dims")[0])
    if args.scenario == "prefilter":
        vols = [make_phantom(PhantomSpec("sphere_shell", inner_radius=0.25 * k, outer_radius=0.42 * k,
                                         edge_width=k / 8), (k, k, k))
                for k in (int(v) for v in _floats(args.dims, None, "--dims"))]
        recs = benchmod.bench_prefilter(vols, args.reps, args.warmup, args.threads)
    else:
        w, h = _size(args.size)
        setup = sphere_scene(n, w, table=True)
        scene = Scene(setup.scene.volume, setup.scene.tf, setup.scene.table,
                      prefilter_bspline_coefficients(setup.scene.volume))
        cam = Camera(setup.camera.position, setup.camera.target, setup.camera.up, w, h,
                     ortho_height=setup.camera.ortho_height)
        if args.scenario == "samples":
            recs = benchmod.bench_samples_sweep(scene, cam, args.modes.split(","),
                                                _floats(args.spv, None, "--spv"), args.reps, args.warmup,
                                                RenderSettings(threads=args.threads))
        else:
            res = [_size(r) for r in args.resolutions.split(",")]
            recs = benchmod.bench_resolution_sweep(scene, cam, res, RenderSettings(threads=args.threads),
                                                   args.reps, args.warmup)
    for r in recs:
        print(f"{r.scenario:10s} {r.mode:16s} vol={r.volume_size:12s} res={r.resolution:10s} "
              f"spv={r.spv:<5g} median={r.median_ms:10.2f} ms")
    if args.out:
        benchmod.write_csv(recs, args.out)
        _write_sidecar(args.out, args, digest, resolved)


COMMANDS = {
    "phantom": cmd_phantom,
    "prefilter": cmd_prefilter,
    "preint-table": cmd_preint,
    "render": cmd_render,
    "compare": cmd_compare,
    "bench": cmd_bench,
}


def run(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        args = parse_args(argv)
        digest, resolved = settings_digest(args)
        print(f"settings digest: {digest}")
        COMMANDS[args.command](args, digest, resolved)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (UsageError, ConfigurationError, ParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, DimensionError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValidationFailure, benchmod.DeterminismError) as exc:
        print(f"validation failed: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
