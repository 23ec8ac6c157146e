import math

import numpy as np
import pytest

from dvrart.cli import EXIT_IO, EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, parse_args, run, settings_digest
from dvrart.raycast import read_pfm


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert run(["phantom", "--kind", "sphere_shell", "--dims", "24", "--edge", "3", "--out", str(d / "s.raw")]) == 0
    return d


def _render(work, out, *extra):
    return run(["render", "--volume", str(work / "s.raw"), "--tf", "step", "--size", "16x16",
                "--out", str(work / out), *extra])


def test_render_twice_bit_identical(work, capsys):
    assert _render(work, "a.pfm", "--jitter", "on", "--seed", "4") == EXIT_OK
    assert _render(work, "b.pfm", "--jitter", "on", "--seed", "4") == EXIT_OK
    assert (work / "a.pfm").read_bytes() == (work / "b.pfm").read_bytes()
    assert "settings digest:" in capsys.readouterr().out
    side = (work / "a.pfm.settings").read_text()
    assert "digest=" in side and "jitter=on" in side


def test_compare_identical_reports_infinity(work, capsys):
    _render(work, "c.pfm")
    capsys.readouterr()
    assert run(["compare", str(work / "c.pfm"), str(work / "c.pfm")]) == EXIT_OK
    assert "psnr_db=inf" in capsys.readouterr().out


def test_compare_threshold_exit_code(work):
    _render(work, "d.pfm")
    _render(work, "e.pfm", "--spv", "0.25")
    assert run(["compare", str(work / "d.pfm"), str(work / "e.pfm"), "--min-psnr", "300"]) == EXIT_VALIDATION
    assert run(["compare", str(work / "d.pfm"), str(work / "e.pfm"), "--min-psnr", "1"]) == EXIT_OK


def test_tricubic_without_coeffs_is_config_error(work, capsys):
    assert _render(work, "f.pfm", "--interp", "tricubic") == EXIT_USAGE
    assert "coeffs" in capsys.readouterr().err


def test_unknown_flag_rejected(work):
    assert _render(work, "g.pfm", "--no-such-flag") == EXIT_USAGE
    assert run(["explode"]) == EXIT_USAGE
    assert run([]) == EXIT_USAGE


def test_io_error(work):
    assert run(["render", "--volume", str(work / "missing.raw"), "--tf", "step", "--out", str(work / "x.pfm")]) == EXIT_IO
    assert run(["compare", str(work / "nope.pfm"), str(work / "nope.pfm")]) == EXIT_IO


def test_flags_and_config_equivalent(work):
    cfg = work / "run.cfg"
    cfg.write_text(f"# full run\nvolume={work / 's.raw'}\ntf=step\nsize=16x12\nspv=2\nmode=preint\n"
                   "clip=0,0,-1,-14\nboundary=truncate\nert=0.001\nadaptive=true\n")
    assert run(["render", "--config", str(cfg), "--out", str(work / "cfg.pfm")]) == EXIT_OK
    assert run(["render", "--volume", str(work / "s.raw"), "--tf", "step", "--size", "16x12", "--spv", "2",
                "--mode", "preint", "--clip=0,0,-1,-14", "--boundary", "truncate", "--ert", "0.001",
                "--adaptive", "--out", str(work / "flags.pfm")]) == EXIT_OK
    assert (work / "cfg.pfm").read_bytes() == (work / "flags.pfm").read_bytes()
    a = parse_args(["render", "--config", str(cfg), "--spv", "3"])
    assert a.spv == 3.0  # flags override config


def test_config_unknown_key(work):
    cfg = work / "bad.cfg"
    cfg.write_text("spv=2\nwarp=9\n")
    assert run(["render", "--config", str(cfg), "--out", str(work / "x.pfm")]) == EXIT_USAGE


def test_digest_ignores_output_path():
    a = parse_args(["render", "--volume", "v.raw", "--out", "a.pfm"])
    b = parse_args(["render", "--volume", "v.raw", "--out", "b.pfm"])
    assert settings_digest(a)[0] == settings_digest(b)[0]
    c = parse_args(["render", "--volume", "v.raw", "--out", "a.pfm", "--seed", "1"])
    assert settings_digest(a)[0] != settings_digest(c)[0]


def test_full_pipeline(work):
    assert run(["prefilter", "--volume", str(work / "s.raw"), "--out", str(work / "c.raw")]) == EXIT_OK
    assert run(["preint-table", "--tf", "step", "--resolution", "32", "--out", str(work / "t.raw")]) == EXIT_OK
    assert (work / "t.raw.settings").exists() and (work / "c.raw.settings").exists()
    assert _render(work, "p.ppm", "--mode", "preint", "--preint", str(work / "t.raw"), "--interp", "tricubic",
                   "--coeffs", str(work / "c.raw"),
                   "--camera", "pos=12,12,80;target=12,12,12;fov=25") == EXIT_OK
    assert (work / "p.ppm").read_bytes().startswith(b"P6\n16 16\n255\n")
    assert _render(work, "m.pfm", "--mip", "1", "--camera", "pos=12,12,80;target=12,12,12;ortho=30") == EXIT_OK
    # level-0 coefficients do not fit a coarser level
    assert _render(work, "m.pfm", "--mip", "1", "--interp", "tricubic", "--coeffs", str(work / "c.raw")) == EXIT_USAGE


def test_render_output_is_premultiplied_pfm(work):
    _render(work, "h.pfm")
    img = read_pfm(work / "h.pfm")
    assert img.shape == (16, 16, 3) and img.max() > 0 and np.all(img >= 0)


def test_bad_values_are_usage_errors(work):
    assert _render(work, "i.pfm", "--size", "16by16") == EXIT_USAGE
    assert _render(work, "i.pfm", "--spv", "0") == EXIT_USAGE
    assert _render(work, "i.txt") == EXIT_USAGE
    assert _render(work, "i.pfm", "--camera", "pos=1,2") == EXIT_USAGE


def test_bench_writes_csv(work):
    out = work / "bench.csv"
    assert run(["bench", "--scenario", "resolution", "--dims", "12", "--resolutions", "8x8,16x16",
                "--reps", "3", "--warmup", "0", "--out", str(out)]) == EXIT_OK
    assert out.read_text().startswith("scenario,mode")
    assert run(["bench", "--scenario", "samples", "--modes", "warp", "--dims", "12", "--size", "8x8",
                "--reps", "3"]) == EXIT_USAGE
