import csv

import numpy as np
import pytest

from dvrart.bench import (
    CSV_FIELDS,
    VIEWPORT_LADDER,
    BenchRecord,
    DeterminismError,
    bench_prefilter,
    bench_resolution_sweep,
    bench_samples_sweep,
    settings_for_mode,
    time_call,
    write_csv,
)
from dvrart.errors import ConfigurationError, ParameterError
from dvrart.interp import prefilter_bspline_coefficients
from dvrart.raycast import RenderSettings, Scene
from dvrart.scenes import sphere_scene
from dvrart.volcore import PhantomSpec, make_phantom


@pytest.fixture(scope="module")
def small():
    st_ = sphere_scene(n=24, width=16)
    sc = st_.scene
    return Scene(sc.volume, sc.tf, sc.table, prefilter_bspline_coefficients(sc.volume)), st_.camera


def test_record_invariants():
    with pytest.raises(ParameterError):
        BenchRecord("s", "m", "1", "1x1", 1, 1.0, 2, 1, 1)
    with pytest.raises(ParameterError):
        BenchRecord("s", "m", "1", "1x1", 1, 0.0, 5, 1, 1)


def test_time_call_gate():
    assert time_call(lambda: np.ones(3), 3, 0)[0] > 0
    flip = iter(range(100))
    with pytest.raises(DeterminismError):
        time_call(lambda: np.array([next(flip)]), 3, 0)
    with pytest.raises(ParameterError):
        time_call(lambda: 0, 2)


def test_settings_for_mode():
    s = settings_for_mode("preint_tricubic", 4, RenderSettings(early_termination=0.01, adaptive=True))
    assert s.early_termination is None and not s.adaptive and s.samples_per_voxel == 4
    assert s.segment_mode.value == "preintegrated" and s.interpolation.value == "tricubic_bspline"
    with pytest.raises(ConfigurationError):
        settings_for_mode("phong", 1)


def test_samples_sweep_one_record_per_pair(small):
    scene, cam = small
    recs = bench_samples_sweep(scene, cam, ["simple", "tricubic"], [1, 2], repetitions=3, warmup=0)
    assert [(r.mode, r.spv) for r in recs] == [("simple", 1), ("simple", 2), ("tricubic", 1), ("tricubic", 2)]
    assert all(r.median_ms > 0 and r.parallelism >= 1 for r in recs)
    with pytest.raises(ParameterError):
        bench_samples_sweep(scene, cam, ["simple"], [])
    with pytest.raises(ConfigurationError):
        bench_samples_sweep(scene, cam, ["bogus"], [1])


def test_resolution_sweep(small):
    scene, cam = small
    recs = bench_resolution_sweep(scene, cam, [(8, 8), (16, 8)], repetitions=3, warmup=0)
    assert [r.resolution for r in recs] == ["8x8", "16x8"]
    with pytest.raises(ParameterError):
        bench_resolution_sweep(scene, cam, [(0, 4)], repetitions=3)
    with pytest.raises(ParameterError):
        bench_resolution_sweep(scene, cam, [], repetitions=3)


def test_viewport_ladder_is_increasing():
    px = [w * h for w, h in VIEWPORT_LADDER]
    assert px == sorted(px) and VIEWPORT_LADDER[-1] == (1920, 1080)


def test_prefilter_bench_equivalence_gate():
    vol = make_phantom(PhantomSpec("tube", radius=1.5), (12, 10, 8))
    recs = bench_prefilter([vol], repetitions=3, warmup=0)
    assert [r.mode for r in recs] == ["simple", "parallel"]
    with pytest.raises(ParameterError):
        bench_prefilter([])


def test_csv(tmp_path, small):
    scene, cam = small
    recs = bench_resolution_sweep(scene, cam, [(4, 4)], repetitions=3, warmup=0)
    write_csv(recs, tmp_path / "b.csv")
    rows = list(csv.reader(open(tmp_path / "b.csv")))
    assert tuple(rows[0]) == CSV_FIELDS and len(rows) == 2


def test_trend_larger_volume_slower():
    cams = {}
    for n in (32, 64):
        st_ = sphere_scene(n=n, width=48)
        cams[n] = bench_samples_sweep(st_.scene, st_.camera, ["simple"], [1], repetitions=5, warmup=1)[0].median_ms
    assert cams[64] > cams[32]


def test_trend_doubling_pixels_envelope():
    st_ = sphere_scene(n=32, width=128)
    recs = bench_resolution_sweep(st_.scene, st_.camera, [(256, 128), (256, 256)], repetitions=5, warmup=1)
    ratio = recs[1].median_ms / recs[0].median_ms
    assert 1.2 < ratio < 3.0


def test_trend_prefilter_grows_with_size():
    vols = [sphere_scene(n=n, width=4, table=False).scene.volume for n in (64, 128)]
    recs = bench_prefilter(vols, repetitions=5, warmup=1)
    simple = [r.median_ms for r in recs if r.mode == "simple"]
    assert simple[1] > simple[0]
