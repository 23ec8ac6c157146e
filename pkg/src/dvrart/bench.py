"""Timing harness for the quality/performance trade-offs.

Only orderings and trends are meaningful here; absolute milliseconds depend
on the machine. Every timed call is checked against an untimed reference
output first, and a scenario whose output drifts is rejected.
"""

from __future__ import annotations

import csv
import time
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numba
import numpy as np

from .errors import ConfigurationError, ParameterError
from .interp import InterpolationMode, execution_units, prefilter_bspline_coefficients
from .raycast import Camera, RenderSettings, Scene, SegmentMode, render_frame
from .volcore import ScalarVolume

# benchmark render modes: name -> (segment mode, interpolation)
MODES = {
    "simple": (SegmentMode.SINGLE_SAMPLE, InterpolationMode.TRILINEAR),
    "preint": (SegmentMode.PREINTEGRATED, InterpolationMode.TRILINEAR),
    "tricubic": (SegmentMode.SINGLE_SAMPLE, InterpolationMode.TRICUBIC_BSPLINE),
    "preint_tricubic": (SegmentMode.PREINTEGRATED, InterpolationMode.TRICUBIC_BSPLINE),
}

# viewport ladder from 0.26 to 2.07 megapixels
VIEWPORT_LADDER = ((512, 512), (800, 600), (1024, 768), (1280, 1024), (1920, 1080))

CSV_FIELDS = (
    "scenario", "mode", "volume_size", "resolution", "spv",
    "median_ms", "repetitions", "warmup", "parallelism", "settings_digest",
)  # fmt: skip


class DeterminismError(RuntimeError):
    """A timed run produced output different from its reference."""


@dataclass
class BenchRecord:
    scenario: str
    mode: str
    volume_size: str
    resolution: str
    spv: float
    median_ms: float
    repetitions: int
    warmup: int
    parallelism: int
    settings_digest: str = ""
    samples_ms: tuple = ()

    def __post_init__(self):
        if self.repetitions < 3:
            raise ParameterError("a benchmark needs at least 3 repetitions")
        if not self.median_ms > 0:
            raise ParameterError("median time must be positive")


def time_call(fn: Callable[[], np.ndarray], repetitions: int = 5, warmup: int = 1,
              reference: np.ndarray | None = None, atol: float = 0.0):
    """Median wall time (ms) of ``fn`` after the determinism gate.

    ``reference`` defaults to one untimed call. Outputs must match it exactly
    (or within ``atol``).
    """
    if repetitions < 3:
        raise ParameterError("repetitions must be >= 3")
    if reference is None:
        reference = fn()
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        out = fn()
        times.append((time.perf_counter() - t0) * 1e3)
        same = np.array_equal(out, reference) if atol == 0 else np.allclose(out, reference, rtol=0, atol=atol)
        if not same:
            raise DeterminismError("timed output differs from the untimed reference")
    return float(np.median(times)), tuple(times)


def settings_for_mode(mode: str, spv: float, base: RenderSettings | None = None) -> RenderSettings:
    if mode not in MODES:
        raise ConfigurationError(f"unknown benchmark mode {mode!r}; choose from {sorted(MODES)}")
    seg, interp = MODES[mode]
    base = base or RenderSettings()
    # timing sweeps never terminate rays early
    return base.replace(samples_per_voxel=spv, segment_mode=seg, interpolation=interp,
                        early_termination=None, adaptive=False)


def _vol_label(scene: Scene) -> str:
    vol = scene.level(0)
    return "x".join(map(str, vol.dims))


def bench_samples_sweep(scene: Scene, camera: Camera, modes: Sequence[str], spv_list: Sequence[float],
                        repetitions: int = 5, warmup: int = 1, base: RenderSettings | None = None,
                        scenario: str = "samples") -> list[BenchRecord]:
    if not spv_list:
        raise ParameterError("spv list must be non-empty")
    out = []
    for mode in modes:
        for spv in spv_list:
            s = settings_for_mode(mode, spv, base)
            scene.resolve(s)
            ms, samples = time_call(lambda: render_frame(scene, camera, s).rgba, repetitions, warmup)
            out.append(BenchRecord(scenario, mode, _vol_label(scene), f"{camera.width}x{camera.height}",
                                   float(spv), ms, repetitions, warmup, numba.get_num_threads(),
                                   s.digest(), samples))
    return out


def bench_resolution_sweep(scene: Scene, camera: Camera, resolutions: Sequence[tuple[int, int]],
                           settings: RenderSettings | None = None, repetitions: int = 5,
                           warmup: int = 1, scenario: str = "resolution") -> list[BenchRecord]:
    if not resolutions:
        raise ParameterError("resolution list must be non-empty")
    s = settings or RenderSettings()
    out = []
    for w, h in resolutions:
        if w < 1 or h < 1:
            raise ParameterError(f"resolution must be positive, got {w}x{h}")
        # keep the world-space framing: same vertical extent, aspect from the viewport
        cam = Camera(camera.position, camera.target, camera.up, int(w), int(h), camera.projection,
                     camera.fov_y, camera.ortho_height)
        ms, samples = time_call(lambda: render_frame(scene, cam, s).rgba, repetitions, warmup)
        out.append(BenchRecord(scenario, s.segment_mode.value, _vol_label(scene), f"{w}x{h}",
                               s.samples_per_voxel, ms, repetitions, warmup, numba.get_num_threads(),
                               s.digest(), samples))
    return out


def bench_prefilter(volumes: Sequence[ScalarVolume], repetitions: int = 5, warmup: int = 1,
                    threads: int | None = None, scenario: str = "prefilter") -> list[BenchRecord]:
    """Time single-threaded vs data-parallel prefiltering on each volume."""
    if not volumes:
        raise ParameterError("volume list must be non-empty")
    out = []
    units = threads or min(execution_units(), numba.config.NUMBA_NUM_THREADS)
    for vol in volumes:
        simple = prefilter_bspline_coefficients(vol).data
        par = prefilter_bspline_coefficients(vol, parallel=True, threads=units).data
        if not np.allclose(simple, par, rtol=0, atol=1e-6):
            raise DeterminismError("parallel prefilter disagrees with the serial one")
        label = "x".join(map(str, vol.dims))
        for mode, kw, ref, degree in (
            ("simple", {}, simple, 1),
            ("parallel", {"parallel": True, "threads": units}, par, units),
        ):
            ms, samples = time_call(lambda: prefilter_bspline_coefficients(vol, **kw).data,
                                    repetitions, warmup, reference=ref)
            out.append(BenchRecord(scenario, mode, label, "", 0.0, ms, repetitions, warmup, degree,
                                   "", samples))
    return out


def write_csv(records: Sequence[BenchRecord], path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(CSV_FIELDS)
        for r in records:
            d = asdict(r)
            w.writerow([d[k] for k in CSV_FIELDS])
