import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from dvrart.errors import ConfigurationError, ParameterError
from dvrart.interp import prefilter_bspline_coefficients
from dvrart.raycast import (
    Camera,
    ClipPlane,
    Framebuffer,
    Ray,
    RenderSettings,
    Scene,
    SegmentSample,
    composite_front_to_back,
    generate_ray,
    integrate_ray,
    jitter_offset,
    ray_box_intersect,
    read_pfm,
    read_ppm,
    render_frame,
)
from dvrart.scenes import homogeneous_scene, sphere_scene
from dvrart.transfer import TransferFunction, build_preintegration_table, correct_opacity
from dvrart.volcore import PhantomSpec, build_mip_pyramid, make_phantom

from oracles import composite_back_to_front

MODES = [
    dict(segment_mode="single_sample"),
    dict(segment_mode="preintegrated"),
    dict(interpolation="tricubic"),
    dict(interpolation="nearest"),
    dict(adaptive=True),
]


@pytest.fixture(scope="module")
def homog():
    return homogeneous_scene(n=16, width=16)


def _x_ray(y=8.0, z=8.0):
    return Ray(np.array([-5.0, y, z]), np.array([1.0, 0.0, 0.0]))


def test_ray_is_normalized():
    r = Ray((0, 0, 0), (3, 4, 0))
    assert abs(np.linalg.norm(r.direction) - 1) <= 1e-9
    np.testing.assert_allclose(r.at(5), [3, 4, 0])
    with pytest.raises(ParameterError):
        Ray((0, 0, 0), (0, 0, 0))


def test_camera_invariants():
    with pytest.raises(ParameterError):
        Camera((0, 0, 5), (0, 0, 0), up=(0, 0, 1))
    with pytest.raises(ParameterError):
        Camera((0, 0, 5), (0, 0, 0), width=0)
    with pytest.raises(ParameterError):
        Camera((0, 0, 5), (0, 0, 0), projection="fisheye")


def test_orthographic_rays_parallel_and_spaced():
    cam = Camera((0, 0, 10), (0, 0, 0), width=8, height=4, ortho_height=2.0)
    for px, py in [(0, 0), (7, 3), (3, 1)]:
        np.testing.assert_array_equal(generate_ray(cam, px, py).direction, [0, 0, -1])
    a, b = generate_ray(cam, 2, 1), generate_ray(cam, 3, 1)
    pixel_w = 2.0 * (8 / 4) / 8
    assert np.linalg.norm(b.origin - a.origin) == pytest.approx(pixel_w, abs=1e-12)


def test_perspective_center_pixel_on_axis():
    cam = Camera((1, 2, 9), (1, 2, 0), width=9, height=7, projection="perspective", fov_y=40)
    r = generate_ray(cam, 4, 3)
    assert np.max(np.abs(r.direction - [0, 0, -1])) <= 1e-9
    np.testing.assert_array_equal(r.origin, [1, 2, 9])
    with pytest.raises(ParameterError):
        generate_ray(cam, 9, 0)


def test_ray_box_example_with_bruteforce_scan():
    r = Ray((-1, 0.5, 0.5), (1, 0, 0))
    t = ray_box_intersect(r, ((0, 0, 0), (1, 1, 1)))
    assert t == pytest.approx((1.0, 2.0), abs=1e-12)
    ts = np.linspace(0, 4, 40001)
    pts = r.origin + ts[:, None] * r.direction
    inside = ts[np.all((pts >= 0) & (pts <= 1), axis=1)]
    assert inside.min() == pytest.approx(t[0], abs=1e-4)
    assert inside.max() == pytest.approx(t[1], abs=1e-4)


def test_ray_box_misses_and_clips():
    box = ((0, 0, 0), (1, 1, 1))
    assert ray_box_intersect(Ray((-1, 2, 0.5), (1, 0, 0)), box) is None
    assert ray_box_intersect(Ray((-1, 0.5, 0.5), (1, 0, 0)), box, ClipPlane((1, 0, 0), -0.5)) is None
    assert ray_box_intersect(Ray((-1, 0.5, 0.5), (1, 0, 0)), box, ClipPlane((1, 0, 0), 0.25)) == pytest.approx(
        (1.0, 1.25))
    assert ray_box_intersect(Ray((0.5, 0.5, 0.5), (0, 1, 0)), box) == pytest.approx((0.0, 0.5))
    with pytest.raises(ParameterError):
        ray_box_intersect(Ray((0, 0, 0), (1, 0, 0)), ((0, 0, 0), (0, 1, 1)))


@given(st.tuples(*[st.floats(-3, 3)] * 3), st.tuples(*[st.floats(-1, 1)] * 3))
def test_ray_box_interval_points_inside(o, d):
    if np.linalg.norm(d) < 1e-3:
        return
    r = Ray(o, d)
    t = ray_box_intersect(r, ((-1, -1, -1), (1, 1, 1)))
    if t is None:
        return
    assert t[0] >= 0
    for s in np.linspace(*t, 7):
        assert np.all(np.abs(r.at(s)) <= 1 + 1e-9)


@given(st.integers(0, 2**31), st.integers(0, 2**31), st.integers(0, 2**32 - 1), st.floats(1e-3, 4))
def test_jitter_deterministic_and_in_range(px, py, seed, d):
    a = jitter_offset(px, py, seed, d)
    assert a == jitter_offset(px, py, seed, d)
    assert 0 <= a < d


def test_jitter_uniform_chi_square():
    d = 0.7
    vals = np.array([jitter_offset(i % 400, i // 400, 3, d) for i in range(100_000)])
    counts, _ = np.histogram(vals, bins=16, range=(0, d))
    assert stats.chisquare(counts).pvalue > 0.01


def test_jitter_rejects_bad_length():
    with pytest.raises(ParameterError):
        jitter_offset(0, 0, 0, 0.0)


def test_composite_examples():
    rgb, a = composite_front_to_back([SegmentSample.from_straight((1, 0, 0), 1.0)])
    assert np.array_equal(rgb, [1, 0, 0]) and a == 1.0
    rgb, a = composite_front_to_back([SegmentSample((0, 0, 0), 0.0)] * 5)
    assert np.all(rgb == 0) and a == 0
    s = [SegmentSample.from_straight((1, 0, 0), 0.5), SegmentSample.from_straight((0, 1, 0), 0.5)]
    rgb, a = composite_front_to_back(s)
    np.testing.assert_allclose(rgb, [0.5, 0.25, 0.0], atol=1e-15)
    assert a == 0.75
    bf = composite_back_to_front([x.color for x in s], [x.alpha for x in s])
    np.testing.assert_allclose(bf[0], rgb, atol=1e-15)


sample_lists = st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1)),
                        max_size=30)


@given(sample_lists)
def test_front_to_back_matches_back_to_front(raw):
    samples = [SegmentSample.from_straight((r, g, b), a) for r, g, b, a in raw]
    rgb, a = composite_front_to_back(samples)
    bf_rgb, bf_a = composite_back_to_front([s.color for s in samples], [s.alpha for s in samples])
    assert np.max(np.abs(rgb - bf_rgb)) <= 1e-12 and abs(a - bf_a) <= 1e-12
    assert 0 <= a <= 1 and np.all(rgb <= a + 1e-12)


def test_settings_validation():
    for kw in ({"samples_per_voxel": 0}, {"early_termination": 1.0}, {"mip_level": -1},
               {"segment_mode": "both"}, {"boundary_mode": "zigzag"}):
        with pytest.raises(ParameterError):
            RenderSettings(**kw)
    s = RenderSettings(samples_per_voxel=4)
    assert s.segment_length == 0.25
    assert s.digest() == RenderSettings(samples_per_voxel=4.0, threads=3).digest()
    assert s.digest() != s.replace(seed=1).digest()


@pytest.mark.parametrize("kw", MODES, ids=lambda k: next(iter(k.values())).__str__())
def test_transparent_volume_every_mode(kw):
    vol = make_phantom(PhantomSpec("constant", interior_value=0.6), (8, 8, 8))
    tf = TransferFunction(np.tile([1.0, 1.0, 1.0, 0.0], (8, 1)))
    scene = Scene(vol, tf, build_preintegration_table(tf, resolution=4, steps=2),
                  prefilter_bspline_coefficients(vol))
    rgb, a = integrate_ray(scene, _x_ray(3, 3), 4.0, 11.7, RenderSettings(jitter=True, **kw))
    assert a == 0 and np.all(rgb == 0)


@pytest.mark.parametrize("spv", [1, 2, 3])
def test_whole_segments_unroll(homog, spv):
    scene = homog.scene
    d = 1.0 / spv
    m = 7
    rgb, a = integrate_ray(scene, _x_ray(), 2.0, 2.0 + m * d, RenderSettings(samples_per_voxel=spv))
    alpha = correct_opacity(0.02, 1.0, d)
    want = composite_front_to_back([SegmentSample.from_straight((0.8, 0.6, 0.4), alpha, d)] * m)
    np.testing.assert_allclose(rgb, want[0], atol=1e-12)
    assert a == pytest.approx(want[1], abs=1e-12)


def test_t_out_sweep_partial_continuous_truncate_stepwise(homog):
    spv = 2.0
    d = 1.0 / spv
    ends = 5.0 + 0.01 * np.arange(201)
    res = {}
    for mode in ("partial_segment", "truncate"):
        s = RenderSettings(samples_per_voxel=spv, boundary_mode=mode)
        res[mode] = np.array([integrate_ray(homog.scene, _x_ray(), 3.0, e, s)[1] for e in ends])
    slice_bound = correct_opacity(0.02, 1.0, 0.01) + 1e-9
    assert np.max(np.abs(np.diff(res["partial_segment"]))) <= slice_bound
    bins = np.floor((ends - 3.0) / d + 1e-9)
    tr = res["truncate"]
    for b in np.unique(bins):
        assert np.ptp(tr[bins == b]) == 0
    assert len(np.unique(tr)) == len(np.unique(bins))


def test_integrate_ray_interval_checked(homog):
    with pytest.raises(ParameterError):
        integrate_ray(homog.scene, _x_ray(), 3.0, 3.0, RenderSettings())


@given(st.floats(0.3, 6), st.integers(0, 1000))
def test_jitter_head_segment_corrected(homog, spv, seed):
    s = RenderSettings(samples_per_voxel=spv)
    base = integrate_ray(homog.scene, _x_ray(), 1.3, 12.9, s)
    jit = integrate_ray(homog.scene, _x_ray(), 1.3, 12.9, s.replace(jitter=True, seed=seed), px=5, py=2)
    np.testing.assert_allclose(jit[0], base[0], atol=1e-9)
    assert jit[1] == pytest.approx(base[1], abs=1e-9)


@given(st.floats(0.25, 4), st.floats(0.01, 0.9))
def test_adaptive_consistent_on_homogeneous(spv, theta):
    sc = homogeneous_scene(n=8, width=8, alpha=0.3).scene
    s = RenderSettings(samples_per_voxel=spv)
    a = integrate_ray(sc, _x_ray(4, 4), 0, 20, s)
    b = integrate_ray(sc, _x_ray(4, 4), 0, 20, s.replace(adaptive=True, subdivide_threshold=theta, max_depth=4))
    np.testing.assert_allclose(b[0], a[0], atol=1e-9)


def test_adaptive_refines_sharp_features():
    # one opaque voxel plane; coarse midpoints straddle it
    vol = make_phantom(PhantomSpec("slab", axis="x", slab_extent=(5.8, 6.2)), (16, 4, 4))
    tf = TransferFunction(np.array([[1, 1, 1, 0.0], [1, 1, 1, 0.9]]))
    sc = Scene(vol, tf)
    ray = Ray((-2, 1.5, 1.5), (1, 0, 0))
    ref = integrate_ray(sc, ray, 1.75, 17, RenderSettings(samples_per_voxel=256))[1]
    coarse = integrate_ray(sc, ray, 1.75, 17, RenderSettings())[1]
    fine = integrate_ray(sc, ray, 1.75, 17, RenderSettings(adaptive=True, subdivide_threshold=0.05, max_depth=6))[1]
    assert ref > 0.3
    assert abs(fine - ref) < abs(coarse - ref)


def test_render_looking_away_is_blank(homog):
    cam = Camera((8, 8, 100), (8, 8, 200), width=12, height=10, ortho_height=20)
    fb = render_frame(homog.scene, cam, RenderSettings())
    assert fb.rgba.shape == (10, 12, 4) and np.all(fb.rgba == 0)


def test_render_deterministic_and_bounded():
    st_ = sphere_scene(n=32, width=32)
    s = RenderSettings(jitter=True, seed=11, samples_per_voxel=1.5)
    a = render_frame(st_.scene, st_.camera, s).rgba
    b = render_frame(st_.scene, st_.camera, s).rgba
    assert np.array_equal(a, b)
    assert np.all((a[..., 3] >= 0) & (a[..., 3] <= 1))
    assert np.all(a[..., :3] <= a[..., 3:] + 1e-6)
    assert not np.array_equal(a, render_frame(st_.scene, st_.camera, s.replace(seed=12)).rgba)


@pytest.mark.parametrize("mode", ["single_sample", "preintegrated"])
def test_sphere_render_rotation_symmetric(mode):
    st_ = sphere_scene(n=32, width=32)
    img = render_frame(st_.scene, st_.camera, RenderSettings(segment_mode=mode, samples_per_voxel=2)).rgba
    assert img[..., 3].max() > 0.05
    assert np.max(np.abs(np.rot90(img) - img)) <= 1e-5


def test_render_configuration_errors(homog):
    sc = homog.scene
    with pytest.raises(ConfigurationError):
        render_frame(sc, homog.camera, RenderSettings(interpolation="tricubic"))
    with pytest.raises(ConfigurationError):
        render_frame(Scene(sc.volume, sc.tf), homog.camera, RenderSettings(segment_mode="preintegrated"))
    with pytest.raises(ConfigurationError):
        render_frame(Scene(sc.volume, None, sc.table), homog.camera, RenderSettings())
    with pytest.raises(ConfigurationError):
        render_frame(sc, homog.camera, RenderSettings(mip_level=1))
    pyr = Scene(build_mip_pyramid(sc.volume, 2), sc.tf)
    with pytest.raises(ConfigurationError):
        render_frame(pyr, homog.camera, RenderSettings(mip_level=2))
    bad = Scene(sc.volume, sc.tf, coeffs=prefilter_bspline_coefficients(make_phantom(PhantomSpec("constant"),
                                                                                       (4, 4, 4))))
    with pytest.raises(ConfigurationError):
        render_frame(bad, homog.camera, RenderSettings(interpolation="tricubic"))


def test_mip_level_render(homog):
    pyr = Scene(build_mip_pyramid(homog.scene.volume, 3), homog.scene.tf)
    fb0 = render_frame(pyr, homog.camera, RenderSettings()).rgba
    fb2 = render_frame(pyr, homog.camera, RenderSettings(mip_level=2)).rgba
    # constant scalar: coarser levels keep the optical depth per world unit
    c = homog.center
    assert fb2[int(c[1]), int(c[0]), 3] == pytest.approx(fb0[int(c[1]), int(c[0]), 3], abs=1e-9)


def test_anisotropic_spacing_marches_in_voxels():
    iso = homogeneous_scene(n=8, width=8, spacing=(1, 1, 1))
    ani = homogeneous_scene(n=8, width=8, spacing=(1, 1, 2))
    s = RenderSettings()
    c = (4, 4)
    a = render_frame(iso.scene, iso.camera, s).alpha[c]
    b = render_frame(ani.scene, ani.camera, s).alpha[c]
    # same voxel count along z: same opacity, zero-distance spacing does not leak in
    assert a == pytest.approx(b, abs=1e-12)


def test_ppm_and_pfm_export(tmp_path):
    fb = Framebuffer(np.zeros((2, 3, 4)))
    fb.rgba[0, 0] = [0.25, 0.125, 0.0, 0.5]
    fb.rgba[1, 2] = [0.3, 0.3, 0.3, 1.0]
    fb.write_ppm(tmp_path / "a.ppm")
    fb.write_pfm(tmp_path / "a.pfm")
    ppm = read_ppm(tmp_path / "a.ppm")
    assert np.round(ppm[0, 0] * 255).tolist() == [128, 64, 0]
    assert np.round(ppm[1, 2] * 255).tolist() == [math.floor(0.3 * 255 + 0.5)] * 3
    assert np.array_equal(read_pfm(tmp_path / "a.pfm"), fb.rgb.astype(np.float32).astype(np.float64))
    assert (tmp_path / "a.pfm").read_bytes().startswith(b"PF\n3 2\n-1.0\n")
