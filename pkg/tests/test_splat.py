import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aerialsplat.numcore import Tensor, grad_check, ops
from aerialsplat.splat import (Camera, CameraError, Gaussian, GaussianScene, RenderOptions, backproject,
                               gaussian_normal, gaussian_normals, look_at, project_gaussian, quat_to_rotmat,
                               render, render_reference, reproject)
from aerialsplat.splat.io import (load_scene, read_depth_pgm, read_normal_ppm, read_ppm, save_scene,
                                  write_depth_pgm, write_normal_ppm, write_ppm)


def identity_cam(w=32, h=32, f=40.0, **kw):
    return Camera(fx=f, fy=f, cx=w / 2, cy=h / 2, R=np.eye(3), T=np.zeros(3), width=w, height=h, **kw)


def random_scene(n, seed, spread=1.0):
    rng = np.random.default_rng(seed)
    means = rng.uniform(-spread, spread, (n, 3))
    means[:, 2] *= 0.5
    return GaussianScene(means, rng.uniform(-2.5, -1.0, (n, 3)), rng.normal(size=(n, 4)),
                         rng.normal(0, 2, n), rng.uniform(0, 1, (n, 3)))


def overhead_cam(size=64):
    return look_at([0.3, -0.2, 3.5], [0, 0, 0], up=(0, -1, 0), width=size, height=size, fov_deg=50)


def test_camera_validation():
    with pytest.raises(CameraError):
        identity_cam(near=1.0, far=0.5)
    with pytest.raises(CameraError):
        Camera(fx=1, fy=1, cx=0, cy=0, R=np.diag([1.0, 1.0, 1.1]), T=np.zeros(3), width=4, height=4)


def test_project_on_axis_isotropic():
    cam = identity_cam()
    z, s = 4.0, 0.1
    g = Gaussian(np.array([0, 0, z]), np.log([s, s, s]), np.array([1.0, 0, 0, 0]), 0.0, np.zeros(3))
    sp = project_gaussian(g, cam)
    np.testing.assert_allclose(sp.mean2d, [cam.cx, cam.cy])
    np.testing.assert_allclose(sp.cov2d, np.diag([(cam.fx * s / z) ** 2, (cam.fy * s / z) ** 2]) + 0.3 * np.eye(2),
                               rtol=1e-12)
    assert sp.camera_depth == z


def test_project_culls_outside_depth_range():
    cam = identity_cam(near=0.5)
    g = Gaussian(np.array([0, 0, 0.4]), np.zeros(3), np.array([1.0, 0, 0, 0]), 0.0, np.zeros(3))
    assert project_gaussian(g, cam) is None
    g.mean = np.array([0, 0, -2.0])
    assert project_gaussian(g, cam) is None


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_projected_covariance_has_blur_floor(seed):
    rng = np.random.default_rng(seed)
    g = Gaussian(np.r_[rng.uniform(-1, 1, 2), rng.uniform(1, 5)], rng.uniform(-5, 1, 3), rng.normal(size=4),
                 0.0, np.zeros(3))
    cov = project_gaussian(g, identity_cam()).cov2d
    assert np.linalg.eigvalsh(cov).min() >= 0.3 - 1e-9


def test_empty_pixels_are_black_and_invalid():
    scene = GaussianScene([[0, 0, 4.0]], np.log([[0.05] * 3]), [[1, 0, 0, 0]], [3.0], [[1, 1, 1]])
    out = render(scene, identity_cam())
    assert out.alpha.data[0, 0] == 0
    np.testing.assert_array_equal(out.rgb.data[0, 0], 0)
    assert not out.valid[0, 0]
    np.testing.assert_array_equal(out.normal.data[0, 0], 0)


def test_single_opaque_splat_depth_and_alpha():
    scene = GaussianScene([[0, 0, 5.0]], np.log([[10.0, 10.0, 0.01]]), [[1, 0, 0, 0]], [40.0], [[0.2, 0.4, 0.6]])
    out = render(scene, identity_cam())
    c = (16, 16)
    assert out.alpha.data[c] >= 0.99
    assert abs(out.depth.data[c] - 5.0) < 1e-3
    np.testing.assert_allclose(out.normal.data[c], [0, 0, -1], atol=1e-12)


def test_single_splat_matches_closed_form():
    cam = identity_cam(16, 16)
    g = Gaussian(np.array([0.1, -0.05, 3.0]), np.log([0.2, 0.1, 0.05]), np.array([0.9, 0.1, 0.2, 0.3]), 0.4,
                 np.array([0.3, 0.6, 0.9]))
    out = render_reference(GaussianScene.from_gaussians([g]), cam)
    sp = project_gaussian(g, cam)
    conic = np.linalg.inv(sp.cov2d)
    ys, xs = np.mgrid[0:16, 0:16]
    d = np.stack([xs - sp.mean2d[0], ys - sp.mean2d[1]], -1)
    a = g.opacity * np.exp(-0.5 * np.einsum("hwi,ij,hwj->hw", d, conic, d))
    np.testing.assert_allclose(out.alpha.data, a, atol=1e-14)
    np.testing.assert_allclose(out.rgb.data, a[..., None] * g.color, atol=1e-14)


def test_equal_depth_tie_broken_by_index():
    cam = identity_cam(8, 8)
    base = dict(log_scales=np.log([[0.5] * 3] * 2), rotations=[[1, 0, 0, 0]] * 2, opacity_logits=[1.0, 1.0])
    red_first = GaussianScene([[0, 0, 3.0], [0, 0, 3.0]], colors=[[1, 0, 0], [0, 0, 1]], **base)
    blue_first = GaussianScene([[0, 0, 3.0], [0, 0, 3.0]], colors=[[0, 0, 1], [1, 0, 0]], **base)
    a = render(red_first, cam).rgb.data[4, 4]
    b = render(blue_first, cam).rgb.data[4, 4]
    assert a[0] > a[2] and b[2] > b[0]
    np.testing.assert_array_equal(a, render_reference(red_first, cam).rgb.data[4, 4])


@pytest.mark.parametrize("seed", range(4))
def test_render_matches_reference(seed):
    scene, cam = random_scene(200, seed), overhead_cam()
    fast = render(scene, cam)
    ref = render_reference(scene, cam, match_thresholds=True)
    for name in ("rgb", "depth", "alpha", "normal", "s_min"):
        assert np.abs(getattr(fast, name).data - getattr(ref, name).data).max() <= 1e-6
    np.testing.assert_array_equal(fast.valid, ref.valid)


def test_thresholds_only_change_result_slightly():
    scene, cam = random_scene(100, 7), overhead_cam(32)
    exact = render_reference(scene, cam)
    fast = render(scene, cam)
    assert np.abs(exact.rgb.data - fast.rgb.data).max() < 0.05


def test_degenerate_covariance_is_skipped_and_counted():
    scene = GaussianScene([[0, 0, 3.0], [0.1, 0, 3.0]], [[-1, -1, -1], [-1, -1, -1]], [[1, 0, 0, 0]] * 2,
                          [0.0, 0.0], [[1, 1, 1]] * 2)
    opts = RenderOptions(blur=0.0)
    scene.log_scales.data[1] = [-40, -40, -40]
    out = render(scene, identity_cam(), opts)
    assert out.diagnostics["degenerate"] == 1
    assert render_reference(scene, identity_cam(), opts).diagnostics["degenerate"] == 1


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_adding_a_primitive_never_lowers_alpha(seed):
    scene = random_scene(12, seed)
    cam = overhead_cam(24)
    extra = random_scene(1, seed + 1)
    bigger = GaussianScene(*(np.concatenate([a.data, b.data]) for a, b in zip(scene.fields(), extra.fields())))
    opts = RenderOptions().exact()
    before = render(scene, cam, opts).alpha.data
    after = render(bigger, cam, opts).alpha.data
    assert np.all(after >= before - 1e-15)


def test_pose_equivariance():
    scene, cam = random_scene(50, 3), overhead_cam(32)
    rng = np.random.default_rng(0)
    q = rng.normal(size=4)
    rot = quat_to_rotmat(q)
    trans = rng.normal(size=3)
    moved = scene.transformed(rot, trans)
    moved_cam = Camera(cam.fx, cam.fy, cam.cx, cam.cy, cam.R @ rot.T, cam.T - cam.R @ rot.T @ trans,
                       cam.width, cam.height, cam.near, cam.far)
    a, b = render(scene, cam), render(moved, moved_cam)
    for name in ("rgb", "depth", "alpha", "normal"):
        assert np.abs(getattr(a, name).data - getattr(b, name).data).max() < 1e-9


def test_render_gradients_all_fields():
    cam = look_at([0.1, -0.2, 3.0], [0, 0, 0], up=(0, -1, 0), width=16, height=16, fov_deg=50)
    base = random_scene(6, 1)
    opts = RenderOptions().exact()

    def f(m, ls, q, o, c):
        out = render(GaussianScene(m, ls + 1.0, q, o, c), cam, opts)
        return ops.concat([out.rgb.reshape(-1), out.depth.reshape(-1), out.alpha.reshape(-1)], axis=0)

    inputs = [Tensor(t.data) for t in base.fields()]
    assert grad_check(f, inputs, eps=1e-6) <= 1e-4


def test_gaussian_normal_examples():
    disc = Gaussian(np.zeros(3), np.array([0, 0, -3.0]), np.array([1.0, 0, 0, 0]), 0.0, np.zeros(3))
    assert abs(abs(gaussian_normal(disc)[2]) - 1) < 1e-12
    iso = Gaussian(np.zeros(3), np.zeros(3), np.array([1.0, 0, 0, 0]), 0.0, np.zeros(3))
    np.testing.assert_allclose(np.abs(gaussian_normal(iso)), [1, 0, 0])
    q = np.array([0.8, 0.2, -0.4, 0.3])
    disc.rotation = q
    n = gaussian_normal(disc)
    expected = quat_to_rotmat(q) @ np.array([0, 0, 1.0])
    assert min(np.abs(n - expected).max(), np.abs(n + expected).max()) < 1e-12
    cam = identity_cam()
    disc.mean = np.array([0, 0, 4.0])
    assert np.dot(gaussian_normal(disc, cam), cam.center - disc.mean) > 0


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=4, max_size=4).filter(lambda v: np.linalg.norm(v) > 1e-3),
       st.lists(st.floats(-4, 1), min_size=3, max_size=3))
def test_gaussian_normal_unit_length(q, ls):
    n = gaussian_normals(np.array([q]), np.array([ls]))[0]
    assert abs(np.linalg.norm(n) - 1) < 1e-12


def test_backproject_reproject_examples():
    cam = identity_cam(16, 12)
    depth = np.full((12, 16), 3.0)
    pts, ok = backproject(depth, cam)
    np.testing.assert_allclose(pts[6, 8], [0, 0, 3.0])
    assert ok.all()
    cam2 = look_at([1, 2, 5], [0, 0, 0], width=16, height=12)
    rng = np.random.default_rng(0)
    depth = rng.uniform(1, 4, (12, 16))
    depth[0, 0] = -1
    pts, ok = backproject(depth, cam2)
    assert not ok[0, 0]
    rep = reproject(pts.reshape(-1, 3), cam2)
    ys, xs = np.mgrid[0:12, 0:16]
    pix = np.stack([xs, ys], -1).reshape(-1, 2)
    assert np.abs(rep.pixel - pix)[ok.reshape(-1)].max() < 1e-9
    assert reproject(np.array([0, 0, -1.0]), cam).behind
    np.testing.assert_allclose(reproject(np.array([0, 0, 2.0]), cam).pixel, [cam.cx, cam.cy])


def test_backprojected_plane_is_planar():
    cam = look_at([0.5, -1.0, 4.0], [0, 0, 0], width=20, height=20)
    # analytic depth of the ground plane z=0 along each pixel ray
    ys, xs = np.mgrid[0:20, 0:20].astype(float)
    rays_cam = np.stack([(xs - cam.cx) / cam.fx, (ys - cam.cy) / cam.fy, np.ones_like(xs)], -1)
    rays_world = rays_cam @ cam.R
    depth = -cam.center[2] / rays_world[..., 2]
    pts, ok = backproject(depth, cam)
    assert np.abs(pts[..., 2]).max() < 1e-9


def test_scene_file_round_trip(tmp_path):
    scene = random_scene(30, 2)
    save_scene(tmp_path / "s.splat", scene)
    header = (tmp_path / "s.splat").read_bytes().split(b"\n", 1)[0].decode()
    assert header.endswith("opacity f_dc_0 f_dc_1 f_dc_2")
    loaded = load_scene(tmp_path / "s.splat")
    save_scene(tmp_path / "t.splat", loaded)
    assert (tmp_path / "s.splat").read_bytes() == (tmp_path / "t.splat").read_bytes()
    np.testing.assert_allclose(loaded.means.data, scene.means.data, atol=1e-6)
    np.testing.assert_allclose(loaded.colors.data, scene.colors.data, atol=1e-6)


def test_image_files_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, (5, 7, 3)) / 255.0
    write_ppm(tmp_path / "a.ppm", img)
    np.testing.assert_array_equal(read_ppm(tmp_path / "a.ppm"), img)
    depth = rng.uniform(0, 9, (5, 7))
    scale = write_depth_pgm(tmp_path / "d.pgm16", depth)
    assert np.abs(read_depth_pgm(tmp_path / "d.pgm16") - depth).max() <= scale / 2 + 1e-12
    n = rng.normal(size=(5, 7, 3))
    n /= np.linalg.norm(n, axis=-1, keepdims=True)
    write_normal_ppm(tmp_path / "n.ppm", n)
    assert np.abs(read_normal_ppm(tmp_path / "n.ppm") - n).max() <= 1 / 255 + 1e-12
