import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aerialsplat.diagnostics import (INVALID, OBSERVED, WEAK, DiagThresholds, RegionMask, absrel, classify_regions,
                                     delta1, psnr, region_metrics, ssim, write_metrics_csv, write_region_ppm)
from aerialsplat.scenegen import FACADE, ROOF, CityConfig, build_layout, cast_camera
from aerialsplat.splat import look_at
from aerialsplat.splat.io import read_ppm

CONTEXT = [1, 5, 9, 13]


def nadir(x, y=0.0, h=2.0, size=32):
    return look_at([x, y, h], [x, y, 0.0], up=(0, 1, 0), width=size, height=size, fov_deg=50)


# -- metrics -----------------------------------------------------------------------

def test_metric_examples():
    rng = np.random.default_rng(0)
    img = rng.uniform(0.2, 0.8, (16, 16, 3))
    assert psnr(img, img) == 99.0
    assert ssim(img, img) == 1.0
    assert abs(psnr(img + 0.1, img) - 20.0) <= 1e-9
    ref = rng.uniform(1, 5, (8, 8))
    assert delta1(1.3 * ref, ref) == 0.0
    assert abs(absrel(1.3 * ref, ref) - 0.3) <= 1e-12


def test_empty_masks_are_absent():
    img = np.zeros((12, 12, 3))
    none = np.zeros((12, 12), bool)
    assert psnr(img, img, none) is None
    assert ssim(img, img, none) is None
    assert delta1(np.ones((4, 4)), np.zeros((4, 4))) is None
    assert absrel(np.ones((4, 4)), np.ones((4, 4)), np.zeros((4, 4), bool)) is None


def _psnr_loop(a, b, m):
    total, count = 0.0, 0
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            if m[i, j]:
                for c in range(a.shape[2]):
                    total += (a[i, j, c] - b[i, j, c]) ** 2
                    count += 1
    return 10 * np.log10(count / total)


def _ssim_loop(a, b, m, size=11, sigma=1.5):
    x = np.arange(size) - (size - 1) / 2
    k = np.exp(-(x[:, None] ** 2 + x[None, :] ** 2) / (2 * sigma ** 2))
    k /= k.sum()
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    half = size // 2
    vals = []
    for i in range(half, a.shape[0] - half):
        for j in range(half, a.shape[1] - half):
            if not m[i, j]:
                continue
            per = []
            for c in range(a.shape[2]):
                pa = a[i - half:i + half + 1, j - half:j + half + 1, c]
                pb = b[i - half:i + half + 1, j - half:j + half + 1, c]
                ma, mb = (k * pa).sum(), (k * pb).sum()
                va = (k * (pa - ma) ** 2).sum()
                vb = (k * (pb - mb) ** 2).sum()
                cov = (k * (pa - ma) * (pb - mb)).sum()
                per.append((2 * ma * mb + c1) * (2 * cov + c2) / ((ma ** 2 + mb ** 2 + c1) * (va + vb + c2)))
            vals.append(np.mean(per))
    return float(np.mean(vals))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_metrics_match_second_code_path(seed):
    rng = np.random.default_rng(seed)
    a = rng.uniform(size=(14, 15, 3))
    b = np.clip(a + rng.normal(0, 0.1, a.shape), 0, 1)
    m = rng.uniform(size=(14, 15)) < 0.7
    assert abs(psnr(a, b, m) - _psnr_loop(a, b, m)) <= 1e-9
    assert abs(ssim(a, b, m) - _ssim_loop(a, b, m)) <= 1e-9
    d = rng.uniform(1, 4, (6, 6))
    p = d * rng.uniform(0.7, 1.4, d.shape)
    dm = rng.uniform(size=d.shape) < 0.8
    ratio = [max(x / y, y / x) for x, y in zip(p[dm], d[dm])]
    assert abs(delta1(p, d, dm) - np.mean(np.array(ratio) < 1.25)) <= 1e-9
    assert abs(absrel(p, d, dm) - np.mean([abs(x - y) / y for x, y in zip(p[dm], d[dm])])) <= 1e-9


def test_region_metrics():
    rng = np.random.default_rng(0)
    gt = rng.uniform(size=(8, 8, 3))
    labels = rng.choice([INVALID, OBSERVED, WEAK], (8, 8))
    regions = RegionMask(labels, np.zeros((8, 8), int), np.zeros((8, 8)))
    same = region_metrics(gt, gt, regions)
    assert same["obs_psnr"] == same["weak_psnr"] == 99.0
    assert same["obs_count"] + same["weak_count"] == (labels != INVALID).sum()
    noisy = gt.copy()
    noisy[labels == WEAK] += 0.05
    out = region_metrics(noisy, gt, regions)
    assert out["obs_psnr"] == 99.0 and out["weak_psnr"] < 99.0
    empty = RegionMask(np.full((8, 8), OBSERVED), np.zeros((8, 8), int), np.zeros((8, 8)))
    assert "weak_psnr" not in region_metrics(gt, gt, empty)


# -- classification -----------------------------------------------------------------

def test_two_nadir_views_with_parallax_observe_the_plane():
    h = 2.0
    target = nadir(0.0, h=h)
    ctx = [nadir(-0.2, h=h), nadir(0.2, h=h)]
    depth = np.full((32, 32), h)
    rm = classify_regions(depth, target, [depth, depth], ctx)
    c = (16, 16)
    assert rm.labels[c] == OBSERVED
    assert rm.count[c] == 2
    np.testing.assert_allclose(rm.parallax[c], 2 * np.arctan(0.1), rtol=1e-12)


def test_occluded_point_is_weak():
    target = nadir(0.0)
    ctx = [nadir(-0.2), nadir(0.2)]
    # every context view sees something 1 m in front of the target's surface
    rm = classify_regions(np.full((32, 32), 2.0), target, [np.full((32, 32), 1.0)] * 2, ctx)
    assert np.all(rm.labels == WEAK) and np.all(rm.count == 0)


def test_no_context_and_invalid_depth():
    depth = np.full((32, 32), 2.0)
    depth[:4] = 0.0
    depth[4, 4] = np.nan
    rm = classify_regions(depth, nadir(0.0), [], [])
    assert np.all(rm.labels[:4] == INVALID) and rm.labels[4, 4] == INVALID
    assert np.all(rm.labels[5:] == WEAK)


def test_depth_discontinuity_forces_weak():
    target = nadir(0.0)
    ctx = [nadir(-0.2), nadir(0.2)]
    depth = np.full((32, 32), 2.0)
    rm = classify_regions(depth, target, [depth, depth], ctx)
    step = depth.copy()
    step[:, 16:] = 1.9
    rs = classify_regions(step, target, [step, step], ctx)
    assert rm.labels[10, 15] == OBSERVED and rs.labels[10, 15] == WEAK and rs.labels[10, 16] == WEAK


def test_thresholds_validated():
    with pytest.raises(ValueError):
        DiagThresholds(tau_par=0.0)
    with pytest.raises(ValueError):
        DiagThresholds(margin=-1)


@pytest.fixture(scope="module")
def default_regions(default_bundle):
    b = default_bundle
    return {t: classify_regions(b.depths[t], b.cameras[t], [b.depths[i] for i in CONTEXT],
                                [b.cameras[i] for i in CONTEXT]) for t in b.target}


def test_labels_partition_valid_pixels(default_bundle, default_regions):
    th = DiagThresholds()
    for t, rm in default_regions.items():
        valid = default_bundle.depths[t] > 0
        assert np.array_equal(rm.labels != INVALID, valid)
        obs = rm.labels == OBSERVED
        assert np.all(rm.count[obs] >= 2) and np.all(rm.parallax[obs] >= th.tau_par)
        assert ((rm.labels == OBSERVED) | (rm.labels == WEAK)).sum() == valid.sum()


def test_raising_parallax_threshold_never_adds_observed(default_bundle):
    b = default_bundle
    t = b.target[0]
    prev = None
    for tau in (0.01, 0.05, 0.1, 0.2, 0.4):
        rm = classify_regions(b.depths[t], b.cameras[t], [b.depths[i] for i in CONTEXT],
                              [b.cameras[i] for i in CONTEXT], DiagThresholds(tau_par=tau))
        obs = rm.labels == OBSERVED
        if prev is not None:
            assert not np.any(obs & ~prev)
        prev = obs


def test_facades_are_weaker_than_roofs(default_bundle, default_regions):
    layout = build_layout(CityConfig())
    weak = {ROOF: [0, 0], FACADE: [0, 0]}
    for t, rm in default_regions.items():
        hits = cast_camera(layout, default_bundle.cameras[t])
        for label in weak:
            m = (hits.label == label) & (rm.labels != INVALID)
            weak[label][0] += (rm.labels[m] == WEAK).sum()
            weak[label][1] += m.sum()
    assert weak[FACADE][1] > 0 and weak[ROOF][1] > 0
    assert weak[FACADE][0] / weak[FACADE][1] > weak[ROOF][0] / weak[ROOF][1]


# -- export ------------------------------------------------------------------------

def test_region_ppm_colors(tmp_path):
    labels = np.array([[INVALID, OBSERVED], [WEAK, OBSERVED]])
    write_region_ppm(tmp_path / "r.ppm", RegionMask(labels, np.zeros((2, 2), int), np.zeros((2, 2))))
    img = read_ppm(tmp_path / "r.ppm")
    np.testing.assert_array_equal(img[0, 0], [0, 0, 0])
    np.testing.assert_array_equal(img[0, 1], [0, 1, 0])
    np.testing.assert_array_equal(img[1, 0], [1, 0, 0])


def test_metrics_csv_and_sidecar(tmp_path):
    rows = [{"scene": "a", "view": 0, "psnr": 21.5, "weak_psnr": None}, {"scene": "a", "view": 8, "psnr": 19.0}]
    write_metrics_csv(tmp_path / "m.csv", rows, meta={"thresholds": DiagThresholds().to_dict()})
    with open(tmp_path / "m.csv") as fh:
        got = list(csv.DictReader(fh))
    assert got[0]["weak_psnr"] == "" and got[1]["psnr"] == "19.0"
    meta = json.loads((tmp_path / "m.csv.json").read_text())
    assert meta["thresholds"]["tau_occ"] == 0.03
