import math

import numpy as np
import pytest

from textcount.augment import (AugmentConfig, SourceSample, TrainSample,
                               add_gaussian_noise, apply_affine,
                               apply_pipeline, augment_sample,
                               build_affine_matrix, color_jitter,
                               gaussian_blur, hflip, mosaic4,
                               random_square_crop)
from textcount.errors import ConfigurationError

from conftest import random_image, seeded_rng


def _sample(rng, size=64, n_points=10, description="the things"):
    img = random_image(rng, size, size)
    pts = rng.uniform(0, size - 1, (n_points, 2))
    return TrainSample(img, pts, description)


# -- config ------------------------------------------------------------------

def test_branch_probabilities_must_sum_to_one():
    with pytest.raises(ConfigurationError):
        AugmentConfig(p_pipeline_given_augment=0.5, p_mosaic_given_augment=0.6)


def test_probability_bounds_validated():
    with pytest.raises(ConfigurationError):
        AugmentConfig(p_augment=1.5)


def test_config_dict_roundtrip():
    cfg = AugmentConfig(noise_std=0.2, blur_kernel=(5, 5))
    assert AugmentConfig.from_dict(cfg.to_dict()) == cfg


# -- square crop -------------------------------------------------------------

def test_crop_identity_when_already_square_and_sized():
    rng = seeded_rng(0)
    img = random_image(rng, 64, 64)
    pts = np.array([[3.0, 5.0], [60.0, 62.0]])
    out_img, out_pts = random_square_crop(img, pts, 64, rng)
    np.testing.assert_array_equal(out_img, img)
    np.testing.assert_allclose(out_pts, pts)


def test_crop_downscale_halves_coordinates():
    rng = seeded_rng(1)
    img = random_image(rng, 128, 128)
    pts = np.array([[40.0, 80.0], [10.0, 10.0]])
    _, out_pts = random_square_crop(img, pts, 64, rng)
    np.testing.assert_allclose(out_pts, pts / 2.0)


def test_crop_keeps_only_points_inside_window():
    rng = seeded_rng(2)
    img = random_image(rng, 40, 200)        # wide: many horizontal offsets
    pts = np.array([[x, 20.0] for x in np.linspace(0, 199, 40)])
    for _ in range(20):
        out_img, out_pts = random_square_crop(img, pts, 40, rng)
        assert out_img.shape == (40, 40, 3)
        assert len(out_pts) <= len(pts)
        if len(out_pts):
            assert out_pts.min() >= 0.0
            assert out_pts.max() < 40.0


def test_crop_deterministic_under_seed():
    img = random_image(seeded_rng(3), 100, 160)
    pts = seeded_rng(4).uniform(0, 99, (30, 2))
    a_img, a_pts = random_square_crop(img, pts, 64, seeded_rng(5))
    b_img, b_pts = random_square_crop(img, pts, 64, seeded_rng(5))
    np.testing.assert_array_equal(a_img, b_img)
    np.testing.assert_array_equal(a_pts, b_pts)


# -- affine oracle -----------------------------------------------------------

def test_affine_matrix_matches_manual_composition():
    """The 2x3 matrix must equal the explicit rotate/shear/scale-about-
    center-then-translate composition applied point by point."""
    rng = seeded_rng(6)
    for _ in range(20):
        angle = rng.uniform(-15, 15)
        scale = rng.uniform(0.8, 1.2)
        tx, ty = rng.uniform(-10, 10, 2)
        shx, shy = rng.uniform(-10, 10, 2)
        size = 64
        m = build_affine_matrix(angle, scale, tx, ty, shx, shy, size)
        theta = math.radians(angle)
        rot = np.array([[math.cos(theta), -math.sin(theta)],
                        [math.sin(theta), math.cos(theta)]])
        shear = np.array([[1.0, math.tan(math.radians(shx))],
                          [math.tan(math.radians(shy)), 1.0]])
        center = np.array([31.5, 31.5])
        p = rng.uniform(0, 63, 2)
        expected = scale * rot @ shear @ (p - center) + center + np.array([tx, ty])
        got = m[:, :2] @ p + m[:, 2]
        np.testing.assert_allclose(got, expected, atol=1e-9)


def test_identity_affine_is_identity():
    m = build_affine_matrix(0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 64)
    np.testing.assert_allclose(m, [[1, 0, 0], [0, 1, 0]], atol=1e-12)


def test_affine_moves_pixels_and_dots_together():
    """A bright blob centered on a dot must land (to pixel accuracy) on the
    transformed dot position."""
    img = np.zeros((64, 64, 3), dtype=np.float32)
    dot = np.array([20.0, 28.0])
    img[26:31, 18:23] = 1.0                  # 5x5 blob centered on (20, 28)
    m = build_affine_matrix(10.0, 1.1, 5.0, -3.0, 4.0, -2.0, 64)
    warped, moved = apply_affine(img, dot[None], m)
    assert len(moved) == 1
    ys, xs = np.nonzero(warped[:, :, 0] > 0.5)
    centroid = np.array([xs.mean(), ys.mean()])
    np.testing.assert_allclose(centroid, moved[0], atol=1.5)


def test_affine_drops_out_of_bounds_dots():
    img = np.zeros((64, 64, 3), dtype=np.float32)
    pts = np.array([[2.0, 2.0], [32.0, 32.0]])
    m = build_affine_matrix(0.0, 1.0, -20.0, 0.0, 0.0, 0.0, 64)    # shift left
    _, moved = apply_affine(img, pts, m)
    assert len(moved) == 1
    np.testing.assert_allclose(moved[0], [12.0, 32.0])


def test_hflip_mirrors_pixels_and_dots():
    rng = seeded_rng(7)
    img = random_image(rng, 32, 32).astype(np.float32) / 255.0
    pts = np.array([[5.0, 7.0], [30.0, 1.0]])
    out_img, out_pts = hflip(img, pts)
    np.testing.assert_array_equal(out_img, img[:, ::-1])
    np.testing.assert_allclose(out_pts[:, 0], [26.0, 1.0])
    np.testing.assert_allclose(out_pts[:, 1], pts[:, 1])


# -- photometric stages ------------------------------------------------------

def test_noise_stays_in_range_and_deterministic():
    img = random_image(seeded_rng(8), 32, 32).astype(np.float32) / 255.0
    a = add_gaussian_noise(img, seeded_rng(9), 0.1)
    b = add_gaussian_noise(img, seeded_rng(9), 0.1)
    np.testing.assert_array_equal(a, b)
    assert a.min() >= 0.0 and a.max() <= 1.0
    assert not np.array_equal(a, img)


def test_color_jitter_bounds_and_determinism():
    cfg = AugmentConfig()
    img = random_image(seeded_rng(10), 32, 32).astype(np.float32) / 255.0
    a = color_jitter(img, seeded_rng(11), cfg)
    b = color_jitter(img, seeded_rng(11), cfg)
    np.testing.assert_array_equal(a, b)
    assert a.min() >= 0.0 and a.max() <= 1.0


def test_blur_preserves_constant_image():
    cfg = AugmentConfig()
    img = np.full((32, 32, 3), 0.25, dtype=np.float32)
    out = gaussian_blur(img, seeded_rng(12), cfg)
    np.testing.assert_allclose(out, img, atol=1e-6)


# -- pipeline ----------------------------------------------------------------

def test_pipeline_deterministic_under_seed():
    cfg = AugmentConfig(p_stage=0.9)
    sample = _sample(seeded_rng(13))
    a = apply_pipeline(sample, cfg, seeded_rng(14))
    b = apply_pipeline(sample, cfg, seeded_rng(14))
    np.testing.assert_array_equal(a.image, b.image)
    np.testing.assert_array_equal(a.points, b.points)
    assert a.description == b.description


def test_pipeline_dots_always_inside():
    cfg = AugmentConfig(p_stage=0.9)
    rng = seeded_rng(15)
    for _ in range(30):
        out = apply_pipeline(_sample(rng), cfg, rng)
        assert out.image.shape == (64, 64, 3)
        assert out.image.dtype == np.uint8
        if len(out.points):
            assert out.points.min() >= 0.0
            assert out.points.max() < 64.0


def test_pipeline_stage_order_fixed_in_trace():
    cfg = AugmentConfig(p_stage=1.0)
    trace = []
    apply_pipeline(_sample(seeded_rng(16)), cfg, seeded_rng(17), trace=trace)
    names = [name for name, _ in trace]
    assert names == ["noise", "jitter", "blur", "affine", "flip"]


def test_pipeline_stage_rate_near_nominal():
    cfg = AugmentConfig()
    rng = seeded_rng(18)
    sample = _sample(seeded_rng(19))
    hits = {"noise": 0, "jitter": 0, "blur": 0, "affine": 0, "flip": 0}
    n = 2000
    for _ in range(n):
        trace = []
        apply_pipeline(sample, cfg, rng, trace=trace)
        for name, _ in trace:
            hits[name] += 1
    for name, count in hits.items():
        assert abs(count / n - 0.15) < 0.03, (name, count / n)


# -- mosaic ------------------------------------------------------------------

def test_mosaic_rejects_wrong_source_count():
    cfg = AugmentConfig()
    rng = seeded_rng(20)
    with pytest.raises(ConfigurationError, match="4"):
        mosaic4([_sample(rng)] * 3, 0, cfg, rng)


def test_mosaic_rejects_odd_size():
    cfg = AugmentConfig()
    rng = seeded_rng(21)
    samples = [_sample(rng, size=63) for _ in range(4)]
    with pytest.raises(ConfigurationError, match="even"):
        mosaic4(samples, 0, cfg, rng)


def test_mosaic_rejects_mixed_sizes():
    cfg = AugmentConfig()
    rng = seeded_rng(22)
    samples = [_sample(rng, size=64) for _ in range(3)] + [_sample(rng, size=32)]
    with pytest.raises(ConfigurationError, match="share"):
        mosaic4(samples, 0, cfg, rng)


def test_mosaic_additivity_same_image():
    """Output dot count must equal the sum over quadrants of the dots each
    random crop core contains (geometric oracle from the trace)."""
    cfg = AugmentConfig()
    rng = seeded_rng(23)
    for trial in range(10):
        sample = _sample(seeded_rng(100 + trial), n_points=80)
        trace = []
        out = mosaic4([sample] * 4, 0, cfg, rng, trace=trace)
        crops = dict(trace)["mosaic_crops"]
        half = 32
        expected = 0
        for cx, cy in crops:
            inside = ((sample.points[:, 0] >= cx) & (sample.points[:, 0] < cx + half) &
                      (sample.points[:, 1] >= cy) & (sample.points[:, 1] < cy + half))
            expected += int(inside.sum())
        assert len(out.points) == expected
        if len(out.points):
            assert out.points.min() >= 0.0
            assert out.points.max() < 64.0


def test_mosaic_keeps_dots_only_for_matching_description():
    cfg = AugmentConfig()
    rng = seeded_rng(24)
    dense = TrainSample(np.zeros((64, 64, 3), np.uint8),
                        np.array([[x, y] for x in range(2, 62, 4) for y in range(2, 62, 4)],
                                 dtype=np.float64),
                        "the apples")
    other = TrainSample(np.zeros((64, 64, 3), np.uint8),
                        dense.points.copy(), "the bananas")
    out = mosaic4([dense, other, other, other], 0, cfg, rng)
    assert out.description == "the apples"
    # only the pivot quadrant may contribute, so at most one core's worth
    assert 0 < len(out.points) <= len(dense.points)
    trace = []
    out2 = mosaic4([dense, dense, other, dense], 0, cfg, rng, trace=trace)
    crops = dict(trace)["mosaic_crops"]
    half = 32
    expected = 0
    for i, (cx, cy) in enumerate(crops):
        if i == 2:      # the bananas quadrant contributes nothing
            continue
        pts = dense.points
        inside = ((pts[:, 0] >= cx) & (pts[:, 0] < cx + half) &
                  (pts[:, 1] >= cy) & (pts[:, 1] < cy + half))
        expected += int(inside.sum())
    assert len(out2.points) == expected


def test_mosaic_quadrant_interiors_keep_their_source():
    cfg = AugmentConfig()
    rng = seeded_rng(25)
    colors = [40, 90, 160, 220]
    samples = [TrainSample(np.full((64, 64, 3), c, np.uint8),
                           np.zeros((0, 2)), "the squares") for c in colors]
    out = mosaic4(samples, 0, cfg, rng)
    # the blend zone spans 16 px either side of each seam, so probe the
    # pure corners of each quadrant
    corners = [(8, 8), (8, 56), (56, 8), (56, 56)]       # (y, x) per quadrant
    for (cy, cx), color in zip(corners, colors):
        assert int(out.image[cy, cx, 0]) == color


def test_mosaic_seam_blends_between_sources():
    cfg = AugmentConfig()
    rng = seeded_rng(26)
    left = TrainSample(np.full((64, 64, 3), 0, np.uint8), np.zeros((0, 2)), "the x")
    right = TrainSample(np.full((64, 64, 3), 200, np.uint8), np.zeros((0, 2)), "the x")
    out = mosaic4([left, right, left, right], 0, cfg, rng)
    row = out.image[16, :, 0].astype(int)
    assert row[8] == 0 and row[56] == 200    # outside the 32 px blend zone
    # the columns straddling the vertical seam mix both sources
    seam = row[30:34]
    assert seam.min() > 0 and seam.max() < 200
    # and the mix strengthens monotonically toward the other side
    blend = row[16:48]
    assert all(b2 >= b1 for b1, b2 in zip(blend, blend[1:]))


def test_mosaic_deterministic_under_seed():
    cfg = AugmentConfig()
    sample = _sample(seeded_rng(27), n_points=40)
    a = mosaic4([sample] * 4, 0, cfg, seeded_rng(28))
    b = mosaic4([sample] * 4, 0, cfg, seeded_rng(28))
    np.testing.assert_array_equal(a.image, b.image)
    np.testing.assert_array_equal(a.points, b.points)


# -- top-level draw ----------------------------------------------------------

def _source(rng, n_points=10, size=64, description="the items"):
    return SourceSample(random_image(rng, size, size),
                        rng.uniform(0, size - 1, (n_points, 2)), description)


def test_augment_disabled_returns_plain_crop():
    cfg = AugmentConfig(p_augment=0.0)
    rng = seeded_rng(29)
    src = _source(seeded_rng(30))
    trace = []
    out = augment_sample(src, [src], cfg, 64, rng, trace=trace)
    assert ("augment", False) in trace
    np.testing.assert_array_equal(out.image, src.image)


def test_forced_pipeline_branch():
    cfg = AugmentConfig(p_augment=1.0, p_pipeline_given_augment=1.0,
                        p_mosaic_given_augment=0.0)
    trace = []
    src = _source(seeded_rng(31))
    augment_sample(src, [src], cfg, 64, seeded_rng(32), trace=trace)
    assert ("branch", "pipeline") in trace


def test_forced_mosaic_self_for_dense_images():
    cfg = AugmentConfig(p_augment=1.0, p_pipeline_given_augment=0.0,
                        p_mosaic_given_augment=1.0)
    trace = []
    src = _source(seeded_rng(33), n_points=80)
    out = augment_sample(src, [src], cfg, 64, seeded_rng(34), trace=trace)
    assert ("branch", "mosaic") in trace
    assert ("mosaic_self", True) in trace
    assert out.description == "the items"


def test_sparse_mosaic_draws_three_partners():
    cfg = AugmentConfig(p_augment=1.0, p_pipeline_given_augment=0.0,
                        p_mosaic_given_augment=1.0)
    rng = seeded_rng(35)
    dataset = [_source(seeded_rng(40 + i), description=f"the kind {i}")
               for i in range(6)]
    trace = []
    out = augment_sample(dataset[2], dataset, cfg, 64, rng,
                         pivot_index=2, trace=trace)
    assert ("mosaic_self", False) in trace
    assert out.description == "the kind 2"


def test_augment_sample_deterministic():
    cfg = AugmentConfig()
    dataset = [_source(seeded_rng(50 + i)) for i in range(5)]
    a = augment_sample(dataset[0], dataset, cfg, 64, seeded_rng(60), pivot_index=0)
    b = augment_sample(dataset[0], dataset, cfg, 64, seeded_rng(60), pivot_index=0)
    np.testing.assert_array_equal(a.image, b.image)
    np.testing.assert_array_equal(a.points, b.points)


def test_branch_rates_near_nominal():
    cfg = AugmentConfig()
    rng = seeded_rng(70)
    dataset = [_source(seeded_rng(80 + i)) for i in range(5)]
    n, augmented, mosaics = 3000, 0, 0
    for _ in range(n):
        trace = []
        augment_sample(dataset[0], dataset, cfg, 64, rng, pivot_index=0,
                       trace=trace)
        t = dict(trace)
        if t.get("augment"):
            augmented += 1
            if t.get("branch") == "mosaic":
                mosaics += 1
    assert abs(augmented / n - 0.4) < 0.04
    assert abs(mosaics / augmented - 0.625) < 0.05
