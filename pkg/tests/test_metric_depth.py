import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import cruise, pose_of
from uavnav.camera_geometry import CameraIntrinsics, DronePose, ground_distances, pixel_grid
from uavnav.metric_depth import (
    DegenerateFitError,
    DivisionDomainError,
    EmptyRoiError,
    InsufficientGroundError,
    RegionOfInterest,
    ScaleEstimate,
    adaptive_scale_factor,
    check_relative_depth,
    fit_scale_shift_least_squares,
    metric_depth,
    patch_median,
    ratio_scale,
    read_pairs_csv,
    roi_stats,
    sample_ground_points,
    write_pairs_csv,
)
from uavnav.segmentation import CARPET
from uavnav.simulator.noise import NoiseModel, degrade
from uavnav.simulator.render import render


def _ground_scene(K, pose):
    dist = ground_distances(K, pose, pixel_grid(K.width, K.height))
    mask = np.isfinite(dist)
    return np.where(mask, dist, 0.0), mask


def test_sample_full_mask_gives_distinct_in_bounds_pixels(rng):
    pts = sample_ground_points(np.ones((40, 60), bool), 50, 0, rng)
    assert len({tuple(p) for p in pts}) == 50
    assert np.all((pts[:, 0] >= 0) & (pts[:, 0] < 60) & (pts[:, 1] >= 0) & (pts[:, 1] < 40))


def test_sample_exact_pool_returns_every_pixel(rng):
    mask = np.zeros((20, 20), bool)
    mask[5:10, 3:13] = True
    pts = sample_ground_points(mask, 50, 0, rng)
    assert {tuple(p) for p in pts} == {(u, v) for v in range(5, 10) for u in range(3, 13)}


def test_sample_is_deterministic_per_seed():
    mask = np.random.default_rng(0).random((30, 30)) > 0.3
    a = sample_ground_points(mask, 20, 1, np.random.default_rng(9))
    b = sample_ground_points(mask, 20, 1, np.random.default_rng(9))
    assert np.array_equal(a, b)


def test_sample_respects_margin_and_reports_shortage(rng):
    mask = np.zeros((30, 30), bool)
    mask[5:25, 5:25] = True
    pts = sample_ground_points(mask, 10, 3, rng)
    assert np.all((pts >= 8) & (pts <= 21))
    with pytest.raises(InsufficientGroundError):
        sample_ground_points(mask, 500, 3, rng)


def test_scale_is_one_when_depth_is_already_metric():
    K = CameraIntrinsics.default(80, 64)
    pose = DronePose(x_t=1.5, theta=-0.6)
    depth, mask = _ground_scene(K, pose)
    est = adaptive_scale_factor(depth, mask, K, pose, margin=0)
    assert est.scale == pytest.approx(1.0, abs=1e-12)


def test_scale_recovers_constant_ratio():
    K = CameraIntrinsics.default(80, 64)
    pose = DronePose(x_t=1.5, theta=-0.6)
    depth, mask = _ground_scene(K, pose)
    est = adaptive_scale_factor(depth / 7.0, mask, K, pose, margin=0)
    assert est.scale == pytest.approx(7.0, rel=1e-12)
    assert est.n_samples == 50 and est.samples.shape == (50, 4)


def test_scale_under_one_percent_noise(scene, K_small):
    drone = cruise(0.0, -1.5)
    frame = render(scene, drone, K_small)
    for i in range(5):
        obs = degrade(frame, NoiseModel(depth_sigma=0.01, seed=3), i)
        est = adaptive_scale_factor(obs.relative_depth, frame.labels == CARPET, K_small, pose_of(drone),
                                    rng=np.random.default_rng(i))
        s_star = obs.hidden_scale.reveal()
        assert abs(est.scale - s_star) / s_star < 0.03


def test_no_ground_raises(K_small):
    pose = DronePose(x_t=1.5, theta=-0.4)
    with pytest.raises(InsufficientGroundError):
        adaptive_scale_factor(np.ones((128, 160)), np.zeros((128, 160), bool), K_small, pose)


def test_metric_depth_examples():
    d = np.array([[0.2, 1.25]])
    assert np.array_equal(metric_depth(d, ScaleEstimate(1.0, 0.0, 1)), d)
    assert metric_depth(np.array([[1.25]]), ScaleEstimate(2.0, 0.5, 1))[0, 0] == pytest.approx(3.0)
    with pytest.raises(ValueError):
        ScaleEstimate(0.0)


def test_noiseless_frame_reconstruction(scene, K_small):
    drone = cruise(0.5, -1.0, 30)
    frame = render(scene, drone, K_small)
    obs = degrade(frame, NoiseModel(seed=1), 0)
    ground = frame.labels == CARPET
    est = adaptive_scale_factor(obs.relative_depth, ground, K_small, pose_of(drone))
    metric = metric_depth(obs.relative_depth, est)
    assert np.max(np.abs(metric[ground] - frame.depth[ground])) < 1e-4


def test_least_squares_examples():
    assert fit_scale_shift_least_squares([(1, 2), (2, 4), (3, 6)]) == pytest.approx((2.0, 0.0), abs=1e-12)
    assert fit_scale_shift_least_squares([(0, 1), (1, 1)]) == pytest.approx((0.0, 1.0), abs=1e-12)
    with pytest.raises(DegenerateFitError):
        fit_scale_shift_least_squares([(1, 2)])
    with pytest.raises(DegenerateFitError):
        fit_scale_shift_least_squares([(1, 2), (1, 3)])


def test_least_squares_noisy_and_against_lstsq():
    rng = np.random.default_rng(5)
    pred = rng.uniform(0.1, 1.0, 200)
    gt = 3.2 * pred + 0.4 + rng.normal(0, 0.05, 200)
    scale, shift = fit_scale_shift_least_squares(np.column_stack([pred, gt]))
    assert abs(scale - 3.2) < 0.05 and abs(shift - 0.4) < 0.05
    ref, *_ = np.linalg.lstsq(np.column_stack([pred, np.ones_like(pred)]), gt, rcond=None)
    assert np.allclose([scale, shift], ref, rtol=1e-10, atol=1e-12)


def test_ratio_examples_and_outlier():
    assert ratio_scale([(1, 2), (2, 4)]) == 2.0
    assert ratio_scale([(0.5, 1.5)]) == 3.0
    pairs = [(x, 2.5 * x) for x in np.linspace(0.1, 1.0, 21)] + [(0.5, 25.0)]
    ratios = sorted(g / p for p, g in pairs)
    assert ratio_scale(pairs) == pytest.approx((ratios[10] + ratios[11]) / 2)
    assert ratio_scale(pairs) == pytest.approx(2.5)
    with pytest.raises(DivisionDomainError):
        ratio_scale([(0.0, 1.0)])


def test_roi_stats_examples():
    assert roi_stats(np.full((5, 5), 0.7), RegionOfInterest(0, 0, 5, 5)) == pytest.approx((0.7, 0.7, 0.7))
    m = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert roi_stats(m, RegionOfInterest(0, 0, 2, 2)) == (2.5, 2.5, 1.0)
    with pytest.raises(EmptyRoiError):
        RegionOfInterest(3, 0, 3, 2)


def test_roi_stats_against_sorting(rng):
    m = rng.random((20, 20))
    roi = RegionOfInterest(4, 6, 14, 16)
    vals = sorted(m[6:16, 4:14].ravel())
    mean, median, low = roi_stats(m, roi)
    assert mean == pytest.approx(sum(vals) / 100, rel=1e-12)
    assert median == pytest.approx((vals[49] + vals[50]) / 2, rel=1e-12)
    assert low == vals[0]


def test_patch_median_clamps_at_borders():
    m = np.arange(25, dtype=float).reshape(5, 5)
    out = patch_median(m, np.array([[0, 0], [2, 2]]), 3)
    assert out[0] == np.median([0, 1, 5, 6])
    assert out[1] == 12.0
    assert np.array_equal(patch_median(m, np.array([[4, 1]]), 1), [9.0])


def test_relative_depth_validation():
    with pytest.raises(ValueError):
        check_relative_depth(np.zeros((3, 3)))
    with pytest.raises(ValueError):
        check_relative_depth(np.array([[1.0, -0.1]]))
    with pytest.raises(ValueError):
        check_relative_depth(np.array([[1.0, np.nan]]))


def test_pairs_csv_round_trip(tmp_path):
    pairs = np.array([[0.1, 0.35], [1.0 / 3.0, 2.0]])
    write_pairs_csv(tmp_path / "p.csv", pairs)
    assert np.array_equal(read_pairs_csv(tmp_path / "p.csv"), pairs)
    assert (tmp_path / "p.csv").read_text().splitlines()[0] == "predicted,ground_truth_m"


@settings(max_examples=30, deadline=None)
@given(c=st.floats(1e-3, 1e3), theta=st.floats(-1.2, -0.3), h=st.floats(0.5, 3.0))
def test_metric_depth_invariant_to_relative_scale(c, theta, h):
    K = CameraIntrinsics.default(64, 48)
    pose = DronePose(x_t=h, theta=theta)
    depth, mask = _ground_scene(K, pose)
    depth = depth * (1 + 0.2 * np.sin(np.arange(depth.size).reshape(depth.shape)))
    rel = depth / 5.0 + 0.01
    base = metric_depth(rel, adaptive_scale_factor(rel, mask, K, pose, n=20, margin=0,
                                                   rng=np.random.default_rng(0)))
    scaled = metric_depth(rel * c, adaptive_scale_factor(rel * c, mask, K, pose, n=20, margin=0,
                                                         rng=np.random.default_rng(0)))
    assert np.max(np.abs(scaled - base) / np.maximum(np.abs(base), 1.0)) < 1e-12
    assert math.isfinite(float(base.max()))
