import numpy as np
import pytest

from conftest import cruise
from oracles import hsv_colorsys, naive_histograms, reference_largest_component
from uavnav.camera_geometry import CameraIntrinsics
from uavnav.corpus import CorpusSpec, boundary_distance, read_patch_dataset, synthetic_corpus, write_patch_dataset
from uavnav.harness import SegTrainSpec, seg_train, train_from_features
from uavnav.segmentation import (
    BACKGROUND,
    CARPET,
    FEATURE_DIM,
    HELIPAD_BOX,
    HELIPAD_H,
    HUE_BINS,
    N_CLASSES,
    SAT_BINS,
    UNKNOWN,
    DegenerateDataError,
    EmptyPatchError,
    HelipadParams,
    OvRClassifier,
    classify_patch,
    detect_helipad,
    extract_patch_feature,
    grid_features,
    largest_component_filter,
    rgb_to_hsv,
    segment_frame_grid,
    train_one_vs_rest,
)
from uavnav.simulator.render import render


def test_hsv_matches_colorsys(rng):
    img = rng.integers(0, 256, (12, 12, 3), dtype=np.uint8)
    img[0, 0] = (128, 128, 128)
    img[0, 1] = (255, 0, 0)
    ours = rgb_to_hsv(img)
    ref = hsv_colorsys(img)
    assert np.allclose(ours[..., 1:], ref[..., 1:], atol=1e-12)
    hue_gap = np.abs(ours[..., 0] - ref[..., 0])
    assert np.all(np.minimum(hue_gap, 360 - hue_gap) < 1e-9)


def test_pure_red_patch_single_bins():
    img = np.zeros((40, 40, 3), np.uint8)
    img[..., 0] = 255
    f = extract_patch_feature(img, (20, 20))
    hue, sat, val = f[:HUE_BINS], f[HUE_BINS:HUE_BINS + SAT_BINS], f[HUE_BINS + SAT_BINS:]
    assert hue[0] == 1.0 and np.count_nonzero(hue) == 1
    assert sat[-1] == 1.0 and np.count_nonzero(sat) == 1
    assert val[-1] == 1.0 and np.count_nonzero(val) == 1


def test_gray_patch_has_zero_saturation():
    img = np.full((40, 40, 3), 90, np.uint8)
    f = extract_patch_feature(img, (20, 20))
    assert f[HUE_BINS] == 1.0


def test_random_patch_matches_naive_histograms(rng):
    img = rng.integers(0, 256, (60, 60, 3), dtype=np.uint8)
    f = extract_patch_feature(img, (30, 30))
    assert f.shape == (FEATURE_DIM,)
    for part in np.split(f, [HUE_BINS, HUE_BINS + SAT_BINS]):
        assert abs(part.sum() - 1.0) < 1e-9
    assert np.allclose(f, naive_histograms(img[10:50, 10:50]), atol=1e-9)


def test_patch_clamped_and_empty_patch_rejected(rng):
    img = rng.integers(0, 256, (30, 30, 3), dtype=np.uint8)
    corner = extract_patch_feature(img, (0, 0))
    assert np.allclose(corner, naive_histograms(img[:20, :20]), atol=1e-9)
    with pytest.raises(EmptyPatchError):
        extract_patch_feature(img, (200, 200))


def test_grid_features_equal_single_patch_features(rng):
    img = rng.integers(0, 256, (50, 70, 3), dtype=np.uint8)
    centers = np.array([[0, 0], [35, 25], [69, 49], [10, 40]])
    grid = grid_features(img, centers)
    for c, row in zip(centers, grid):
        assert np.allclose(row, extract_patch_feature(img, c), atol=1e-12)


def _one_hot(i, dim=FEATURE_DIM):
    f = np.zeros(dim)
    f[i] = 1.0
    return f


def test_separable_two_class_training():
    X = np.array([_one_hot(3)] * 10 + [_one_hot(100)] * 10)
    y = np.array([0] * 10 + [1] * 10)
    clf = train_one_vs_rest(X, y, n_classes=2)
    assert clf.train_accuracy == 1.0
    assert classify_patch(clf, _one_hot(100)) == 1


def test_duplicated_samples_give_same_decisions(rng):
    X = rng.dirichlet(np.ones(FEATURE_DIM), 60)
    y = np.arange(60) % 3
    a = train_one_vs_rest(X, y, n_classes=3, rng=np.random.default_rng(2))
    b = train_one_vs_rest(np.vstack([X, X]), np.concatenate([y, y]), n_classes=3,
                          rng=np.random.default_rng(2))
    probe = rng.dirichlet(np.ones(FEATURE_DIM), 200)
    assert np.array_equal(a.predict(probe), b.predict(probe))


def test_degenerate_training_data():
    X = np.ones((4, FEATURE_DIM))
    with pytest.raises(DegenerateDataError):
        train_one_vs_rest(X, np.zeros(4, int))
    with pytest.raises(DegenerateDataError) as info:
        train_one_vs_rest(X, np.array([0, 1, 0, 1]), n_classes=3)
    assert info.value.class_id == 2


def test_zero_weights_tie_break_to_class_zero():
    clf = OvRClassifier(np.zeros((N_CLASSES, FEATURE_DIM)), np.zeros(N_CLASSES))
    assert classify_patch(clf, _one_hot(7)) == 0


def test_predict_matches_explicit_scores_and_scaling(rng):
    clf = OvRClassifier(rng.normal(size=(5, FEATURE_DIM)), rng.normal(size=5))
    probe = rng.dirichlet(np.ones(FEATURE_DIM), 100)
    brute = [max(range(5), key=lambda c: (sum(clf.weights[c, j] * p[j] for j in range(FEATURE_DIM))
                                          + clf.bias[c], -c)) for p in probe]
    assert list(clf.predict(probe)) == brute
    scaled = OvRClassifier(clf.weights * 3.7, clf.bias * 3.7)
    assert np.array_equal(scaled.predict(probe), clf.predict(probe))


def test_classifier_text_round_trip(tmp_path, rng):
    clf = OvRClassifier(rng.normal(size=(N_CLASSES, FEATURE_DIM)), rng.normal(size=N_CLASSES))
    clf.save(tmp_path / "w.txt")
    back = OvRClassifier.load(tmp_path / "w.txt")
    assert np.array_equal(back.weights, clf.weights) and np.array_equal(back.bias, clf.bias)


def test_uniform_color_corpus_accuracy(scene):
    spec = SegTrainSpec(corpus=CorpusSpec(per_class=50, mix_prob=0.0))
    assert seg_train(scene.palette, spec).holdout_accuracy >= 0.99


def test_patch_dataset_files_round_trip(tmp_path, scene):
    spec = CorpusSpec(per_class=6)
    index = write_patch_dataset(tmp_path, scene.palette, spec, np.random.default_rng(0))
    feats, labels = read_patch_dataset(index)
    ref_feats, ref_labels = synthetic_corpus(scene.palette, spec, np.random.default_rng(0))
    assert np.array_equal(labels, ref_labels)
    assert np.allclose(feats, ref_feats, atol=1e-12)
    result = train_from_features(feats, labels, SegTrainSpec())
    assert result.n_train + result.n_holdout == len(labels)


@pytest.fixture(scope="module")
def trained(scene):
    return seg_train(scene.palette).classifier


def test_uniform_image_segments_to_its_class(trained, scene):
    img = np.zeros((60, 80, 3), np.uint8)
    img[:] = scene.palette[7]
    out = segment_frame_grid(img, trained)
    assert set(np.unique(out)) <= {7, UNKNOWN}
    assert np.count_nonzero(out == 7) > 0.9 * out.size


def test_dense_grid_labels_every_pixel(trained, scene):
    img = np.zeros((45, 45, 3), np.uint8)
    img[:] = scene.palette[CARPET]
    out = segment_frame_grid(img, trained, step=1, dilation_radius=0)
    assert np.all(out == CARPET)


def test_grid_segmentation_agrees_with_render(trained, scene):
    K = CameraIntrinsics.default()
    frame = render(scene, cruise(0.3, -1.0, 20), K)
    pred = segment_frame_grid(frame.rgb, trained)
    interior = boundary_distance(frame.labels) >= 5
    assert np.mean(pred[interior] == frame.labels[interior]) >= 0.9


def test_boundary_distance_simple():
    labels = np.zeros((5, 8), int)
    labels[:, 4:] = 1
    d = boundary_distance(labels)
    assert d[2, 3] == 0 and d[2, 4] == 0 and d[2, 0] == 3
    assert np.all(np.isinf(boundary_distance(np.zeros((3, 3)))))


def test_largest_component_examples():
    m = np.full((20, 20), BACKGROUND, np.uint8)
    m[0:10, 0:10] = 5
    assert np.array_equal(largest_component_filter(m), m)
    m[15:16, 15:18] = 5
    out = largest_component_filter(m)
    assert np.all(out[15, 15:18] == UNKNOWN)
    assert np.all(out[0:10, 0:10] == 5)


def test_largest_component_matches_flood_fill(rng):
    for _ in range(20):
        m = rng.choice([BACKGROUND, CARPET, 4, 5, 9], size=(24, 24), p=[0.3, 0.3, 0.15, 0.15, 0.1])
        m = m.astype(np.uint8)
        ref = reference_largest_component(m, (BACKGROUND, CARPET), UNKNOWN)
        assert np.array_equal(largest_component_filter(m), ref)


def _pad_mask(with_h=True, with_box=True):
    m = np.full((100, 100), CARPET, np.uint8)
    if with_box:
        m[30:70, 30:70] = HELIPAD_BOX
    if with_h:
        m[42:58, 44:56] = HELIPAD_H
    return m


def test_helipad_detected_at_sign_centroid():
    det = detect_helipad(_pad_mask())
    assert det is not None
    vv, uu = np.nonzero(_pad_mask() == HELIPAD_H)
    assert det.center == pytest.approx((uu.mean(), vv.mean()))
    assert det.bbox == (30, 30, 69, 69)


def test_helipad_needs_both_classes():
    assert detect_helipad(_pad_mask(with_h=False)) is None
    assert detect_helipad(_pad_mask(with_box=False)) is None


def test_helipad_threshold_parameter():
    assert detect_helipad(_pad_mask(), HelipadParams(threshold=1.01)) is None
