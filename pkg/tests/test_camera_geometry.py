import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import camera_ray, march_to_ground
from uavnav.camera_geometry import (
    CameraIntrinsics,
    DronePose,
    HorizonError,
    backproject,
    camera_center_correction,
    distance_to_ground,
    ground_distances,
    ground_intersection,
    rotation_from_pitch,
    to_world,
)


def test_rotation_identity_at_zero():
    assert np.array_equal(rotation_from_pitch(0.0), np.eye(3))


def test_rotation_quarter_turn():
    expected = np.array([[0, 0, 1], [0, 1, 0], [-1, 0, 0]], float)
    assert np.allclose(rotation_from_pitch(math.pi / 2), expected, atol=1e-15)


def test_rotation_matches_scalar_trig():
    theta = -0.4363
    c, s = math.cos(theta), math.sin(theta)
    R = rotation_from_pitch(theta)
    assert abs(R[0, 0] - c) < 1e-12 and abs(R[0, 2] - s) < 1e-12
    assert abs(R[2, 0] + s) < 1e-12 and abs(R[2, 2] - c) < 1e-12
    assert np.allclose(R @ R.T, np.eye(3), atol=1e-12)


def test_principal_point_is_optical_axis():
    K = CameraIntrinsics(200, 180, 160, 128, 320, 256)
    assert np.array_equal(backproject(K, (160, 128)), [0.0, 0.0, 1.0])


def test_backproject_lateral_component():
    K = CameraIntrinsics(100, 100, 50, 50, 200, 100)
    assert backproject(K, (150, 50))[0] == 1.0


@settings(max_examples=200, deadline=None)
@given(fx=st.floats(50, 800), fy=st.floats(50, 800), u=st.floats(0, 640), v=st.floats(0, 480),
       cxf=st.floats(0, 0.99), cyf=st.floats(0, 0.99))
def test_backproject_round_trip(fx, fy, u, v, cxf, cyf):
    K = CameraIntrinsics(fx, fy, cxf * 640, cyf * 480, 640, 480)
    p = K.matrix @ backproject(K, (u, v))
    assert np.allclose(p, [u, v, 1.0], atol=1e-10)


@pytest.mark.parametrize("fields", [
    (0, 100, 10, 10, 20, 20), (100, -1, 10, 10, 20, 20), (100, 100, 20, 10, 20, 20),
    (100, 100, 10, 10, 0, 20),
])
def test_intrinsics_validation(fields):
    with pytest.raises(ValueError):
        CameraIntrinsics(*fields)


def test_pose_validation():
    with pytest.raises(ValueError):
        DronePose(x_t=0.0, theta=-0.3)
    with pytest.raises(ValueError):
        DronePose(x_t=1.0, theta=0.2)
    with pytest.raises(ValueError):
        DronePose(x_t=1.0, theta=-0.3, f_corr=0)


def test_nadir_principal_ray_hits_below_camera():
    pose = DronePose(x_t=1.5, theta=-math.pi / 2)
    P, lam = ground_intersection(pose, [0.0, 0.0, 1.0])
    assert P[0] == 0.0
    assert abs(np.linalg.norm(P - pose.translation) - 1.5) < 1e-12
    assert abs(P[2]) < 1e-12 and lam > 0


def test_point_already_at_ground_height_gives_unit_lambda():
    pose = DronePose(x_t=1.5, theta=0.0)
    # a camera-frame vector that lands exactly 1.5 m below the camera
    P, lam = ground_intersection(pose, [0.0, 1.5, 1.0])
    assert lam == pytest.approx(1.0, abs=1e-15)
    assert np.allclose(P, to_world(pose, [0.0, 1.5, 1.0]), atol=1e-15)


def test_ray_ten_degrees_below_horizon_matches_march():
    pose = DronePose(x_t=1.5, theta=math.radians(-25))
    K = CameraIntrinsics(200, 200, 160, 120, 320, 240)
    # pixel whose ray is 10 degrees below horizontal: 15 degrees above the optical axis
    v = K.cy - K.fy * math.tan(math.radians(15))
    d = distance_to_ground(K, pose, (K.cx, v))
    assert abs(d - 1.5 / math.sin(math.radians(10))) < 1e-9
    ref = march_to_ground(1.5, camera_ray(K.fx, K.fy, K.cx, K.cy, pose.theta, K.cx, v))
    assert abs(d - ref) < 1e-3


def test_horizon_ray_raises():
    pose = DronePose(x_t=1.5, theta=0.0)
    K = CameraIntrinsics(200, 200, 160, 120, 320, 240)
    with pytest.raises(HorizonError):
        distance_to_ground(K, pose, (160, 60))


def test_center_correction_cases():
    pose = DronePose(x_t=1.5, theta=-0.3)
    P = np.array([0.3, 0.7, 2.0])
    assert np.array_equal(camera_center_correction(pose, P), P)
    origin_pose = DronePose(x_t=1e-9, theta=0.0, z_c=0.0, f_corr=2.0)
    # C is (1e-9, 0, 0): practically the origin
    assert np.allclose(camera_center_correction(origin_pose, [1, 1, 1]), [2, 2, 2], atol=1e-8)
    scaled = DronePose(x_t=1e-9, theta=0.0, z_c=0.15, f_corr=1.1)
    C = np.array([1e-9, 0.0, 0.15])
    expected = C + 1.1 * (np.array([1.0, 0.5, 2.0]) - C)
    assert np.allclose(camera_center_correction(scaled, [1.0, 0.5, 2.0]), expected, atol=1e-15)


def test_nadir_distance_and_height_doubling():
    K = CameraIntrinsics(200, 200, 160, 120, 320, 240)
    low = DronePose(x_t=1.5, theta=-math.pi / 2)
    high = DronePose(x_t=3.0, theta=-math.pi / 2)
    assert distance_to_ground(K, low, (160, 120)) == pytest.approx(1.5, abs=1e-12)
    for pixel in [(160, 120), (40, 200), (300, 10)]:
        assert distance_to_ground(K, high, pixel) == pytest.approx(2 * distance_to_ground(K, low, pixel),
                                                                   rel=1e-12)


def test_thirty_degree_pitch_against_march():
    K = CameraIntrinsics(200, 200, 160, 120, 320, 240)
    pose = DronePose(x_t=1.5, theta=math.radians(-30))
    pixel = (160, 120 + 0.2 * 240)
    ref = march_to_ground(1.5, camera_ray(200, 200, 160, 120, pose.theta, *pixel))
    assert abs(distance_to_ground(K, pose, pixel) - ref) < 1e-3


def test_corrected_distance_equals_plain_distance():
    K = CameraIntrinsics.default()
    pose = DronePose(x_t=1.2, theta=-0.5, f_corr=1.3)
    for pixel in [(10, 250), (160, 128), (300, 200)]:
        assert distance_to_ground(K, pose, pixel, corrected=True) == pytest.approx(
            distance_to_ground(K, pose, pixel), rel=1e-12)


def test_vectorised_distances_match_scalar_and_mark_misses():
    K = CameraIntrinsics.default(64, 48)
    pose = DronePose(x_t=1.5, theta=-0.2)
    pixels = np.array([[0, 0], [32, 24], [63, 47], [10, 40]], float)
    out = ground_distances(K, pose, pixels)
    assert math.isnan(out[0])
    for px, d in zip(pixels[1:], out[1:]):
        assert d == pytest.approx(distance_to_ground(K, pose, px), rel=1e-12)


def test_intrinsics_file_round_trip(tmp_path):
    K = CameraIntrinsics(231.5, 229.25, 159.5, 127.0, 320, 256)
    K.to_file(tmp_path / "k.txt")
    assert CameraIntrinsics.from_file(tmp_path / "k.txt") == K
    (tmp_path / "bad.txt").write_text("fx=1\n")
    with pytest.raises(ValueError, match="missing"):
        CameraIntrinsics.from_file(tmp_path / "bad.txt")
