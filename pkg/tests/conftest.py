import math

import numpy as np
import pytest

from uavnav.camera_geometry import CameraIntrinsics, DronePose
from uavnav.simulator.render import DroneState
from uavnav.simulator.scene import default_scene, empty_scene


@pytest.fixture(scope="session")
def scene():
    return default_scene()


@pytest.fixture(scope="session")
def open_scene():
    return empty_scene()


@pytest.fixture(scope="session")
def K_small():
    return CameraIntrinsics.default(160, 128)


def pose_of(drone: DroneState) -> DronePose:
    return DronePose(x_t=drone.height, theta=drone.pitch, z_c=drone.camera_offset)


def cruise(x=0.0, y=0.0, yaw_deg=0.0, height=1.5, pitch_deg=-25.0) -> DroneState:
    return DroneState(height=height, x=x, y=y, yaw=math.radians(yaw_deg), pitch=math.radians(pitch_deg))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
