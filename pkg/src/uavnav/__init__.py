"""Vision-only UAV navigation: metric depth from relative depth, a safety corridor,
patch segmentation, two flight policies and a raycast simulator to fly them in."""

from .camera_geometry import CameraIntrinsics, DronePose, distance_to_ground, ground_distances
from .metric_depth import (
    ScaleEstimate,
    adaptive_scale_factor,
    fit_scale_shift_least_squares,
    metric_depth,
    ratio_scale,
)
from .policy import MovementCommand, PolicyConfig, PolicyKind
from .safety_corridor import CorridorConfig, Plane, assess_frame, first_intersection
from .segmentation import OvRClassifier, detect_helipad, segment_frame_grid, train_one_vs_rest

__version__ = "0.1.0"

__all__ = [
    "CameraIntrinsics", "CorridorConfig", "DronePose", "MovementCommand", "OvRClassifier", "Plane",
    "PolicyConfig", "PolicyKind", "ScaleEstimate", "adaptive_scale_factor", "assess_frame",
    "detect_helipad", "distance_to_ground", "first_intersection", "fit_scale_shift_least_squares",
    "ground_distances", "metric_depth", "ratio_scale", "segment_frame_grid", "train_one_vs_rest",
]
