"""Five-plane virtual safety box around the drone's forward path.

Plane coordinates are absolute positions in the drone-centred local frame
(x up, y right, z forward, origin on the ground below the drone centre). The
camera sits at ``C = (x_t, 0, z_c)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .camera_geometry import (
    CameraIntrinsics,
    DronePose,
    backproject,
    camera_center_correction,
    pixel_grid,
    to_world,
)

DEFAULT_ADVANCE_CAP = 1.0
FORWARD_STEP_FALLBACK = 0.30


class Plane(enum.Enum):
    FRONT = "front"
    RIGHT = "right"
    LEFT = "left"
    HIGH = "high"
    LOW = "low"


# Tie-break order when two planes are equally close.
PLANE_PRIORITY = (Plane.FRONT, Plane.RIGHT, Plane.LEFT, Plane.HIGH, Plane.LOW)
_AXIS = {Plane.FRONT: 2, Plane.RIGHT: 1, Plane.LEFT: 1, Plane.HIGH: 0, Plane.LOW: 0}


@dataclass(frozen=True)
class CorridorConfig:
    x_low: float = 0.7
    x_high: float = 2.3
    y_left: float = -0.5
    y_right: float = 0.5
    z_front: float = 2.0

    def __post_init__(self):
        if not self.x_low < self.x_high:
            raise ValueError(f"x_low ({self.x_low}) must be below x_high ({self.x_high})")
        if not self.y_left < 0 < self.y_right:
            raise ValueError(f"need y_left < 0 < y_right, got {self.y_left}, {self.y_right}")
        if not self.z_front > 0:
            raise ValueError(f"z_front must be positive, got {self.z_front}")

    @classmethod
    def around_height(cls, height: float, vertical: float = 0.8, lateral: float = 0.5,
                      front: float = 2.0) -> "CorridorConfig":
        return cls(height - vertical, height + vertical, -lateral, lateral, front)

    def coordinate(self, plane: Plane) -> float:
        return {
            Plane.FRONT: self.z_front,
            Plane.RIGHT: self.y_right,
            Plane.LEFT: self.y_left,
            Plane.HIGH: self.x_high,
            Plane.LOW: self.x_low,
        }[plane]


@dataclass(frozen=True)
class PlaneHit:
    plane: Plane
    lam: float
    point: np.ndarray
    distance: float


@dataclass(frozen=True)
class BreachReport:
    """``plane`` is None when the point is clear of the corridor."""

    plane: Optional[Plane]
    distance: float

    @property
    def clear(self) -> bool:
        return self.plane is None


def plane_lambdas(P_prime, origin, cfg: CorridorConfig) -> dict[Plane, Optional[float]]:
    """Ray parameter at which ``origin + lam (P' - origin)`` meets each plane.

    A plane is absent (None) when the ray is parallel to it or ``lam <= 1``.
    """
    P_prime = np.asarray(P_prime, dtype=float)
    origin = np.asarray(origin, dtype=float)
    d = P_prime - origin
    if not np.any(d):
        raise ValueError("P' coincides with the ray origin")
    out: dict[Plane, Optional[float]] = {}
    for plane in PLANE_PRIORITY:
        axis = _AXIS[plane]
        denom = d[axis]
        if denom == 0.0:
            out[plane] = None
            continue
        lam = (cfg.coordinate(plane) - origin[axis]) / denom
        out[plane] = float(lam) if lam > 1.0 else None
    return out


def first_intersection(P_prime, origin, cfg: CorridorConfig) -> Optional[PlaneHit]:
    """The plane the ray meets first (minimum Euclidean distance), if any."""
    P_prime = np.asarray(P_prime, dtype=float)
    origin = np.asarray(origin, dtype=float)
    d = P_prime - origin
    best: Optional[PlaneHit] = None
    for plane, lam in plane_lambdas(P_prime, origin, cfg).items():
        if lam is None:
            continue
        point = origin + lam * d
        point[_AXIS[plane]] = cfg.coordinate(plane)
        dist = float(np.linalg.norm(point - origin))
        # strict comparison keeps the earlier plane in PLANE_PRIORITY on ties
        if best is None or dist < best.distance:
            best = PlaneHit(plane, lam, point, dist)
    return best


def _ray_points(K: CameraIntrinsics, pose: DronePose, pixels: np.ndarray) -> np.ndarray:
    """Centre-corrected ``P'`` for each pixel, in the drone-centred frame."""
    P_prime = to_world(pose, backproject(K, pixels)) - pose.translation + pose.center
    return camera_center_correction(pose, P_prime)


def metric_points(K: CameraIntrinsics, pose: DronePose, pixels: np.ndarray, metric_d) -> np.ndarray:
    """3-D points at metric range ``metric_d`` along each pixel ray, centre-corrected."""
    C = pose.center
    d = to_world(pose, backproject(K, pixels)) - pose.translation
    unit = d / np.linalg.norm(d, axis=-1, keepdims=True)
    return C + pose.f_corr * np.asarray(metric_d, dtype=float)[..., None] * unit


def inside_corridor(points: np.ndarray, cfg: CorridorConfig) -> np.ndarray:
    """Strictly-inside test; points on a plane count as outside the free corridor (i.e. breach)."""
    x, y, z = points[..., 0], points[..., 1], points[..., 2]
    return (
        (x >= cfg.x_low) & (x <= cfg.x_high)
        & (y >= cfg.y_left) & (y <= cfg.y_right)
        & (z <= cfg.z_front)
    )


def exit_plane_index(points: np.ndarray, origin, cfg: CorridorConfig) -> np.ndarray:
    """Index into PLANE_PRIORITY of the plane through which the ray from ``origin`` towards
    each point leaves the corridor: the minimum-distance valid plane hit, as in
    :func:`first_intersection`. Ties keep the earlier plane in PLANE_PRIORITY.
    """
    points = np.asarray(points, dtype=float)
    d = points - np.asarray(origin, dtype=float)
    ts = []
    with np.errstate(divide="ignore", invalid="ignore"):
        for plane in PLANE_PRIORITY:
            axis = _AXIS[plane]
            t = (cfg.coordinate(plane) - origin[axis]) / d[..., axis]
            ts.append(np.where((d[..., axis] != 0) & (t > 0), t, np.inf))
    return np.argmin(np.stack(ts, axis=-1), axis=-1)


def corridor_breach(pixel, metric_d: float, K: CameraIntrinsics, pose: DronePose,
                    cfg: CorridorConfig) -> BreachReport:
    if not metric_d > 0:
        raise ValueError(f"metric distance must be positive, got {metric_d}")
    point = metric_points(K, pose, np.asarray(pixel, dtype=float), metric_d)
    distance = float(np.linalg.norm(point - pose.center))
    if not inside_corridor(point, cfg):
        return BreachReport(None, distance)
    return BreachReport(PLANE_PRIORITY[int(exit_plane_index(point, pose.center, cfg))], distance)


def front_relevant_mask(K: CameraIntrinsics, pose: DronePose, cfg: CorridorConfig) -> np.ndarray:
    """Pixels whose ray leaves the corridor through the frontal plane (vectorised first_intersection).

    The reference point is pulled to within 1 mm of the camera so that the
    ``lam > 1`` rule keeps every exit point in front of the camera, not only
    those beyond the unit-depth point.
    """
    pixels = pixel_grid(K.width, K.height)
    P = _ray_points(K, pose, pixels)
    origin = pose.center
    d = P - origin
    d = 1e-3 * d / np.linalg.norm(d, axis=-1, keepdims=True)
    lams = []
    with np.errstate(divide="ignore", invalid="ignore"):
        for plane in PLANE_PRIORITY:
            axis = _AXIS[plane]
            lam = (cfg.coordinate(plane) - origin[axis]) / d[..., axis]
            lams.append(np.where((d[..., axis] != 0) & (lam > 1.0), lam, np.inf))
    lams = np.stack(lams, axis=-1)
    first = np.argmin(lams, axis=-1)
    return (first == 0) & np.isfinite(lams[..., 0])


def max_safe_advance(metric_map: np.ndarray, K: CameraIntrinsics, pose: DronePose,
                     cfg: CorridorConfig, cap: float = DEFAULT_ADVANCE_CAP,
                     relevant: Optional[np.ndarray] = None) -> float:
    """Largest forward move keeping every visible obstacle beyond the frontal plane."""
    metric_map = np.asarray(metric_map, dtype=float)
    points = metric_points(K, pose, pixel_grid(K.width, K.height), metric_map)
    if np.any(inside_corridor(points, cfg)):
        return 0.0
    if relevant is None:
        relevant = front_relevant_mask(K, pose, cfg)
    if not np.any(relevant):
        return 0.0
    slack = float(np.min(points[relevant][:, 2])) - cfg.z_front
    return float(min(max(slack, 0.0), cap))


@dataclass(frozen=True)
class FrameCorridorReport:
    """Per-frame corridor summary consumed by the depth-aware policy."""

    breach: Optional[Plane]
    breach_distance: float
    n_breach_pixels: int
    advance: float
    clearance_left: float
    clearance_right: float


def assess_frame(metric_map: np.ndarray, K: CameraIntrinsics, pose: DronePose,
                 cfg: CorridorConfig, cap: float = DEFAULT_ADVANCE_CAP,
                 relevant: Optional[np.ndarray] = None,
                 upper_fraction: float = 0.4) -> FrameCorridorReport:
    """Breach plane of the closest intruding point, safe advance and per-half clearance."""
    metric_map = np.asarray(metric_map, dtype=float)
    points = metric_points(K, pose, pixel_grid(K.width, K.height), metric_map)
    inside = inside_corridor(points, cfg)
    n_inside = int(np.count_nonzero(inside))

    rows = max(1, int(round(upper_fraction * K.height)))
    half = K.width // 2
    band = metric_map[:rows]
    left, right = float(band[:, :half].mean()), float(band[:, half:].mean())

    if n_inside:
        pts = points[inside]
        dist = np.linalg.norm(pts - pose.center, axis=-1)
        k = int(np.argmin(dist))
        plane = PLANE_PRIORITY[int(exit_plane_index(pts[k], pose.center, cfg))]
        return FrameCorridorReport(plane, float(dist[k]), n_inside, 0.0, left, right)

    if relevant is None:
        relevant = front_relevant_mask(K, pose, cfg)
    if np.any(relevant):
        slack = float(np.min(points[relevant][:, 2])) - cfg.z_front
        advance = float(min(max(slack, 0.0), cap))
    else:
        advance = 0.0
    return FrameCorridorReport(None, math.inf, 0, advance, left, right)
