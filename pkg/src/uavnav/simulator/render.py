"""Raycast renderer for axis-aligned box scenes.

World frame: X up, Y = plan x (lateral at zero yaw), Z = plan y (forward at
zero yaw). Positive yaw turns the heading from +Z toward +Y.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..camera_geometry import CAMERA_TO_BODY, CameraIntrinsics, rotation_from_pitch
from ..segmentation import BACKGROUND, CARPET
from .scene import SceneSpec

_TINY = 1e-300


@dataclass(frozen=True)
class DroneState:
    """Drone centre position (height, plan x, plan y), heading and gimbal pitch."""

    height: float
    x: float
    y: float
    yaw: float = 0.0
    pitch: float = math.radians(-25.0)
    collided: bool = False
    camera_offset: float = 0.15

    @property
    def forward(self) -> np.ndarray:
        """Unit heading in world coordinates."""
        return np.array([0.0, math.sin(self.yaw), math.cos(self.yaw)])

    @property
    def right(self) -> np.ndarray:
        return np.array([0.0, math.cos(self.yaw), -math.sin(self.yaw)])

    @property
    def position(self) -> np.ndarray:
        return np.array([self.height, self.x, self.y])

    @property
    def camera_position(self) -> np.ndarray:
        return self.position + self.camera_offset * self.forward


@dataclass
class RenderOutput:
    labels: np.ndarray  # (H, W) uint8 class ids
    depth: np.ndarray  # (H, W) metric range from the camera centre
    rgb: np.ndarray  # (H, W, 3) uint8 palette colours


@lru_cache(maxsize=8)
def _body_rays(K: CameraIntrinsics) -> np.ndarray:
    """Per-pixel ray directions in (up, right, forward) before pitch, shape (H*W, 3)."""
    vv, uu = np.mgrid[0:K.height, 0:K.width]
    cam = np.stack([(uu - K.cx) / K.fx, (vv - K.cy) / K.fy, np.ones_like(uu, dtype=float)], axis=-1)
    return cam.reshape(-1, 3) @ CAMERA_TO_BODY.T


def world_rays(K: CameraIntrinsics, drone: DroneState) -> np.ndarray:
    """Unit world-frame ray per pixel, shape (H*W, 3)."""
    local = _body_rays(K) @ rotation_from_pitch(drone.pitch).T
    up = np.array([1.0, 0.0, 0.0])
    basis = np.stack([up, drone.right, drone.forward])  # rows: where local axes point in world
    d = local @ basis
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def _camera_coords(points: np.ndarray, drone: DroneState) -> np.ndarray:
    """World points to camera coordinates (x right, y down, z along the optical axis)."""
    basis = np.stack([np.array([1.0, 0.0, 0.0]), drone.right, drone.forward])
    local = (points - drone.camera_position) @ basis.T
    body = local @ rotation_from_pitch(drone.pitch)
    return body @ CAMERA_TO_BODY


def _screen_window(box, drone: DroneState, K: CameraIntrinsics):
    """Pixel window (v0, v1, u0, u1) that can see ``box``; None when it is behind the camera."""
    x0, x1, y0, y1 = box.bounds
    corners = np.array([[h, x, y] for h in (0.0, box.size_z) for x in (x0, x1) for y in (y0, y1)])
    cam = _camera_coords(corners, drone)
    if np.all(cam[:, 2] <= 0):
        return None
    if np.any(cam[:, 2] <= 1e-9):
        return 0, K.height, 0, K.width
    u = K.fx * cam[:, 0] / cam[:, 2] + K.cx
    v = K.fy * cam[:, 1] / cam[:, 2] + K.cy
    u0 = max(0, int(math.floor(u.min())) - 1)
    u1 = min(K.width, int(math.ceil(u.max())) + 2)
    v0 = max(0, int(math.floor(v.min())) - 1)
    v1 = min(K.height, int(math.ceil(v.max())) + 2)
    if u0 >= u1 or v0 >= v1:
        return None
    return v0, v1, u0, u1


def _slab(o, inv, lo, hi):
    """Entry distance, exit distance and entry axis (first axis on ties) per ray.

    ``inv`` holds one array of inverse direction components per axis.
    """
    t_near = t_far = axis = None
    for a in range(3):
        t1 = (lo[a] - o[a]) * inv[a]
        t2 = (hi[a] - o[a]) * inv[a]
        near, far = np.minimum(t1, t2), np.maximum(t1, t2)
        if t_near is None:
            t_near, t_far, axis = near, far, np.zeros(near.shape, dtype=np.int8)
            continue
        later = near > t_near
        axis = np.where(later, np.int8(a), axis)
        t_near = np.maximum(t_near, near)
        t_far = np.minimum(t_far, far)
    return t_near, t_far, axis


def render(scene: SceneSpec, drone: DroneState, K: CameraIntrinsics,
           width: int | None = None, height: int | None = None) -> RenderOutput:
    if width is not None and height is not None and (width, height) != (K.width, K.height):
        K = K.scaled(width, height)
    shape = (K.height, K.width)
    o = drone.camera_position
    d = world_rays(K, drone)
    dirs = [np.ascontiguousarray(d[:, a]).reshape(shape) for a in range(3)]
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        inv = [1.0 / np.where(np.abs(c) < 1e-15, np.where(c < 0, -1e-15, 1e-15), c) for c in dirs]

        # room interior: exit distance and the wall/floor being hit
        rx, ry = scene.room.size_x / 2, scene.room.size_y / 2
        exits = [np.maximum((0.0 - o[0]) * inv[0], (scene.room.height - o[0]) * inv[0]),
                 np.maximum((-rx - o[1]) * inv[1], (rx - o[1]) * inv[1]),
                 np.maximum((-ry - o[2]) * inv[2], (ry - o[2]) * inv[2])]
        t_best = np.minimum(np.minimum(exits[0], exits[1]), exits[2])
        labels = np.full(shape, BACKGROUND, dtype=np.uint8)

        floor = (exits[0] <= exits[1]) & (exits[0] <= exits[2]) & (dirs[0] < 0)
        # ground depth as height / descent rate, matching the analytic ground distance
        t_floor = -o[0] / dirs[0][floor]
        t_best[floor] = t_floor
        hx = o[1] + t_floor * dirs[1][floor]
        hy = o[2] + t_floor * dirs[2][floor]
        cx0, cx1, cy0, cy1 = scene.carpet.bounds
        on_carpet = (hx >= cx0) & (hx <= cx1) & (hy >= cy0) & (hy <= cy1)
        labels[floor] = np.where(on_carpet, CARPET, BACKGROUND).astype(np.uint8)

        for box in scene.boxes:
            window = _screen_window(box, drone, K)
            if window is None:
                continue
            v0, v1, u0, u1 = window
            win = (slice(v0, v1), slice(u0, u1))
            x0, x1, y0, y1 = box.bounds
            t_near, t_far, axis = _slab(o, [c[win] for c in inv],
                                        (0.0, x0, y0), (box.size_z, x1, y1))
            best = t_best[win]
            closer = (t_near < t_far) & (t_near > 0) & (t_near < best)
            if not np.any(closer):
                continue
            top = (axis == 0) & (dirs[0][win] < 0)
            cls = np.where(top, box.roof_class, box.body_class).astype(np.uint8)
            if box.patch_class is not None and box.patch_size > 0:
                half = box.patch_size / 2
                px = o[1] + t_near * dirs[1][win]
                py = o[2] + t_near * dirs[2][win]
                in_patch = top & (np.abs(px - box.center_x) <= half) & (np.abs(py - box.center_y) <= half)
                cls[in_patch] = box.patch_class
            best[closer] = t_near[closer]
            labels[win][closer] = cls[closer]

    palette = np.zeros((256, 3), dtype=np.uint8)
    for cls_id, rgb in scene.palette.items():
        palette[cls_id] = rgb
    return RenderOutput(labels=labels, depth=t_best, rgb=palette[labels])
