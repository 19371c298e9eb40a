"""Pinhole back-projection and ground-plane ray intersection.

Coordinate conventions used throughout the package:

* Image: ``u`` is the column (right), ``v`` the row (down), both in pixels.
  Pixel ``(u, v)`` maps to image coordinate ``(u, v)``; there is no half-pixel
  offset, so the principal pixel ``(cx, cy)`` lies exactly on the optical axis.
* Camera (``K^-1 [u, v, 1]``): x right, y down, z along the optical axis.
* Drone-local / world: **x is up** (the ground plane is ``x = 0``), y is
  lateral (positive to the right of the heading) and z points forward along
  the heading. The frame is right-handed (``y x z = x``).

Gimbal pitch rotates about the lateral axis; a negative pitch tilts the
camera towards the ground. Yaw and planar position are *not* handled here:
the simulator expresses everything in the drone-local frame first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Union

import numpy as np

ArrayLike = Union[np.ndarray, tuple, list]

# Relabels a camera-frame vector (right, down, forward) into (up, right, forward).
CAMERA_TO_BODY = np.array(
    [[0.0, -1.0, 0.0],
     [1.0, 0.0, 0.0],
     [0.0, 0.0, 1.0]]
)

DEFAULT_CAMERA_OFFSET = 0.15


class HorizonError(ValueError):
    """The ray through a pixel never reaches the ground plane."""


class PixelPoint(NamedTuple):
    u: float
    v: float


class WorldPoint(NamedTuple):
    x: float
    y: float
    z: float


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (self.width > 0 and self.height > 0):
            raise ValueError(f"image size must be positive, got {self.width}x{self.height}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError(
                f"principal point ({self.cx}, {self.cy}) outside {self.width}x{self.height} image"
            )
        if not np.isfinite(np.linalg.cond(self.matrix)):
            raise ValueError("intrinsic matrix is singular")

    @property
    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx],
             [0.0, self.fy, self.cy],
             [0.0, 0.0, 1.0]]
        )

    @property
    def inverse(self) -> np.ndarray:
        return np.linalg.inv(self.matrix)

    def scaled(self, width: int, height: int) -> "CameraIntrinsics":
        """Intrinsics for the same lens at another image resolution."""
        sx, sy = width / self.width, height / self.height
        return CameraIntrinsics(self.fx * sx, self.fy * sy, self.cx * sx, self.cy * sy, width, height)

    @classmethod
    def default(cls, width: int = 320, height: int = 256) -> "CameraIntrinsics":
        # roughly 69 deg horizontal field of view
        return cls(230.0 * width / 320, 230.0 * height / 256, width / 2, height / 2, width, height)

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "CameraIntrinsics":
        """Read ``key=value`` lines (fx, fy, cx, cy, width, height)."""
        values = {}
        for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            values[key] = value
        missing = {"fx", "fy", "cx", "cy", "width", "height"} - values.keys()
        if missing:
            raise ValueError(f"{path}: missing intrinsics keys {sorted(missing)}")
        return cls(
            float(values["fx"]), float(values["fy"]),
            float(values["cx"]), float(values["cy"]),
            int(values["width"]), int(values["height"]),
        )

    def to_file(self, path: Union[str, Path]) -> None:
        lines = [f"{k}={getattr(self, k)!r}" for k in ("fx", "fy", "cx", "cy", "width", "height")]
        Path(path).write_text("\n".join(lines) + "\n")


@dataclass(frozen=True)
class DronePose:
    """Camera extrinsics relative to the ground plane.

    ``x_t`` is the camera height above the ground, ``theta`` the gimbal pitch,
    ``z_c`` the forward offset of the camera from the drone centre and
    ``f_corr`` the focal correction applied in corridor computations.
    """

    x_t: float
    theta: float
    z_c: float = DEFAULT_CAMERA_OFFSET
    f_corr: float = 1.0
    yaw: float = 0.0
    ground_xy: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if not self.x_t > 0:
            raise ValueError(f"camera must be above the ground plane, got x_t={self.x_t}")
        if not (-math.pi / 2 - 1e-12 <= self.theta <= 0.0):
            raise ValueError(f"gimbal pitch must lie in [-pi/2, 0], got {self.theta}")
        if not self.f_corr > 0:
            raise ValueError(f"focal correction must be positive, got {self.f_corr}")

    @property
    def rotation(self) -> np.ndarray:
        return rotation_from_pitch(self.theta)

    @property
    def translation(self) -> np.ndarray:
        """``T``: the camera centre in the camera-anchored local frame."""
        return np.array([self.x_t, 0.0, 0.0])

    @property
    def center(self) -> np.ndarray:
        """``C``: the camera centre in the drone-centred local frame."""
        return np.array([self.x_t, 0.0, self.z_c])


def rotation_from_pitch(theta: float) -> np.ndarray:
    """Rotation about the lateral axis by the gimbal pitch ``theta``."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array(
        [[c, 0.0, s],
         [0.0, 1.0, 0.0],
         [-s, 0.0, c]]
    )


def backproject(K: CameraIntrinsics, p: ArrayLike) -> np.ndarray:
    """Camera-frame direction ``K^-1 [u, v, 1]`` for one pixel or an (..., 2) array."""
    p = np.asarray(p, dtype=float)
    u, v = p[..., 0], p[..., 1]
    # closed form of K^-1 for a zero-skew K
    return np.stack([(u - K.cx) / K.fx, (v - K.cy) / K.fy, np.ones_like(u)], axis=-1)


def to_world(pose: DronePose, p_c: ArrayLike) -> np.ndarray:
    """``P' = R p_c + T`` with the camera axes relabelled into the local frame."""
    p_c = np.asarray(p_c, dtype=float)
    body = p_c @ CAMERA_TO_BODY.T
    return body @ pose.rotation.T + pose.translation


def ground_intersection(pose: DronePose, p_c: ArrayLike) -> tuple[np.ndarray, float]:
    """Intersect the ray through ``p_c`` with the ground plane.

    Returns the ground point ``P''`` and the ray parameter ``lambda`` such that
    ``P'' = T + lambda (P' - T)``. Raises :class:`HorizonError` when the ray
    does not descend.
    """
    P_prime = to_world(pose, p_c)
    T = pose.translation
    x_prime = P_prime[0]
    if not x_prime < pose.x_t:
        raise HorizonError(
            f"ray does not descend (x'={x_prime:.6g} >= x_t={pose.x_t:.6g}); no ground hit"
        )
    lam = -pose.x_t / (x_prime - pose.x_t)
    P_ground = T + lam * (P_prime - T)
    P_ground[0] = 0.0  # exact by construction; removes rounding residue
    return P_ground, float(lam)


def camera_center_correction(pose: DronePose, P_prime: ArrayLike) -> np.ndarray:
    """``C + (P' - C) f``: shift to the drone-centred frame and scale by ``f_corr``."""
    P_prime = np.asarray(P_prime, dtype=float)
    if pose.f_corr == 1.0:
        return P_prime.copy()  # exact identity, no rounding through C
    C = pose.center
    return C + (P_prime - C) * pose.f_corr


def distance_to_ground(K: CameraIntrinsics, pose: DronePose, p: ArrayLike, corrected: bool = False) -> float:
    """Metric distance from the camera centre to the ground point seen at pixel ``p``.

    With ``corrected=True`` the ray is traced from ``C`` through the centre
    corrected point instead; the distance is the same because the correction
    only moves the origin and rescales the direction.
    """
    p_c = backproject(K, p)
    if not corrected:
        P_ground, _ = ground_intersection(pose, p_c)
        return float(np.linalg.norm(P_ground - pose.translation))
    C = pose.center
    P_center = camera_center_correction(pose, to_world(pose, p_c) - pose.translation + C)
    direction = P_center - C
    if not direction[0] < 0:
        raise HorizonError("ray does not descend; no ground hit")
    lam = -C[0] / direction[0]
    return float(np.linalg.norm(lam * direction))


def ground_distances(K: CameraIntrinsics, pose: DronePose, pixels: np.ndarray) -> np.ndarray:
    """Vectorised :func:`distance_to_ground`; NaN where the ray misses the ground."""
    P_prime = to_world(pose, backproject(K, pixels))
    v = P_prime - pose.translation
    dx = v[..., 0]
    out = np.full(dx.shape, np.nan)
    hits = dx < 0
    lam = -pose.x_t / dx[hits]
    out[hits] = lam * np.linalg.norm(v[hits], axis=-1)
    return out


def pixel_rays(K: CameraIntrinsics, pose: DronePose, pixels: np.ndarray) -> np.ndarray:
    """Unit ray directions in the local frame for an (..., 2) array of pixels."""
    d = to_world(pose, backproject(K, pixels)) - pose.translation
    return d / np.linalg.norm(d, axis=-1, keepdims=True)


def pixel_grid(width: int, height: int) -> np.ndarray:
    """(height, width, 2) array holding ``(u, v)`` for every pixel."""
    vv, uu = np.mgrid[0:height, 0:width]
    return np.stack([uu, vv], axis=-1).astype(float)
