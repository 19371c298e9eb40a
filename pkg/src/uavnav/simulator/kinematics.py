"""Command execution with swept collision checks.

Moves are teleport-style (no inertia) but swept: translations in 1 cm
substeps, rotations in 0.01 rad substeps. The drone body is an oriented box
(0.24 m long, 0.32 m wide, 0.10 m tall) tested against every box in the scene
with the separating-axis theorem, and against the room walls.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from ..policy import MovementCommand
from .render import DroneState
from .scene import SceneSpec

DRONE_LENGTH = 0.24
DRONE_WIDTH = 0.32
DRONE_HEIGHT = 0.10
TRANSLATION_SUBSTEP = 0.01
ROTATION_SUBSTEP = 0.01


@dataclass(frozen=True)
class Dynamics:
    speed: float = 0.5  # m/s horizontal
    vertical_speed: float = 0.5
    yaw_rate: float = 0.8  # rad/s
    command_overhead: float = 1.0  # s per executed command: settle + next frame
    frame_time: float = 1 / 30  # s for a hover (one video frame)
    gimbal_time: float = 0.5


def footprint(x: np.ndarray, y: np.ndarray, yaw: np.ndarray) -> np.ndarray:
    """Plan-view corners of the drone body, shape (..., 4, 2)."""
    x, y, yaw = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float), np.asarray(yaw, float))
    f = np.stack([np.sin(yaw), np.cos(yaw)], axis=-1)
    r = np.stack([np.cos(yaw), -np.sin(yaw)], axis=-1)
    hl, hw = DRONE_LENGTH / 2, DRONE_WIDTH / 2
    c = np.stack([x, y], axis=-1)
    return np.stack([
        c + hl * f + hw * r,
        c + hl * f - hw * r,
        c - hl * f - hw * r,
        c - hl * f + hw * r,
    ], axis=-2)


def _obb_hits_aabb(corners: np.ndarray, yaw: np.ndarray, bounds) -> np.ndarray:
    """Strict plan-view overlap of each drone footprint with an axis-aligned rectangle."""
    x0, x1, y0, y1 = bounds
    cx, cy = corners[..., 0], corners[..., 1]
    overlap = (cx.min(-1) < x1) & (cx.max(-1) > x0) & (cy.min(-1) < y1) & (cy.max(-1) > y0)
    rect = np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
    for axis in (np.stack([np.sin(yaw), np.cos(yaw)], -1), np.stack([np.cos(yaw), -np.sin(yaw)], -1)):
        pd = np.einsum("...kj,...j->...k", corners, axis)
        pr = np.einsum("kj,...j->...k", rect, axis)
        overlap &= (pd.min(-1) < pr.max(-1)) & (pd.max(-1) > pr.min(-1))
    return overlap


def collides(scene: SceneSpec, height, x, y, yaw) -> np.ndarray:
    """Whether the drone body at each pose touches an obstacle or leaves the room."""
    height = np.asarray(height, float)
    yaw = np.asarray(yaw, float)
    corners = footprint(x, y, yaw)
    hit = np.zeros(np.broadcast(height, yaw, np.asarray(x), np.asarray(y)).shape, dtype=bool)
    bottom = height - DRONE_HEIGHT / 2
    top = height + DRONE_HEIGHT / 2
    for box in scene.boxes:
        hit |= (bottom < box.size_z) & _obb_hits_aabb(corners, yaw, box.bounds)
    rx, ry = scene.room.size_x / 2, scene.room.size_y / 2
    outside = (
        (np.abs(corners[..., 0]).max(-1) >= rx) | (np.abs(corners[..., 1]).max(-1) >= ry)
        | (bottom <= 0) | (top >= scene.room.height)
    )
    return hit | outside


def surface_height(scene: SceneSpec, x: float, y: float, yaw: float) -> float:
    """Height of the highest box top under the drone footprint (0 for the floor)."""
    corners = footprint(x, y, yaw)
    level = 0.0
    for box in scene.boxes:
        if _obb_hits_aabb(corners, np.asarray(yaw), box.bounds):
            level = max(level, box.size_z)
    return level


def command_duration(cmd: MovementCommand, dyn: Dynamics) -> float:
    if cmd.kind == "hover":
        return dyn.gimbal_time if cmd.gimbal is not None else dyn.frame_time
    horizontal = math.hypot(cmd.forward, cmd.lateral)
    t = dyn.command_overhead + horizontal / dyn.speed + abs(cmd.vertical) / dyn.vertical_speed
    t += abs(cmd.yaw) / dyn.yaw_rate
    if cmd.gimbal is not None:
        t += dyn.gimbal_time
    return t


@dataclass(frozen=True)
class StepResult:
    drone: DroneState
    collided: bool
    duration: float
    distance: float
    landed_on: float = float("nan")


def apply_command(drone: DroneState, cmd: MovementCommand, scene: SceneSpec,
                  dyn: Dynamics = Dynamics()) -> StepResult:
    """Execute one command; motion stops at the first colliding substep."""
    if drone.collided:
        raise ValueError("drone has already collided")
    pitch = cmd.gimbal if cmd.gimbal is not None else drone.pitch
    duration = command_duration(cmd, dyn)

    if cmd.land:
        level = surface_height(scene, drone.x, drone.y, drone.yaw)
        landed = replace(drone, height=level + DRONE_HEIGHT / 2, pitch=pitch)
        return StepResult(landed, False, duration + (drone.height - landed.height) / dyn.vertical_speed,
                          drone.height - landed.height, level)

    if cmd.yaw:
        n = max(1, math.ceil(abs(cmd.yaw) / ROTATION_SUBSTEP))
        yaws = drone.yaw + cmd.yaw * np.arange(1, n + 1) / n
        hits = collides(scene, drone.height, drone.x, drone.y, yaws)
        if hits.any():
            k = int(np.argmax(hits))
            return StepResult(replace(drone, yaw=float(yaws[k]), pitch=pitch, collided=True),
                              True, duration * (k + 1) / n, 0.0)
        return StepResult(replace(drone, yaw=float(yaws[-1]), pitch=pitch), False, duration, 0.0)

    f, r = drone.forward, drone.right
    delta = cmd.forward * f + cmd.lateral * r + cmd.vertical * np.array([1.0, 0.0, 0.0])
    length = float(np.linalg.norm(delta))
    if length == 0.0:
        return StepResult(replace(drone, pitch=pitch), False, duration, 0.0)
    n = max(1, math.ceil(length / TRANSLATION_SUBSTEP))
    frac = np.arange(1, n + 1) / n
    pos = drone.position[None, :] + frac[:, None] * delta[None, :]
    hits = collides(scene, pos[:, 0], pos[:, 1], pos[:, 2], drone.yaw)
    if hits.any():
        k = int(np.argmax(hits))
        moved = replace(drone, height=float(pos[k, 0]), x=float(pos[k, 1]), y=float(pos[k, 2]),
                        pitch=pitch, collided=True)
        return StepResult(moved, True, duration * frac[k], length * frac[k])
    end = pos[-1]
    moved = replace(drone, height=float(end[0]), x=float(end[1]), y=float(end[2]), pitch=pitch)
    return StepResult(moved, False, duration, length)
