"""Closed-loop missions: render, degrade, perceive, decide, move.

A mission takes off from the helipad, explores for the configured duration,
then searches for the pad, approaches it, aligns overhead with the gimbal
pointing down and lands. The mission clock advances by the modelled duration
of each executed command.
"""

from __future__ import annotations

import csv
import enum
import io
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..camera_geometry import CameraIntrinsics, DronePose, HorizonError
from ..metric_depth import (
    DegenerateDepthError,
    InsufficientGroundError,
    adaptive_scale_factor,
    metric_depth,
    patch_median,
)
from ..policy import (
    MissionState,
    MovementCommand,
    Observation,
    Phase,
    PolicyConfig,
    PolicyKind,
    RegionLayout,
    mission_step,
    region_counts,
)
from ..safety_corridor import CorridorConfig, assess_frame, front_relevant_mask
from ..segmentation import (
    CARPET,
    HelipadParams,
    OvRClassifier,
    detect_helipad,
    largest_component_filter,
    segment_frame_grid,
)
from .kinematics import Dynamics, apply_command
from .noise import NoiseModel, degrade
from .render import DroneState, render
from .scene import SceneSpec

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


class Outcome(str, enum.Enum):
    SUCCESS = "success"
    CRASH = "crash"
    TIMEOUT = "timeout"
    MISSED = "missed"  # landed, but not on the helipad top


@dataclass(frozen=True)
class CorridorMargins:
    """Corridor plane offsets from the drone: lateral, below, above and ahead (metres)."""

    left: float = 0.5
    right: float = 0.5
    low: float = 0.8
    high: float = 0.8
    front: float = 2.0

    def __post_init__(self):
        for name in ("left", "right", "low", "high", "front"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"corridor.{name}_m must be positive, got {getattr(self, name)}")

    def at(self, height: float) -> CorridorConfig:
        return CorridorConfig(height - self.low, height + self.high, -self.left, self.right, self.front)


@dataclass(frozen=True)
class MissionConfig:
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    corridor: CorridorMargins = field(default_factory=CorridorMargins)
    dynamics: Dynamics = field(default_factory=Dynamics)
    helipad: HelipadParams = field(default_factory=HelipadParams)
    layout: RegionLayout = field(default_factory=RegionLayout)
    width: int = 320
    height: int = 256
    takeoff_height: float = 1.5
    scale_samples: int = 50
    scale_margin: int = 10
    labels: str = "truth"  # or "classifier"
    classifier: Optional[OvRClassifier] = None
    max_frames: int = 20000

    def __post_init__(self):
        if self.width < 16 or self.height < 16:
            raise ConfigError(f"render size {self.width}x{self.height} is too small")
        if self.labels not in ("truth", "classifier"):
            raise ConfigError(f"labels must be 'truth' or 'classifier', got {self.labels!r}")
        if self.labels == "classifier" and self.classifier is None:
            raise ConfigError("labels = classifier needs a trained classifier")
        if not 0 < self.takeoff_height < 5:
            raise ConfigError("takeoff height must lie inside the room")

    @property
    def intrinsics(self) -> CameraIntrinsics:
        return CameraIntrinsics.default(self.width, self.height)


STEP_FIELDS = ["frame", "time", "phase", "command", "forward", "lateral", "vertical", "yaw_cmd",
               "gimbal", "height", "x", "y", "yaw", "pitch", "detected", "collided"]
MISSION_FIELDS = ["seed", "policy", "outcome", "success", "crash", "timeout", "frames",
                  "mission_time", "distance_90s", "total_distance", "time_to_find_helipad",
                  "time_to_land", "final_x", "final_y", "final_height"]


def _fmt(value) -> str:
    if isinstance(value, float):
        return "nan" if math.isnan(value) else f"{value:.6f}"
    if isinstance(value, bool):
        return str(int(value))
    return str(value)


@dataclass
class MissionLog:
    seed: int
    policy: str
    outcome: Outcome
    frames: int
    mission_time: float
    distance_90s: float
    total_distance: float
    time_to_find_helipad: float
    time_to_land: float
    start: DroneState
    final: DroneState
    steps: list[dict] = field(default_factory=list)

    @property
    def success(self) -> bool:
        return self.outcome is Outcome.SUCCESS

    @property
    def crash(self) -> bool:
        return self.outcome is Outcome.CRASH

    @property
    def timeout(self) -> bool:
        return self.outcome is Outcome.TIMEOUT

    def row(self) -> dict:
        return {
            "seed": self.seed, "policy": self.policy, "outcome": self.outcome.value,
            "success": self.success, "crash": self.crash, "timeout": self.timeout,
            "frames": self.frames, "mission_time": self.mission_time,
            "distance_90s": self.distance_90s, "total_distance": self.total_distance,
            "time_to_find_helipad": self.time_to_find_helipad, "time_to_land": self.time_to_land,
            "final_x": self.final.x, "final_y": self.final.y, "final_height": self.final.height,
        }

    def csv_row(self) -> list[str]:
        row = self.row()
        return [_fmt(row[k]) for k in MISSION_FIELDS]

    def steps_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(STEP_FIELDS)
        for step in self.steps:
            writer.writerow([_fmt(step[k]) for k in STEP_FIELDS])
        return buf.getvalue()

    def commands(self) -> list[MovementCommand]:
        """Executed commands in order, rebuilt from the step records."""
        out = []
        for s in self.steps:
            gimbal = None if math.isnan(s["gimbal"]) else s["gimbal"]
            out.append(MovementCommand(forward=s["forward"], lateral=s["lateral"],
                                       vertical=s["vertical"], yaw=s["yaw_cmd"], gimbal=gimbal,
                                       land=s["command"] == "land"))
        return out


def start_state(scene: SceneSpec, cfg: MissionConfig, seed: int) -> DroneState:
    """Hover over the helipad centre at take-off height with a seeded heading."""
    rng = np.random.default_rng([int(seed), 0])
    yaw = float(rng.uniform(-math.pi, math.pi))
    return DroneState(height=cfg.takeoff_height, x=scene.helipad.center_x, y=scene.helipad.center_y,
                      yaw=yaw, pitch=cfg.policy.cruise_pitch, camera_offset=cfg.policy.camera_offset)


def on_helipad(scene: SceneSpec, drone: DroneState) -> bool:
    pad = scene.helipad
    resting = abs(drone.height - (pad.size_z + 0.05)) < 1e-6
    return resting and pad.contains_plan(drone.x, drone.y)


class _Perception:
    """Per-mission perception pipeline with a cache of frontal-plane masks."""

    def __init__(self, cfg: MissionConfig, kind: PolicyKind, scale_rng: np.random.Generator):
        self.cfg = cfg
        self.kind = kind
        self.K = cfg.intrinsics
        self.rng = scale_rng
        self._relevant: dict = {}
        self.metric: Optional[np.ndarray] = None

    def labels(self, frame) -> np.ndarray:
        if self.cfg.labels == "classifier":
            return segment_frame_grid(frame.rgb, self.cfg.classifier)
        return frame.labels

    def corridor(self, drone: DroneState, frame, labels: np.ndarray):
        pose = DronePose(x_t=drone.height, theta=drone.pitch, z_c=drone.camera_offset)
        try:
            est = adaptive_scale_factor(frame.relative_depth, labels == CARPET, self.K, pose,
                                        n=self.cfg.scale_samples, rng=self.rng,
                                        margin=self.cfg.scale_margin)
        except (InsufficientGroundError, DegenerateDepthError, HorizonError):
            return None
        metric = metric_depth(frame.relative_depth, est)
        self.metric = metric
        corridor = self.cfg.corridor.at(drone.height)
        key = (round(drone.height, 6), round(drone.pitch, 9))
        if key not in self._relevant:
            self._relevant[key] = front_relevant_mask(self.K, pose, corridor)
        return assess_frame(metric, self.K, pose, corridor, cap=self.cfg.policy.advance_cap,
                            relevant=self._relevant[key], upper_fraction=self.cfg.layout.upper_fraction)


def run_mission(scene: SceneSpec, kind, cfg: MissionConfig = MissionConfig(),
                noise: NoiseModel = NoiseModel(), seed: int = 0,
                record_steps: bool = True) -> MissionLog:
    kind = PolicyKind(kind)
    pcfg = cfg.policy
    K = cfg.intrinsics
    drone = start = start_state(scene, cfg, seed)
    decide_rng = np.random.default_rng([int(seed), 1])
    perception = _Perception(cfg, kind, np.random.default_rng([int(seed), 2]))

    state = MissionState()
    clock = 0.0
    distance = 0.0
    distance_90 = 0.0
    found_at = math.nan
    search_from = math.nan
    outcome = None
    steps = []
    frame_idx = 0

    while outcome is None:
        if frame_idx >= cfg.max_frames:
            outcome = Outcome.TIMEOUT
            break
        frame = degrade(render(scene, drone, K), noise, (seed, frame_idx))
        labels = largest_component_filter(perception.labels(frame))
        detection = detect_helipad(labels, cfg.helipad)
        counts = region_counts(labels, cfg.layout)
        report = None
        target_range = None
        perception.metric = None
        wants_depth = kind is PolicyKind.DEPTH_SEG and state.phase in (
            Phase.EXPLORE, Phase.SEARCH, Phase.APPROACH)
        if wants_depth:
            report = perception.corridor(drone, frame, labels)
            if perception.metric is not None and detection is not None:
                u, v = detection.center
                pixel = np.array([[int(round(u)), int(round(v))]])
                target_range = float(patch_median(perception.metric, pixel, 5)[0])
        obs = Observation(counts=counts, width=K.width, height=K.height, fx=K.fx, fy=K.fy,
                          cx=K.cx, cy=K.cy, altitude=drone.height, corridor=report,
                          target_range=target_range)

        before = state.phase
        state, cmd = mission_step(state, obs, detection, clock, pcfg, kind, decide_rng)
        if before is not Phase.SEARCH and state.phase is Phase.SEARCH and math.isnan(search_from):
            search_from = clock
        if before is Phase.SEARCH and state.phase is Phase.APPROACH and math.isnan(found_at):
            found_at = clock
        if state.phase is Phase.FAILED:
            outcome = Outcome.TIMEOUT if state.reason == "timeout" else Outcome.CRASH
            break

        result = apply_command(drone, cmd, scene, cfg.dynamics)
        if clock < pcfg.explore_duration:
            share = min(1.0, (pcfg.explore_duration - clock) / result.duration) if result.duration else 1.0
            distance_90 += result.distance * share
        clock += result.duration
        distance += result.distance
        drone = result.drone
        if record_steps:
            steps.append({
                "frame": frame_idx, "time": clock, "phase": before.value, "command": cmd.kind,
                "forward": cmd.forward, "lateral": cmd.lateral, "vertical": cmd.vertical,
                "yaw_cmd": cmd.yaw, "gimbal": math.nan if cmd.gimbal is None else cmd.gimbal,
                "height": drone.height, "x": drone.x, "y": drone.y, "yaw": drone.yaw,
                "pitch": drone.pitch, "detected": detection is not None, "collided": result.collided,
            })
        frame_idx += 1
        if result.collided:
            outcome = Outcome.CRASH
        elif state.phase is Phase.DONE:
            outcome = Outcome.SUCCESS if on_helipad(scene, drone) else Outcome.MISSED

    time_to_find = found_at - search_from if not math.isnan(found_at) else math.nan
    time_to_land = clock - found_at if outcome is Outcome.SUCCESS else math.nan
    log.debug("seed %d %s: %s after %.1f s", seed, kind.value, outcome.value, clock)
    return MissionLog(
        seed=int(seed), policy=kind.value, outcome=outcome, frames=frame_idx, mission_time=clock,
        distance_90s=distance_90, total_distance=distance, time_to_find_helipad=time_to_find,
        time_to_land=time_to_land, start=start, final=drone, steps=steps,
    )


def replay(scene: SceneSpec, mission: MissionLog, dynamics: Dynamics = Dynamics()) -> list[DroneState]:
    """Re-execute the logged commands; returns every intermediate state."""
    drone = mission.start
    states = [drone]
    for cmd in mission.commands():
        drone = apply_command(drone, cmd, scene, dynamics).drone
        states.append(drone)
        if drone.collided:
            break
    return states


__all__ = [
    "ConfigError", "CorridorMargins", "MISSION_FIELDS", "MissionConfig", "MissionLog", "Outcome",
    "STEP_FIELDS", "on_helipad", "replay", "run_mission", "start_state",
]
