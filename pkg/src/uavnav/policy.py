"""Flight policies and the mission state machine.

Rotation sign: positive yaw turns the drone to the right (clockwise seen
from above). Pixel thresholds are stated at the 224x112 reference
segmentation resolution and rescaled by frame area.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .safety_corridor import FrameCorridorReport, Plane
from .segmentation import CARPET, FLOOR_CLASSES, OBSTACLE_CLASSES, HelipadDetection

REFERENCE_AREA = 224 * 112
NADIR_PITCH = -math.pi / 2
DEFAULT_PITCH = math.radians(-25.0)


class FallbackToSegOnly(RuntimeError):
    """No usable metric depth this frame; decide with the segmentation-only rules."""


class PolicyKind(str, enum.Enum):
    SEG_ONLY = "seg_only"
    DEPTH_SEG = "depth_seg"


@dataclass(frozen=True)
class MovementCommand:
    forward: float = 0.0
    lateral: float = 0.0
    vertical: float = 0.0
    yaw: float = 0.0
    gimbal: Optional[float] = None
    land: bool = False

    def __post_init__(self):
        moving = any((self.forward, self.lateral, self.vertical))
        if sum((moving, self.yaw != 0.0, self.land)) > 1:
            raise ValueError(f"a command may translate, rotate or land, not several: {self}")

    @property
    def translation(self) -> tuple[float, float, float]:
        return (self.forward, self.lateral, self.vertical)

    @property
    def kind(self) -> str:
        if self.land:
            return "land"
        if self.yaw:
            return "rotate"
        if any(self.translation):
            return "translate"
        return "hover"


HOVER = MovementCommand()


@dataclass(frozen=True)
class RegionLayout:
    """Top band for obstacles and bottom band for the floor, as fractions of the frame height."""

    upper_fraction: float = 0.4
    lower_fraction: float = 0.25

    def rows(self, height: int) -> tuple[slice, slice]:
        upper = max(1, int(round(self.upper_fraction * height)))
        lower = max(1, int(round(self.lower_fraction * height)))
        return slice(0, upper), slice(height - lower, height)


@dataclass(frozen=True)
class RegionCounts:
    upper_obstacle: int
    lower_floor: int
    upper_left: int
    upper_right: int
    lower_left: int
    lower_right: int
    lower_carpet_left: int = 0
    lower_carpet_right: int = 0
    frame_area: int = REFERENCE_AREA


@dataclass(frozen=True)
class PidGains:
    kp: float = 0.8
    ki: float = 0.05
    kd: float = 0.1
    integral_limit: float = 1.0


@dataclass(frozen=True)
class PolicyConfig:
    lower_threshold: float = 1600
    upper_threshold: float = 900
    reference_area: int = REFERENCE_AREA
    explore_duration: float = 90.0
    approach_lost_frames: int = 15
    forward_step: float = 0.30
    advance_cap: float = 1.0
    min_advance: float = 0.05  # below this the frontal space counts as blocked
    camera_offset: float = 0.15
    mission_timeout: float = 300.0
    rotation_step: float = 0.35
    jitter: float = 0.1
    center_tolerance: float = 0.05
    ascend: float = 1.0
    align_gain: float = 0.6
    cruise_pitch: float = DEFAULT_PITCH
    search_holdoff: int = 3
    pid: PidGains = field(default_factory=PidGains)

    def __post_init__(self):
        for name in ("lower_threshold", "upper_threshold", "explore_duration", "forward_step",
                     "advance_cap", "camera_offset", "mission_timeout", "rotation_step"):
            if not getattr(self, name) > 0:
                raise ValueError(f"policy.{name} must be positive, got {getattr(self, name)}")
        if self.approach_lost_frames < 1:
            raise ValueError("policy.approach_lost_frames must be at least 1")
        if self.min_advance < 0:
            raise ValueError("policy.min_advance must be non-negative")
        if self.search_holdoff < 0:
            raise ValueError("policy.search_holdoff must be non-negative")

    def thresholds(self, frame_area: int) -> tuple[float, float]:
        k = frame_area / self.reference_area
        return self.lower_threshold * k, self.upper_threshold * k


# Upper-threshold presets: the rule list uses 900 px, the summary paragraph 1000 px.
UPPER_THRESHOLD_PRESETS = {"rules": 900, "summary": 1000}


def region_counts(mask: np.ndarray, layout: RegionLayout = RegionLayout()) -> RegionCounts:
    mask = np.asarray(mask)
    h, w = mask.shape
    upper, lower = layout.rows(h)
    half = w // 2
    obstacle = np.isin(mask[upper], OBSTACLE_CLASSES)
    floor = np.isin(mask[lower], FLOOR_CLASSES)
    carpet = mask[lower] == CARPET
    ul, ur = int(obstacle[:, :half].sum()), int(obstacle[:, half:].sum())
    ll, lr = int(floor[:, :half].sum()), int(floor[:, half:].sum())
    return RegionCounts(
        upper_obstacle=ul + ur, lower_floor=ll + lr,
        upper_left=ul, upper_right=ur, lower_left=ll, lower_right=lr,
        lower_carpet_left=int(carpet[:, :half].sum()), lower_carpet_right=int(carpet[:, half:].sum()),
        frame_area=h * w,
    )


def _toward_more_floor(counts: RegionCounts, step: float) -> MovementCommand:
    right, left = counts.lower_carpet_right, counts.lower_carpet_left
    return MovementCommand(yaw=step if right > left else -step)


def seg_only_decide(counts: RegionCounts, cfg: PolicyConfig) -> MovementCommand:
    """The four region-count rules; exactly one fires for any input."""
    lower_t, upper_t = cfg.thresholds(counts.frame_area)
    floor_ok = counts.lower_floor > lower_t
    clear_ahead = counts.upper_obstacle < upper_t
    if floor_ok and clear_ahead:
        return MovementCommand(forward=cfg.forward_step)
    if floor_ok:
        # turn toward the half with fewer obstacle pixels
        yaw = cfg.rotation_step if counts.upper_right < counts.upper_left else -cfg.rotation_step
        return MovementCommand(yaw=yaw)
    if clear_ahead:
        return _toward_more_floor(counts, cfg.rotation_step)
    return MovementCommand(yaw=math.pi)


def depth_seg_decide(counts: RegionCounts, report: Optional[FrameCorridorReport],
                     cfg: PolicyConfig) -> MovementCommand:
    """Floor-boundary rule first, then corridor breaches, else the largest safe advance.

    The forward move never exceeds the safe advance; when that is below
    ``min_advance`` the drone turns toward the clearer half instead.
    """
    if report is None:
        raise FallbackToSegOnly("no corridor report for this frame")
    lower_t, _ = cfg.thresholds(counts.frame_area)
    if counts.lower_floor <= lower_t:
        return _toward_more_floor(counts, cfg.rotation_step)
    if report.breach is Plane.RIGHT:
        return MovementCommand(yaw=-cfg.rotation_step)
    if report.breach is Plane.LEFT:
        return MovementCommand(yaw=cfg.rotation_step)
    if report.breach is not None or report.advance < cfg.min_advance:
        yaw = cfg.rotation_step if report.clearance_right > report.clearance_left else -cfg.rotation_step
        return MovementCommand(yaw=yaw)
    return MovementCommand(forward=min(report.advance, cfg.advance_cap))


@dataclass(frozen=True)
class PidState:
    integral: float = 0.0
    prev_error: Optional[float] = None


def pid_yaw(error: float, gains: PidGains, acc: PidState, limit: float) -> tuple[float, PidState]:
    """One discrete PID step (unit time step) with integral clamping and output saturation."""
    integral = min(max(acc.integral + error, -gains.integral_limit), gains.integral_limit)
    derivative = 0.0 if acc.prev_error is None else error - acc.prev_error
    out = gains.kp * error + gains.ki * integral + gains.kd * derivative
    out = min(max(out, -limit), limit)
    return out, PidState(integral, error)


class Phase(str, enum.Enum):
    EXPLORE = "explore"
    SEARCH = "search_helipad"
    APPROACH = "approach"
    ALIGN = "align_overhead"
    LAND = "land"
    DONE = "done"
    FAILED = "failed"


TERMINAL = (Phase.DONE, Phase.FAILED)


@dataclass(frozen=True)
class MissionState:
    phase: Phase = Phase.EXPLORE
    started: float = 0.0
    lost_count: int = 0
    seen: bool = False
    align_stage: int = 0
    pid: PidState = field(default_factory=PidState)
    last_v: float = math.nan  # image row of the last pad sighting
    turn: float = 0.0  # sign of the previous avoidance rotation, 0 after a move
    holdoff: int = 0  # exploration moves left before detections count again
    reason: str = ""


@dataclass(frozen=True)
class Observation:
    """What the controller knows about the current frame."""

    counts: RegionCounts
    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float
    altitude: float
    corridor: Optional[FrameCorridorReport] = None
    target_range: Optional[float] = None  # metric range to the detected pad, when known
    collided: bool = False


def explore_command(obs: Observation, kind: PolicyKind, cfg: PolicyConfig,
                    rng: Optional[np.random.Generator], turn: float = 0.0) -> MovementCommand:
    """One exploration decision.

    ``turn`` is the direction of an avoidance rotation made on the previous
    frame. While the view stays blocked the drone keeps rotating that way,
    which stops it dithering left and right when wedged between two boxes.
    """
    if kind is PolicyKind.DEPTH_SEG:
        try:
            cmd = depth_seg_decide(obs.counts, obs.corridor, cfg)
        except FallbackToSegOnly:
            cmd = seg_only_decide(obs.counts, cfg)
    else:
        cmd = seg_only_decide(obs.counts, cfg)
    if cmd.yaw and turn and abs(cmd.yaw) < math.pi:
        cmd = replace(cmd, yaw=math.copysign(abs(cmd.yaw), turn))
    if cmd.yaw and rng is not None and cfg.jitter > 0:
        cmd = replace(cmd, yaw=cmd.yaw + float(rng.uniform(-cfg.jitter, cfg.jitter)))
    return cmd


def _explore(state, obs, kind, cfg, rng):
    cmd = explore_command(obs, kind, cfg, rng, state.turn)
    turn = math.copysign(1.0, cmd.yaw) if cmd.yaw and abs(cmd.yaw) < math.pi else 0.0
    return replace(state, turn=turn), cmd


def _fail(state: MissionState, reason: str) -> tuple[MissionState, MovementCommand]:
    return replace(state, phase=Phase.FAILED, reason=reason), HOVER


def mission_step(
    state: MissionState,
    obs: Observation,
    detection: Optional[HelipadDetection],
    clock: float,
    cfg: PolicyConfig,
    kind: PolicyKind = PolicyKind.SEG_ONLY,
    rng: Optional[np.random.Generator] = None,
) -> tuple[MissionState, MovementCommand]:
    """Advance the mission by one frame and return the next command."""
    if state.phase in TERMINAL:
        return state, HOVER
    if obs.collided:
        return _fail(state, "collision")
    if clock >= cfg.mission_timeout:
        return _fail(state, "timeout")

    if state.phase is Phase.EXPLORE:
        if clock - state.started < cfg.explore_duration:
            return _explore(state, obs, kind, cfg, rng)
        state = replace(state, phase=Phase.SEARCH, started=clock)

    if state.phase is Phase.SEARCH:
        if state.holdoff > 0:
            state, cmd = _explore(state, obs, kind, cfg, rng)
            return replace(state, holdoff=state.holdoff - 1), cmd
        if detection is None:
            return _explore(state, obs, kind, cfg, rng)
        state = replace(state, phase=Phase.APPROACH, started=clock, lost_count=0,
                        seen=False, pid=PidState())

    if state.phase is Phase.APPROACH:
        return _approach(state, obs, detection, cfg, kind, rng)
    if state.phase is Phase.ALIGN:
        return _align(state, obs, detection, clock, cfg)
    if state.phase is Phase.LAND:
        return replace(state, phase=Phase.DONE), MovementCommand(land=True)
    raise AssertionError(f"unhandled phase {state.phase}")


def _approach(state, obs, detection, cfg, kind, rng):
    if detection is None:
        lost = state.lost_count + 1
        if lost < cfg.approach_lost_frames:
            return replace(state, lost_count=lost), HOVER
        if state.seen and state.last_v >= obs.cy:
            # the pad slid out under the bottom edge: we are close, look straight down
            state = replace(state, phase=Phase.ALIGN, align_stage=0, lost_count=0)
            return state, MovementCommand(gimbal=NADIR_PITCH)
        return replace(state, phase=Phase.SEARCH, lost_count=0), HOVER

    u, v = detection.center
    state = replace(state, lost_count=0, seen=True, last_v=v)
    offset = u - obs.cx
    if abs(offset) > cfg.center_tolerance * obs.width:
        error = math.atan2(offset, obs.fx)
        yaw, pid = pid_yaw(error, cfg.pid, state.pid, cfg.rotation_step)
        return replace(state, pid=pid), MovementCommand(yaw=yaw)
    state = replace(state, pid=PidState())
    report = obs.corridor
    if report is not None and report.breach is not None:
        behind_pad = obs.target_range is not None and report.breach_distance >= obs.target_range
        if not behind_pad:
            # something stands between us and the pad: explore a little, then retry
            state = replace(state, phase=Phase.SEARCH, lost_count=0, holdoff=cfg.search_holdoff)
            state, cmd = _explore(state, obs, kind, cfg, rng)
            return replace(state, holdoff=state.holdoff - 1), cmd
    return state, MovementCommand(forward=cfg.forward_step)


def _align(state, obs, detection, clock, cfg):
    if state.align_stage == 0:
        # gimbal is down; climb for a wider view of the pad
        return replace(state, align_stage=1), MovementCommand(vertical=cfg.ascend)
    if detection is None:
        lost = state.lost_count + 1
        if lost >= cfg.approach_lost_frames:
            # give up on this pass: back to cruise altitude and pitch, keep searching
            state = replace(state, phase=Phase.SEARCH, started=clock, lost_count=0, align_stage=0)
            return state, MovementCommand(vertical=-cfg.ascend, gimbal=cfg.cruise_pitch)
        return replace(state, lost_count=lost), HOVER

    state = replace(state, lost_count=0)
    u, v = detection.center
    du = u - obs.cx
    dv = v - obs.cy
    if abs(du) <= cfg.center_tolerance * obs.width and abs(dv) <= cfg.center_tolerance * obs.height:
        return replace(state, phase=Phase.LAND), MovementCommand(forward=cfg.camera_offset)
    # nadir view: image up is forward, image right is lateral right
    k = cfg.align_gain * obs.altitude
    return state, MovementCommand(forward=-dv * k / obs.fy, lateral=du * k / obs.fx)
