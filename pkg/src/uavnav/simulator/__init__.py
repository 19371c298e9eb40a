"""Deterministic raycast digital twin: scenes, rendering, sensor noise, kinematics and missions."""

from .kinematics import Dynamics, apply_command, collides
from .mission import ConfigError, MissionConfig, MissionLog, Outcome, replay, run_mission
from .noise import NoiseModel, degrade
from .render import DroneState, RenderOutput, render
from .scene import SceneSpec, default_scene, empty_scene, load_scene, parse_scene

__all__ = [
    "ConfigError", "Dynamics", "DroneState", "MissionConfig", "MissionLog", "NoiseModel", "Outcome",
    "RenderOutput", "SceneSpec", "apply_command", "collides", "default_scene", "degrade", "empty_scene",
    "load_scene", "parse_scene", "render", "replay", "run_mission",
]
