"""Line-oriented ``key = value`` configuration shared by the CLI and the simulator.

Recognised namespaces::

    policy.<field>        PolicyConfig fields; policy.pid_kp / pid_ki / pid_kd /
                          pid_integral_limit for the heading controller;
                          policy.upper_threshold also accepts the presets
                          "rules" (900) and "summary" (1000)
    corridor.left_m, corridor.right_m, corridor.low_m, corridor.high_m,
    corridor.front_m, corridor.advance_cap_m
    noise.<field>         NoiseModel fields (scale_min, scale_max, depth_sigma, ...)
    dynamics.<field>      Dynamics fields (speed, yaw_rate, command_overhead, ...)
    helipad.<field>       HelipadParams fields (threshold, min_h_area, ...)
    layout.upper_fraction, layout.lower_fraction
    sim.width, sim.height, sim.takeoff_height, sim.scale_samples,
    sim.scale_margin, sim.labels (truth | classifier), sim.classifier (path)
    batch.workers

Blank lines and ``#`` comments are ignored; a repeated key is an error.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Union

from .policy import UPPER_THRESHOLD_PRESETS, PidGains, PolicyConfig
from .segmentation import OvRClassifier
from .simulator.mission import ConfigError, MissionConfig
from .simulator.noise import NoiseModel

_CORRIDOR_KEYS = {"left_m": "left", "right_m": "right", "low_m": "low", "high_m": "high",
                  "front_m": "front"}
_SIM_KEYS = {"width", "height", "takeoff_height", "scale_samples", "scale_margin", "labels",
             "classifier"}


@dataclass
class RunSettings:
    """Everything a CLI run needs beyond the scene and the command-line flags."""

    mission: MissionConfig = field(default_factory=MissionConfig)
    noise: NoiseModel = field(default_factory=NoiseModel)
    workers: Optional[int] = None


def parse_config_text(text: str, path: str = "<config>") -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value, got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{path}:{lineno}: empty key")
        if key in values:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        values[key] = value
    return values


def _coerce(key: str, raw: str, like):
    try:
        if isinstance(like, bool):
            lowered = raw.lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(like, int):
            return int(raw)
        if isinstance(like, float) or like is None:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"{key}: cannot read {raw!r} as {type(like).__name__}") from None


def _apply(obj, prefix: str, overrides: dict[str, str]):
    """Return ``obj`` with dataclass fields replaced from ``prefix.<field>`` keys."""
    names = {f.name for f in dataclasses.fields(obj)}
    changes = {}
    for name, raw in overrides.items():
        if name not in names:
            raise ConfigError(f"unknown key {prefix}.{name}")
        changes[name] = _coerce(f"{prefix}.{name}", raw, getattr(obj, name))
    try:
        return replace(obj, **changes)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def settings_from_values(values: dict[str, str], base: Optional[RunSettings] = None) -> RunSettings:
    base = base or RunSettings()
    groups: dict[str, dict[str, str]] = {}
    for key, raw in values.items():
        if "." not in key:
            raise ConfigError(f"key {key!r} needs a namespace such as policy. or corridor.")
        ns, name = key.split(".", 1)
        groups.setdefault(ns, {})[name] = raw
    known = {"policy", "corridor", "noise", "dynamics", "helipad", "layout", "sim", "batch"}
    for ns in groups:
        if ns not in known:
            raise ConfigError(f"unknown namespace {ns!r}")

    mission = base.mission
    policy_vals = dict(groups.get("policy", {}))
    pid_vals = {k[4:]: policy_vals.pop(k) for k in list(policy_vals) if k.startswith("pid_")}
    preset = policy_vals.get("upper_threshold")
    if preset in UPPER_THRESHOLD_PRESETS:
        policy_vals["upper_threshold"] = str(UPPER_THRESHOLD_PRESETS[preset])
    corridor_vals = dict(groups.get("corridor", {}))
    if "advance_cap_m" in corridor_vals:
        policy_vals["advance_cap"] = corridor_vals.pop("advance_cap_m")
    policy = mission.policy
    if pid_vals:
        policy = replace(policy, pid=_apply(policy.pid, "policy.pid", pid_vals))
    policy = _apply(policy, "policy", policy_vals)

    renamed = {}
    for name, raw in corridor_vals.items():
        if name not in _CORRIDOR_KEYS:
            raise ConfigError(f"unknown key corridor.{name}")
        renamed[_CORRIDOR_KEYS[name]] = raw
    corridor = _apply(mission.corridor, "corridor", renamed)

    sim_vals = dict(groups.get("sim", {}))
    unknown = set(sim_vals) - _SIM_KEYS
    if unknown:
        raise ConfigError(f"unknown key sim.{sorted(unknown)[0]}")
    classifier = mission.classifier
    if "classifier" in sim_vals:
        path = sim_vals.pop("classifier")
        try:
            classifier = OvRClassifier.load(path)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"sim.classifier: cannot load {path}: {exc}") from None
    try:
        mission = replace(
            mission,
            policy=policy,
            corridor=corridor,
            dynamics=_apply(mission.dynamics, "dynamics", groups.get("dynamics", {})),
            helipad=_apply(mission.helipad, "helipad", groups.get("helipad", {})),
            layout=_apply(mission.layout, "layout", groups.get("layout", {})),
            classifier=classifier,
            **{k: _coerce(f"sim.{k}", v, getattr(mission, k)) for k, v in sim_vals.items()},
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    noise = _apply(base.noise, "noise", groups.get("noise", {}))
    workers = base.workers
    batch = groups.get("batch", {})
    for name, raw in batch.items():
        if name != "workers":
            raise ConfigError(f"unknown key batch.{name}")
        workers = _coerce("batch.workers", raw, 1)
        if workers < 1:
            raise ConfigError("batch.workers must be at least 1")
    return RunSettings(mission=mission, noise=noise, workers=workers)


def load_config(path: Union[str, Path], base: Optional[RunSettings] = None) -> RunSettings:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return settings_from_values(parse_config_text(text, str(path)), base)


def format_settings(settings: RunSettings) -> str:
    """Render every recognised key with its current value (round-trips through load_config)."""
    m = settings.mission
    lines = []
    for f in dataclasses.fields(PolicyConfig):
        if f.name != "pid":
            lines.append(f"policy.{f.name} = {getattr(m.policy, f.name)}")
    for f in dataclasses.fields(PidGains):
        lines.append(f"policy.pid_{f.name} = {getattr(m.policy.pid, f.name)}")
    for key, name in _CORRIDOR_KEYS.items():
        lines.append(f"corridor.{key} = {getattr(m.corridor, name)}")
    for prefix, obj in (("noise", settings.noise), ("dynamics", m.dynamics), ("helipad", m.helipad),
                        ("layout", m.layout)):
        for f in dataclasses.fields(obj):
            lines.append(f"{prefix}.{f.name} = {getattr(obj, f.name)}")
    for name in ("width", "height", "takeoff_height", "scale_samples", "scale_margin", "labels"):
        lines.append(f"sim.{name} = {getattr(m, name)}")
    if settings.workers is not None:
        lines.append(f"batch.workers = {settings.workers}")
    return "\n".join(lines) + "\n"


__all__ = ["ConfigError", "RunSettings", "format_settings", "load_config", "parse_config_text",
           "settings_from_values"]
