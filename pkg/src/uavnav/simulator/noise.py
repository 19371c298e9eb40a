"""Observation degradation: unknown per-frame depth scale, depth noise, label flips."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..segmentation import N_CLASSES
from .render import RenderOutput


@dataclass(frozen=True)
class NoiseModel:
    scale_min: float = 2.0
    scale_max: float = 12.0
    depth_sigma: float = 0.0
    flip_prob: float = 0.0
    rgb_sigma: float = 0.0
    normalize_max: bool = True
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.scale_min <= self.scale_max:
            raise ValueError(f"depth scale range must be positive, got [{self.scale_min}, {self.scale_max}]")
        if self.depth_sigma < 0 or self.rgb_sigma < 0:
            raise ValueError("noise sigmas must be non-negative")
        if not 0 <= self.flip_prob < 1:
            raise ValueError(f"flip probability must lie in [0, 1), got {self.flip_prob}")


class SealedScale:
    """Holds the true metres-per-relative-unit factor of a frame; tests call reveal()."""

    __slots__ = ("_value",)

    def __init__(self, value: float):
        self._value = float(value)

    def reveal(self) -> float:
        return self._value

    def __repr__(self):
        return "SealedScale(<hidden>)"


@dataclass
class DegradedFrame:
    relative_depth: np.ndarray
    labels: np.ndarray
    rgb: np.ndarray
    hidden_scale: SealedScale


def frame_rng(seed: int, frame_index) -> np.random.Generator:
    """Generator for one frame; ``frame_index`` may be an int or a tuple such as (mission, frame)."""
    keys = frame_index if isinstance(frame_index, tuple) else (frame_index,)
    return np.random.default_rng([int(seed), *(int(k) for k in keys)])


def degrade(frame: RenderOutput, noise: NoiseModel, frame_index) -> DegradedFrame:
    """Relative depth ``metric * noise / s*`` plus label and colour corruption.

    With ``normalize_max`` the map is additionally divided by its maximum and
    the sealed scale becomes the effective factor ``s* * max``.
    """
    rng = frame_rng(noise.seed, frame_index)
    s_star = float(rng.uniform(noise.scale_min, noise.scale_max))
    depth = frame.depth
    if noise.depth_sigma > 0:
        depth = depth * np.exp(noise.depth_sigma * rng.standard_normal(depth.shape))
    relative = depth / s_star
    scale = s_star
    if noise.normalize_max:
        peak = float(relative.max())
        relative = relative / peak
        scale = s_star * peak

    labels = frame.labels
    if noise.flip_prob > 0:
        flip = rng.random(labels.shape) < noise.flip_prob
        # a different class, uniformly among the other N_CLASSES - 1
        offset = rng.integers(1, N_CLASSES, size=labels.shape)
        flipped = ((labels.astype(int) + offset) % N_CLASSES).astype(np.uint8)
        labels = np.where(flip, flipped, labels)

    rgb = frame.rgb
    if noise.rgb_sigma > 0:
        rgb = np.clip(rgb + rng.normal(0.0, noise.rgb_sigma, rgb.shape), 0, 255).round().astype(np.uint8)

    return DegradedFrame(relative, labels, rgb, SealedScale(scale))
