"""Relative-to-metric depth conversion.

The per-frame adaptive scale compares geometric ground distances (from the
camera pose and the segmented ground) with the relative depth predicted at the
same pixels. The global calibration helpers fit a scale, or a scale and shift,
from (predicted, ground truth) pairs collected offline.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np
from scipy import ndimage

from .camera_geometry import CameraIntrinsics, DronePose, ground_distances

logger = logging.getLogger(__name__)

EPSILON_REL = 1e-6
DEFAULT_SAMPLES = 50
DEFAULT_MARGIN = 10
MIN_SAMPLES = 10
RESAMPLE_FACTOR = 3


class InsufficientGroundError(RuntimeError):
    """Too few eligible ground pixels to estimate a scale."""


class DegenerateDepthError(RuntimeError):
    """Most sampled relative depths are (numerically) zero."""


class DegenerateFitError(ValueError):
    """Least-squares fit with no spread in the predictions."""


class DivisionDomainError(ValueError):
    """Ratio method given a non-positive prediction."""


class EmptyRoiError(ValueError):
    pass


@dataclass(frozen=True)
class RegionOfInterest:
    """Half-open pixel rectangle ``[u0, u1) x [v0, v1)``."""

    u0: int
    v0: int
    u1: int
    v1: int

    def __post_init__(self):
        if not (self.u0 < self.u1 and self.v0 < self.v1):
            raise EmptyRoiError(f"empty region of interest {self}")

    def slices(self) -> tuple[slice, slice]:
        return slice(self.v0, self.v1), slice(self.u0, self.u1)


@dataclass
class ScaleEstimate:
    scale: float
    shift: Optional[float] = None
    n_samples: int = 0
    # rows of (u, v, geometric distance, relative depth)
    samples: np.ndarray = field(default_factory=lambda: np.empty((0, 4)), repr=False)

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")


def check_relative_depth(depth: np.ndarray) -> np.ndarray:
    depth = np.asarray(depth, dtype=float)
    if depth.ndim != 2:
        raise ValueError(f"relative depth map must be 2-D, got shape {depth.shape}")
    if not np.all(np.isfinite(depth)) or np.any(depth < 0):
        raise ValueError("relative depth must be finite and non-negative")
    if not np.any(depth > 0):
        raise ValueError("relative depth map is identically zero")
    return depth


def eligible_ground_pixels(ground_mask: np.ndarray, margin: int) -> np.ndarray:
    """(N, 2) array of ``(u, v)`` mask pixels more than ``margin`` px from any non-mask pixel.

    Pixels outside the image do not count as mask edges.
    """
    mask = np.asarray(ground_mask, dtype=bool)
    if margin > 0:
        structure = np.ones((2 * margin + 1, 2 * margin + 1), dtype=bool)
        mask = ndimage.binary_erosion(mask, structure=structure, border_value=1)
    vv, uu = np.nonzero(mask)
    return np.stack([uu, vv], axis=-1)


def sample_ground_points(
    ground_mask: np.ndarray,
    n: int,
    margin: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Draw ``n`` distinct eligible ground pixels uniformly at random."""
    eligible = eligible_ground_pixels(ground_mask, margin)
    if len(eligible) < n:
        raise InsufficientGroundError(
            f"{len(eligible)} eligible ground pixels (margin {margin}), {n} requested"
        )
    idx = rng.choice(len(eligible), size=n, replace=False)
    return eligible[idx]


def adaptive_scale_factor(
    depth: np.ndarray,
    ground_mask: np.ndarray,
    K: CameraIntrinsics,
    pose: DronePose,
    n: int = DEFAULT_SAMPLES,
    rng: Optional[np.random.Generator] = None,
    margin: int = DEFAULT_MARGIN,
    n_min: int = MIN_SAMPLES,
) -> ScaleEstimate:
    """Median ratio of geometric ground distance to relative depth at sampled ground pixels.

    Candidates whose rays miss the ground are skipped; at most ``3 n`` candidates
    are drawn. When fewer than ``n`` pixels are eligible but at least ``n_min``
    are, every eligible pixel is used.
    """
    depth = np.asarray(depth, dtype=float)
    rng = rng if rng is not None else np.random.default_rng(0)
    eligible = eligible_ground_pixels(ground_mask, margin)
    if len(eligible) < n_min:
        raise InsufficientGroundError(
            f"{len(eligible)} eligible ground pixels (margin {margin}), need at least {n_min}"
        )
    if len(eligible) < n:
        logger.debug("only %d eligible ground pixels; using all of them", len(eligible))
        candidates = eligible
        wanted = len(eligible)
    else:
        wanted = n
        count = min(len(eligible), RESAMPLE_FACTOR * n)
        candidates = eligible[rng.choice(len(eligible), size=count, replace=False)]

    distances = ground_distances(K, pose, candidates)
    hit = np.isfinite(distances)
    chosen = np.flatnonzero(hit)[:wanted]
    if len(chosen) < min(wanted, n_min):
        raise InsufficientGroundError(
            f"only {len(chosen)} of {len(candidates)} candidate rays reach the ground"
        )
    pixels = candidates[chosen]
    dist = distances[chosen]
    rel = depth[pixels[:, 1], pixels[:, 0]]

    usable = rel > EPSILON_REL
    if np.count_nonzero(~usable) * 2 > len(rel):
        raise DegenerateDepthError(
            f"{np.count_nonzero(~usable)} of {len(rel)} sampled relative depths are <= {EPSILON_REL}"
        )
    ratios = dist[usable] / rel[usable]
    samples = np.column_stack([pixels[usable].astype(float), dist[usable], rel[usable]])
    return ScaleEstimate(scale=float(np.median(ratios)), shift=None,
                         n_samples=int(usable.sum()), samples=samples)


def metric_depth(depth: np.ndarray, est: ScaleEstimate) -> np.ndarray:
    shift = est.shift if est.shift is not None else 0.0
    return est.scale * np.asarray(depth, dtype=float) + shift


def _as_pairs(pairs: Iterable[Sequence[float]]) -> tuple[np.ndarray, np.ndarray]:
    arr = np.asarray(list(pairs) if not isinstance(pairs, np.ndarray) else pairs, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"expected (predicted, ground_truth) pairs, got shape {arr.shape}")
    return arr[:, 0], arr[:, 1]


def fit_scale_shift_least_squares(pairs) -> tuple[float, float]:
    """Closed-form least-squares ``(scale, shift)`` for ``scale * pred + shift ~ gt``."""
    pred, gt = _as_pairs(pairs)
    if len(pred) < 2:
        raise DegenerateFitError("need at least two pairs")
    p_mean, g_mean = pred.mean(), gt.mean()
    dp = pred - p_mean
    sxx = float(dp @ dp)
    if sxx == 0.0:
        raise DegenerateFitError("predicted values have zero variance")
    scale = float(dp @ (gt - g_mean)) / sxx
    shift = float(g_mean - scale * p_mean)
    return scale, shift


def ratio_scale(pairs) -> float:
    pred, gt = _as_pairs(pairs)
    if len(pred) == 0:
        raise ValueError("no pairs given")
    if np.any(pred <= 0):
        raise DivisionDomainError("ratio method needs strictly positive predictions")
    return float(np.median(gt / pred))


def roi_stats(depth_map: np.ndarray, roi: RegionOfInterest) -> tuple[float, float, float]:
    """(mean, median, min) over the region of interest."""
    values = np.asarray(depth_map, dtype=float)[roi.slices()]
    if values.size == 0:
        raise EmptyRoiError(f"{roi} does not overlap the {depth_map.shape} map")
    return float(values.mean()), float(np.median(values)), float(values.min())


def patch_median(depth_map: np.ndarray, pixels: np.ndarray, size: int) -> np.ndarray:
    """Median of the ``size x size`` neighbourhood (clamped to the image) around each pixel."""
    depth_map = np.asarray(depth_map, dtype=float)
    if size <= 1:
        return depth_map[pixels[:, 1], pixels[:, 0]]
    h, w = depth_map.shape
    r = size // 2
    out = np.empty(len(pixels))
    for i, (u, v) in enumerate(np.asarray(pixels, dtype=int)):
        out[i] = np.median(depth_map[max(v - r, 0):min(v + r + 1, h), max(u - r, 0):min(u + r + 1, w)])
    return out


def read_pairs_csv(path: Union[str, Path]) -> np.ndarray:
    """Read a ``predicted,ground_truth_m`` CSV into an (N, 2) array."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"predicted", "ground_truth_m"} <= set(reader.fieldnames):
            raise ValueError(f"{path}: expected columns predicted, ground_truth_m")
        rows = [(float(r["predicted"]), float(r["ground_truth_m"])) for r in reader]
    return np.asarray(rows, dtype=float).reshape(-1, 2)


def write_pairs_csv(path: Union[str, Path], pairs) -> None:
    pred, gt = _as_pairs(pairs)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["predicted", "ground_truth_m"])
        for p, g in zip(pred, gt):
            writer.writerow([repr(float(p)), repr(float(g))])
