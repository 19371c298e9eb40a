"""Training and evaluation data for the patch classifier, drawn from the simulator palette.

Training patches are 40x40 tiles of one class colour with sensor noise and,
optionally, an intruding rectangle of another class covering less than half of
the tile (the label is always the majority class). Evaluation frames are
renders of the scene from random collision-free poses.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional, Union

import numpy as np
from scipy import ndimage

from .camera_geometry import CameraIntrinsics
from .netpbm import read_ppm, write_ppm
from .segmentation import N_CLASSES, PATCH_SIZE, extract_patch_feature
from .simulator.kinematics import collides
from .simulator.render import DroneState, RenderOutput, render
from .simulator.scene import SceneSpec

logger = logging.getLogger(__name__)

PATCH_FIELDS = ["image", "u", "v", "class_id"]


@dataclass(frozen=True)
class CorpusSpec:
    per_class: int = 120
    rgb_sigma: float = 6.0
    mix_max: float = 0.35  # largest area share of an intruding class
    mix_prob: float = 0.5
    size: int = PATCH_SIZE


def synthetic_patch(palette: dict, cls: int, rng: np.random.Generator, spec: CorpusSpec) -> np.ndarray:
    """One noisy tile whose majority class is ``cls``."""
    s = spec.size
    tile = np.empty((s, s, 3), dtype=float)
    tile[:] = palette[cls]
    if rng.random() < spec.mix_prob:
        other = int(rng.integers(0, N_CLASSES - 1))
        other += other >= cls
        share = rng.uniform(0.05, spec.mix_max)
        # a band entering from one side, so the intruder is a contiguous region
        depth = max(1, int(math.floor(share * s)))
        side = int(rng.integers(4))
        if side == 0:
            tile[:depth] = palette[other]
        elif side == 1:
            tile[-depth:] = palette[other]
        elif side == 2:
            tile[:, :depth] = palette[other]
        else:
            tile[:, -depth:] = palette[other]
    tile += rng.normal(0.0, spec.rgb_sigma, tile.shape)
    return np.clip(tile, 0, 255).round().astype(np.uint8)


def synthetic_corpus(palette: dict, spec: CorpusSpec = CorpusSpec(),
                     rng: Optional[np.random.Generator] = None) -> tuple[np.ndarray, np.ndarray]:
    """Features and labels for ``per_class`` tiles of every class, class-major order."""
    rng = rng if rng is not None else np.random.default_rng(0)
    feats, labels = [], []
    centre = (spec.size // 2, spec.size // 2)
    for cls in range(N_CLASSES):
        for _ in range(spec.per_class):
            tile = synthetic_patch(palette, cls, rng, spec)
            feats.append(extract_patch_feature(tile, centre, spec.size))
            labels.append(cls)
    return np.asarray(feats), np.asarray(labels)


def split_holdout(n: int, fraction: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    order = rng.permutation(n)
    cut = int(round(n * (1.0 - fraction)))
    return np.sort(order[:cut]), np.sort(order[cut:])


def write_patch_dataset(directory: Union[str, Path], palette: dict, spec: CorpusSpec = CorpusSpec(),
                        rng: Optional[np.random.Generator] = None, per_row: int = 16) -> Path:
    """Write tiles as mosaic PPMs (one per class) plus ``patches.csv`` with their centres."""
    rng = rng if rng is not None else np.random.default_rng(0)
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    s = spec.size
    rows = []
    for cls in range(N_CLASSES):
        n_rows = math.ceil(spec.per_class / per_row)
        mosaic = np.zeros((n_rows * s, per_row * s, 3), dtype=np.uint8)
        name = f"class_{cls:02d}.ppm"
        for i in range(spec.per_class):
            r, c = divmod(i, per_row)
            mosaic[r * s:(r + 1) * s, c * s:(c + 1) * s] = synthetic_patch(palette, cls, rng, spec)
            rows.append([name, c * s + s // 2, r * s + s // 2, cls])
        write_ppm(directory / name, mosaic)
    index = directory / "patches.csv"
    with open(index, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(PATCH_FIELDS)
        writer.writerows(rows)
    return index


def read_patch_dataset(index: Union[str, Path], size: int = PATCH_SIZE) -> tuple[np.ndarray, np.ndarray]:
    """Features and labels from a CSV of (image, u, v, class_id); image paths are relative to the CSV."""
    index = Path(index)
    images: dict[str, np.ndarray] = {}
    feats, labels = [], []
    with open(index, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(PATCH_FIELDS) - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"{index}: missing columns {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                u, v, cls = int(row["u"]), int(row["v"]), int(row["class_id"])
            except ValueError:
                raise ValueError(f"{index}:{lineno}: u, v and class_id must be integers") from None
            if not 0 <= cls < N_CLASSES:
                raise ValueError(f"{index}:{lineno}: class_id {cls} out of range")
            name = row["image"]
            if name not in images:
                images[name] = read_ppm(index.parent / name)
            feats.append(extract_patch_feature(images[name], (u, v), size))
            labels.append(cls)
    if not feats:
        raise ValueError(f"{index}: no patches")
    return np.asarray(feats), np.asarray(labels)


def random_poses(scene: SceneSpec, n: int, rng: np.random.Generator, height: float = 1.5,
                 pitch: float = math.radians(-25.0), margin: float = 0.1) -> Iterator[DroneState]:
    """Collision-free poses over the carpet with uniform heading."""
    x0, x1, y0, y1 = scene.carpet.bounds
    produced = 0
    while produced < n:
        x = float(rng.uniform(x0 + margin, x1 - margin))
        y = float(rng.uniform(y0 + margin, y1 - margin))
        yaw = float(rng.uniform(-math.pi, math.pi))
        if collides(scene, height, x, y, yaw):
            continue
        produced += 1
        yield DroneState(height=height, x=x, y=y, yaw=yaw, pitch=pitch)


def boundary_distance(labels: np.ndarray) -> np.ndarray:
    """Euclidean pixel distance to the nearest pixel whose 4-neighbourhood holds another class."""
    labels = np.asarray(labels)
    edge = np.zeros(labels.shape, dtype=bool)
    diff_v = labels[1:] != labels[:-1]
    diff_u = labels[:, 1:] != labels[:, :-1]
    edge[1:] |= diff_v
    edge[:-1] |= diff_v
    edge[:, 1:] |= diff_u
    edge[:, :-1] |= diff_u
    if not edge.any():
        return np.full(labels.shape, np.inf)
    return ndimage.distance_transform_edt(~edge)


def helipad_frames(scene: SceneSpec, K: CameraIntrinsics, n: int, rng: np.random.Generator,
                   min_h_area: int = 40) -> Iterator[tuple[RenderOutput, bool]]:
    """Alternate frames with the H sign visible (at least ``min_h_area`` px) and without any of it.

    Poses with a sliver of the sign (between 1 and ``min_h_area`` px) are skipped:
    they are neither clear positives nor clean negatives.
    """
    want_positive = True
    produced = 0
    pad = scene.helipad
    while produced < n:
        if want_positive:
            # look back at the pad from 1 to 3 m away
            r = rng.uniform(1.0, 3.0)
            ang = rng.uniform(-math.pi, math.pi)
            x = pad.center_x + r * math.sin(ang)
            y = pad.center_y + r * math.cos(ang)
            yaw = math.atan2(pad.center_x - x, pad.center_y - y) + rng.uniform(-0.4, 0.4)
            cx0, cx1, cy0, cy1 = scene.carpet.bounds
            if not (cx0 < x < cx1 and cy0 < y < cy1) or collides(scene, 1.5, x, y, yaw):
                continue
            drone = DroneState(1.5, x, y, yaw=yaw)
        else:
            drone = next(random_poses(scene, 1, rng))
        frame = render(scene, drone, K)
        h_area = int(np.count_nonzero(frame.labels == pad.patch_class))
        if want_positive and h_area < min_h_area:
            continue
        if not want_positive and h_area > 0:
            continue
        yield frame, want_positive
        produced += 1
        want_positive = not want_positive
