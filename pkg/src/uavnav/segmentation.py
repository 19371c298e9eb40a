"""Patch-based teacher segmentation.

40x40 HSV colour histograms feed a linear one-vs-rest classifier; whole frames
are labelled on a sparse grid, gaps are closed by nearest-grid-point dilation,
and stray fragments are removed by keeping the largest component per class.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
from scipy import ndimage

from .netpbm import write_pgm

logger = logging.getLogger(__name__)

N_CLASSES = 17
UNKNOWN = 255

BACKGROUND = 0
CARPET = 1
HELIPAD_BOX = 2
HELIPAD_H = 3
OBSTACLE_CLASSES = tuple(range(4, N_CLASSES))
FLOOR_CLASSES = (CARPET, HELIPAD_BOX, HELIPAD_H) + OBSTACLE_CLASSES

HUE_BINS, SAT_BINS, VAL_BINS = 90, 64, 36
FEATURE_DIM = HUE_BINS + SAT_BINS + VAL_BINS
PATCH_SIZE = 40


class EmptyPatchError(ValueError):
    pass


class DegenerateDataError(ValueError):
    def __init__(self, message: str, class_id: Optional[int] = None):
        super().__init__(message)
        self.class_id = class_id


def rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    """Hexcone RGB -> HSV. Input uint8 or float in [0, 1]; output H in degrees [0, 360), S, V in [0, 1]."""
    rgb = np.asarray(rgb)
    if rgb.dtype == np.uint8:
        rgb = rgb.astype(float) / 255.0
    else:
        rgb = rgb.astype(float)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    maxc = rgb.max(axis=-1)
    minc = rgb.min(axis=-1)
    delta = maxc - minc
    v = maxc
    s = np.where(maxc > 0, delta / np.where(maxc > 0, maxc, 1.0), 0.0)
    safe = np.where(delta > 0, delta, 1.0)
    rc, gc, bc = (maxc - r) / safe, (maxc - g) / safe, (maxc - b) / safe
    h = np.where(r == maxc, bc - gc, np.where(g == maxc, 2.0 + rc - bc, 4.0 + gc - rc))
    h = np.where(delta > 0, (h / 6.0) % 1.0, 0.0) * 360.0
    h = np.where(h >= 360.0, 0.0, h)
    return np.stack([h, s, v], axis=-1)


def hsv_bin_indices(hsv: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    h = np.minimum((hsv[..., 0] / 4.0).astype(int), HUE_BINS - 1)
    s = np.minimum((hsv[..., 1] * SAT_BINS).astype(int), SAT_BINS - 1)
    v = np.minimum((hsv[..., 2] * VAL_BINS).astype(int), VAL_BINS - 1)
    return h, s, v


def _normalise(hist: np.ndarray) -> np.ndarray:
    total = hist.sum(axis=-1, keepdims=True)
    return hist / np.where(total > 0, total, 1)


def patch_bounds(shape, center, size: int = PATCH_SIZE) -> tuple[int, int, int, int]:
    h, w = shape[:2]
    u, v = int(center[0]), int(center[1])
    half = size // 2
    return max(v - half, 0), min(v - half + size, h), max(u - half, 0), min(u - half + size, w)


def extract_patch_feature(image: np.ndarray, center, size: int = PATCH_SIZE) -> np.ndarray:
    """190-d feature: hue (90) ++ saturation (64) ++ value (36) histograms, each L1-normalised."""
    v0, v1, u0, u1 = patch_bounds(image.shape, center, size)
    if v1 <= v0 or u1 <= u0:
        raise EmptyPatchError(f"patch at {tuple(center)} has no pixels inside {image.shape[:2]}")
    hb, sb, vb = hsv_bin_indices(rgb_to_hsv(image[v0:v1, u0:u1]))
    return np.concatenate([
        _normalise(np.bincount(hb.ravel(), minlength=HUE_BINS).astype(float)),
        _normalise(np.bincount(sb.ravel(), minlength=SAT_BINS).astype(float)),
        _normalise(np.bincount(vb.ravel(), minlength=VAL_BINS).astype(float)),
    ])


def grid_features(image: np.ndarray, centers: np.ndarray, size: int = PATCH_SIZE) -> np.ndarray:
    """Patch features at many centres at once using per-bin summed-area tables."""
    h, w = image.shape[:2]
    centers = np.asarray(centers, dtype=int)
    half = size // 2
    v0 = np.clip(centers[:, 1] - half, 0, h)
    v1 = np.clip(centers[:, 1] - half + size, 0, h)
    u0 = np.clip(centers[:, 0] - half, 0, w)
    u1 = np.clip(centers[:, 0] - half + size, 0, w)
    if np.any((v1 <= v0) | (u1 <= u0)):
        raise EmptyPatchError("a grid patch falls entirely outside the image")

    parts = []
    for idx, nbins in zip(hsv_bin_indices(rgb_to_hsv(image)), (HUE_BINS, SAT_BINS, VAL_BINS)):
        onehot = np.zeros((h + 1, w + 1, nbins), dtype=np.int32)
        onehot[1:, 1:][np.arange(h)[:, None], np.arange(w)[None, :], idx] = 1
        sat = onehot.cumsum(axis=0).cumsum(axis=1)
        hist = sat[v1, u1] - sat[v0, u1] - sat[v1, u0] + sat[v0, u0]
        parts.append(_normalise(hist.astype(float)))
    return np.concatenate(parts, axis=1)


@dataclass
class OvRClassifier:
    """One linear scorer per class; prediction is the arg-max score."""

    weights: np.ndarray  # (n_classes, FEATURE_DIM)
    bias: np.ndarray  # (n_classes,)
    train_accuracy: float = field(default=float("nan"), compare=False)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.bias = np.asarray(self.bias, dtype=float)
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise ValueError("classifier weights must be finite")

    @property
    def n_classes(self) -> int:
        return len(self.bias)

    def scores(self, features: np.ndarray) -> np.ndarray:
        return np.asarray(features, dtype=float) @ self.weights.T + self.bias

    def predict(self, features: np.ndarray) -> np.ndarray:
        # np.argmax returns the first maximum, i.e. the lowest class id on ties
        return np.argmax(self.scores(np.atleast_2d(features)), axis=1)

    def save(self, path: Union[str, Path]) -> None:
        """Plain-text matrix, one row per class: weights followed by the bias."""
        np.savetxt(path, np.column_stack([self.weights, self.bias]), fmt="%.17g",
                   header=f"ovr-linear classes={self.n_classes} dim={self.weights.shape[1]}")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "OvRClassifier":
        table = np.atleast_2d(np.loadtxt(path))
        return cls(table[:, :-1], table[:, -1])


def train_one_vs_rest(
    features: np.ndarray,
    labels: np.ndarray,
    epochs: int = 50,
    l2: float = 1e-4,
    rate: float = 0.1,
    rng: Optional[np.random.Generator] = None,
    n_classes: int = N_CLASSES,
    init_scale: float = 1e-3,
) -> OvRClassifier:
    """Hinge-loss one-vs-rest linear classifier by full-batch subgradient descent.

    Each epoch ``t`` takes one step of size ``rate / sqrt(t)`` along the
    subgradient of the mean hinge loss plus ``l2/2 |w|^2``. The generator only
    draws the small initial weights, so the mean-loss objective makes the fit
    insensitive to duplicating the training set.
    """
    X = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=int)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError(f"features {X.shape} and labels {y.shape} do not match")
    present = np.bincount(y, minlength=n_classes)
    if np.count_nonzero(present) < 2:
        raise DegenerateDataError("need at least two distinct labels")
    missing = np.flatnonzero(present == 0)
    if len(missing):
        raise DegenerateDataError(f"class {int(missing[0])} has no training samples", int(missing[0]))

    rng = rng if rng is not None else np.random.default_rng(0)
    n, dim = X.shape
    W = rng.normal(scale=init_scale, size=(n_classes, dim)) if init_scale > 0 else np.zeros((n_classes, dim))
    b = np.zeros(n_classes)
    Y = np.where(y[:, None] == np.arange(n_classes)[None, :], 1.0, -1.0)  # (n, C)

    for t in range(1, epochs + 1):
        margins = Y * (X @ W.T + b)
        active = (margins < 1.0) * Y  # (n, C), zero where the hinge is flat
        grad_W = l2 * W - active.T @ X / n
        grad_b = -active.sum(axis=0) / n
        step = rate / math.sqrt(t)
        W -= step * grad_W
        b -= step * grad_b

    clf = OvRClassifier(W, b)
    clf.train_accuracy = float(np.mean(clf.predict(X) == y))
    logger.info("trained one-vs-rest classifier on %d samples, train accuracy %.4f", n, clf.train_accuracy)
    return clf


def classify_patch(clf: OvRClassifier, feature: np.ndarray) -> int:
    return int(clf.predict(feature)[0])


def grid_axis(length: int, step: int) -> np.ndarray:
    return np.arange(step // 2, length, step)


def _nearest_on_axis(length: int, coords: np.ndarray, step: int) -> tuple[np.ndarray, np.ndarray]:
    """Index of the nearest grid coordinate for every pixel along one axis, and its distance."""
    pix = np.arange(length)
    off = step // 2
    # ties go to the lower grid index
    idx = np.ceil((pix - off) / step - 0.5).astype(int)
    idx = np.clip(idx, 0, len(coords) - 1)
    return idx, np.abs(pix - coords[idx])


def segment_frame_grid(
    image: np.ndarray,
    clf: OvRClassifier,
    step: int = 5,
    patch: int = PATCH_SIZE,
    dilation_radius: Optional[int] = None,
) -> np.ndarray:
    """Classify patches on a regular grid and spread each label to nearby pixels.

    A pixel takes the label of its nearest grid point when that point lies
    within ``dilation_radius`` (Chebyshev); otherwise it is UNKNOWN.
    """
    h, w = image.shape[:2]
    if dilation_radius is None:
        dilation_radius = math.ceil(step / 2) + 1 if step > 1 else 0
    us, vs = grid_axis(w, step), grid_axis(h, step)
    gu, gv = np.meshgrid(us, vs)
    centers = np.stack([gu.ravel(), gv.ravel()], axis=-1)
    grid_labels = clf.predict(grid_features(image, centers, patch)).reshape(len(vs), len(us))

    iu, du = _nearest_on_axis(w, us, step)
    iv, dv = _nearest_on_axis(h, vs, step)
    out = grid_labels[iv[:, None], iu[None, :]].astype(np.uint8)
    far = np.maximum(dv[:, None], du[None, :]) > dilation_radius
    out[far] = UNKNOWN
    return out


_FOUR_CONNECTED = ndimage.generate_binary_structure(2, 1)


def largest_component_filter(mask: np.ndarray, skip=(BACKGROUND, CARPET)) -> np.ndarray:
    """Keep only the largest 4-connected component of every class not in ``skip``."""
    mask = np.asarray(mask)
    out = mask.copy()
    for cls in np.unique(mask):
        if cls in skip or cls == UNKNOWN:
            continue
        comp, n = ndimage.label(mask == cls, structure=_FOUR_CONNECTED)
        if n <= 1:
            continue
        sizes = np.bincount(comp.ravel())[1:]
        keep = int(np.argmax(sizes)) + 1  # first largest on ties
        out[(comp > 0) & (comp != keep)] = UNKNOWN
    return out


@dataclass(frozen=True)
class HelipadDetection:
    center: tuple[float, float]
    bbox: tuple[int, int, int, int]  # u0, v0, u1, v1 (inclusive)
    score: float
    h_area: int = 0


@dataclass(frozen=True)
class HelipadParams:
    h_class: int = HELIPAD_H
    box_class: int = HELIPAD_BOX
    threshold: float = 0.5
    min_h_area: int = 8
    min_box_area: int = 8
    fill_floor: float = 0.25


def _components(mask: np.ndarray, cls: int) -> list[dict]:
    comp, n = ndimage.label(mask == cls, structure=_FOUR_CONNECTED)
    if n == 0:
        return []
    out = []
    for i, sl in enumerate(ndimage.find_objects(comp), start=1):
        region = comp[sl] == i
        vv, uu = np.nonzero(region)
        area = len(vv)
        u0, v0 = sl[1].start, sl[0].start
        out.append({
            "area": area,
            "centroid": (float(uu.mean() + u0), float(vv.mean() + v0)),
            "bbox": (u0, v0, sl[1].stop - 1, sl[0].stop - 1),
        })
    return out


def _pair_score(hc: dict, bc: dict, fill_floor: float) -> float:
    u0 = min(hc["bbox"][0], bc["bbox"][0])
    v0 = min(hc["bbox"][1], bc["bbox"][1])
    u1 = max(hc["bbox"][2], bc["bbox"][2])
    v1 = max(hc["bbox"][3], bc["bbox"][3])
    diag = math.hypot(u1 - u0 + 1, v1 - v0 + 1)
    dist = math.dist(hc["centroid"], bc["centroid"])
    proximity = max(0.0, 1.0 - dist / diag)

    cu, cv = hc["centroid"]
    bu0, bv0, bu1, bv1 = bc["bbox"]
    contained = bu0 <= cu <= bu1 and bv0 <= cv <= bv1
    containment = 1.0 if contained else 0.4

    def fill(c):
        bu0, bv0, bu1, bv1 = c["bbox"]
        return c["area"] / ((bu1 - bu0 + 1) * (bv1 - bv0 + 1))

    compactness = min(1.0, fill(hc) / fill_floor) * min(1.0, fill(bc) / fill_floor)
    return proximity * containment * compactness


def detect_helipad(mask: np.ndarray, params: HelipadParams = HelipadParams()) -> Optional[HelipadDetection]:
    """Best (H sign, helipad box) component pair, or None when no pair scores above threshold."""
    h_comps = [c for c in _components(mask, params.h_class) if c["area"] >= params.min_h_area]
    if not h_comps:
        return None
    b_comps = [c for c in _components(mask, params.box_class) if c["area"] >= params.min_box_area]
    best = None
    for hc in h_comps:
        for bc in b_comps:
            score = _pair_score(hc, bc, params.fill_floor)
            if best is None or score > best[0]:
                best = (score, hc, bc)
    if best is None or best[0] < params.threshold:
        return None
    score, hc, bc = best
    bbox = (
        min(hc["bbox"][0], bc["bbox"][0]), min(hc["bbox"][1], bc["bbox"][1]),
        max(hc["bbox"][2], bc["bbox"][2]), max(hc["bbox"][3], bc["bbox"][3]),
    )
    return HelipadDetection(center=hc["centroid"], bbox=bbox, score=score, h_area=hc["area"])


def write_label_pgm(path: Union[str, Path], labels: np.ndarray) -> None:
    """Class image as an 8-bit binary PGM (UNKNOWN stays 255)."""
    write_pgm(path, np.asarray(labels, dtype=np.uint8))
