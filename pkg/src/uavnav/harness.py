"""Batch experiments and evaluation reports behind the command-line interface.

Every report is a plain CSV with a fixed header; floats are written with six
decimals so reruns with the same seeds give identical bytes.
"""

from __future__ import annotations

import csv
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .camera_geometry import CameraIntrinsics, DronePose
from .corpus import (
    CorpusSpec,
    boundary_distance,
    helipad_frames,
    random_poses,
    split_holdout,
    synthetic_corpus,
)
from .metric_depth import (
    InsufficientGroundError,
    adaptive_scale_factor,
    fit_scale_shift_least_squares,
    metric_depth,
    patch_median,
    ratio_scale,
)
from .policy import PolicyKind
from .segmentation import (
    CARPET,
    N_CLASSES,
    OBSTACLE_CLASSES,
    UNKNOWN,
    HelipadParams,
    OvRClassifier,
    detect_helipad,
    largest_component_filter,
    segment_frame_grid,
    train_one_vs_rest,
)
from .simulator.mission import MISSION_FIELDS, MissionConfig, MissionLog, run_mission
from .simulator.noise import NoiseModel, degrade
from .simulator.render import render
from .simulator.scene import SceneSpec

logger = logging.getLogger(__name__)

SUMMARY_METRICS = ("time_to_find_helipad", "time_to_land", "distance_90s", "total_distance")
SUMMARY_FIELDS = ["policy", "missions", "success", "crash", "timeout", "missed", "success_rate"] + [
    f"{stat}_{metric}" for metric in SUMMARY_METRICS for stat in ("median", "mean")
]
HISTOGRAM_BINS = {
    "time_to_find_helipad": np.arange(0.0, 301.0, 10.0),
    "time_to_land": np.arange(0.0, 301.0, 10.0),
    "distance_90s": np.arange(0.0, 41.0, 1.0),
    "total_distance": np.arange(0.0, 121.0, 4.0),
}
CALIB_FIELDS = ["method", "n", "mean", "median", "min", "max", "rmse", "std"]
PATCH_SIZES = (3, 5, 7, 9)


def fmt(value, exact: bool = False) -> str:
    """Six decimals by default; ``exact`` writes the shortest round-tripping repr."""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        if math.isnan(value):
            return "nan"
        return repr(float(value)) if exact else f"{float(value):.6f}"
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence], exact: bool = False) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v, exact) for v in row])


# --------------------------------------------------------------------------- missions


@dataclass
class BatchSpec:
    scene: SceneSpec
    policies: tuple[PolicyKind, ...]
    missions: int
    seed: int
    mission: MissionConfig = field(default_factory=MissionConfig)
    noise: NoiseModel = field(default_factory=NoiseModel)
    record_steps: bool = False


def _run_one(args) -> MissionLog:
    spec, kind, seed = args
    return run_mission(spec.scene, kind, spec.mission, spec.noise, seed, record_steps=spec.record_steps)


def run_batch(spec: BatchSpec, workers: Optional[int] = None) -> list[MissionLog]:
    """Run ``missions`` seeds per policy; output order is (policy, seed) whatever the pool does."""
    if spec.missions < 1:
        raise ValueError("mission count must be at least 1")
    jobs = [(spec, kind, spec.seed + i) for kind in spec.policies for i in range(spec.missions)]
    workers = workers or os.cpu_count() or 1
    if workers == 1 or len(jobs) == 1:
        logs = [_run_one(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            logs = list(pool.map(_run_one, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    order = {k.value: i for i, k in enumerate(spec.policies)}
    return sorted(logs, key=lambda m: (order[m.policy], m.seed))


def _nan_stats(values: np.ndarray) -> tuple[float, float]:
    finite = values[np.isfinite(values)]
    if len(finite) == 0:
        return math.nan, math.nan
    return float(np.median(finite)), float(np.mean(finite))


def _as_written(value: float) -> float:
    """The value a reader of missions.csv sees, so summaries recompute exactly from the file."""
    return math.nan if math.isnan(value) else float(f"{value:.6f}")


def summarize(logs: Sequence[MissionLog]) -> list[dict]:
    out = []
    for policy in dict.fromkeys(m.policy for m in logs):
        group = [m for m in logs if m.policy == policy]
        row = {
            "policy": policy,
            "missions": len(group),
            "success": sum(m.success for m in group),
            "crash": sum(m.crash for m in group),
            "timeout": sum(m.timeout for m in group),
            "missed": sum(m.outcome.value == "missed" for m in group),
        }
        row["success_rate"] = row["success"] / len(group)
        for metric in SUMMARY_METRICS:
            med, mean = _nan_stats(np.array([_as_written(getattr(m, metric)) for m in group]))
            row[f"median_{metric}"] = med
            row[f"mean_{metric}"] = mean
        out.append(row)
    return out


def histograms(logs: Sequence[MissionLog]) -> list[tuple]:
    rows = []
    for policy in dict.fromkeys(m.policy for m in logs):
        group = [m for m in logs if m.policy == policy]
        for metric, edges in HISTOGRAM_BINS.items():
            values = np.array([getattr(m, metric) for m in group], dtype=float)
            values = values[np.isfinite(values)]
            counts, _ = np.histogram(np.clip(values, edges[0], edges[-1]), bins=edges)
            for lo, hi, c in zip(edges[:-1], edges[1:], counts):
                rows.append((policy, metric, float(lo), float(hi), int(c)))
    return rows


def summary_text(summary: Sequence[dict]) -> str:
    lines = ["policy      success  crash  timeout  missed  find_med[s]  land_med[s]  d90_med[m]  total_med[m]"]
    for r in summary:
        lines.append(
            f"{r['policy']:<10}  {r['success']:>3}/{r['missions']:<3}  {r['crash']:>5}  {r['timeout']:>7}  "
            f"{r['missed']:>6}  {r['median_time_to_find_helipad']:>11.2f}  {r['median_time_to_land']:>11.2f}  "
            f"{r['median_distance_90s']:>10.2f}  {r['median_total_distance']:>12.2f}"
        )
    by = {r["policy"]: r for r in summary}
    if {"seg_only", "depth_seg"} <= by.keys():
        a, b = by["depth_seg"], by["seg_only"]
        lines.append("")
        lines.append(f"depth_seg vs seg_only: median time to find helipad "
                     f"{a['median_time_to_find_helipad']:.2f} s vs {b['median_time_to_find_helipad']:.2f} s; "
                     f"median 90 s distance {a['median_distance_90s']:.2f} m vs {b['median_distance_90s']:.2f} m")
    return "\n".join(lines) + "\n"


def write_batch_outputs(out: Path, logs: Sequence[MissionLog], steps: bool = False) -> list[dict]:
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "missions.csv", MISSION_FIELDS, (m.csv_row() for m in logs))
    summary = summarize(logs)
    write_csv(out / "summary.csv", SUMMARY_FIELDS, ([r[k] for k in SUMMARY_FIELDS] for r in summary), exact=True)
    write_csv(out / "histograms.csv", ["policy", "metric", "bin_low", "bin_high", "count"], histograms(logs))
    (out / "summary.txt").write_text(summary_text(summary))
    if steps:
        step_dir = out / "steps"
        step_dir.mkdir(exist_ok=True)
        for m in logs:
            (step_dir / f"{m.policy}_{m.seed:05d}.csv").write_text(m.steps_csv())
    return summary


def check_batch(summary: Sequence[dict], min_success: float = 0.95) -> list[tuple[str, bool, str]]:
    """Named pass/fail checks over a batch summary."""
    checks = []
    by = {r["policy"]: r for r in summary}
    for r in summary:
        checks.append((f"{r['policy']} success rate >= {min_success}", r["success_rate"] >= min_success,
                       f"{r['success']}/{r['missions']}"))
    if {"seg_only", "depth_seg"} <= by.keys():
        a, b = by["depth_seg"], by["seg_only"]
        fa, fb = a["median_time_to_find_helipad"], b["median_time_to_find_helipad"]
        checks.append(("depth_seg finds the helipad sooner (median)", fa < fb, f"{fa:.2f} s vs {fb:.2f} s"))
        da, db = a["median_distance_90s"], b["median_distance_90s"]
        checks.append(("depth_seg covers more ground in 90 s (median)", da > db, f"{da:.2f} m vs {db:.2f} m"))
    return checks


# --------------------------------------------------------------------------- calibration


@dataclass(frozen=True)
class CalibSpec:
    frames: int = 100
    seed: int = 0
    obstacle_points: int = 40
    width: int = 320
    height: int = 256
    noise: NoiseModel = field(default_factory=NoiseModel)
    scale_samples: int = 50
    margin: int = 10


@dataclass
class CalibResult:
    errors: dict[str, np.ndarray]
    pairs: np.ndarray  # pooled (relative depth, ground distance) calibration pairs
    true_scales: np.ndarray
    adaptive_scales: np.ndarray
    ground_errors: np.ndarray


def _obstacle_frame_poses(scene: SceneSpec, rng: np.random.Generator, K: CameraIntrinsics, min_pixels: int):
    """Random poses whose view shows both carpet and enough obstacle pixels."""
    for drone in random_poses(scene, 10**9, rng):
        frame = render(scene, drone, K)
        n_obst = int(np.isin(frame.labels, OBSTACLE_CLASSES).sum())
        n_carpet = int((frame.labels == CARPET).sum())
        if n_obst >= min_pixels and n_carpet >= 0.05 * frame.labels.size:
            yield drone, frame


def calib_eval(scene: SceneSpec, spec: CalibSpec) -> CalibResult:
    """Metric error at sampled obstacle pixels for the adaptive, ratio and least-squares scales.

    The ratio and least-squares fits are global: one scale (and shift) fitted
    on ground pairs pooled over all frames, as a calibration-once baseline.
    """
    rng = np.random.default_rng(spec.seed)
    K = CameraIntrinsics.default(spec.width, spec.height)
    per_frame = []
    poses = _obstacle_frame_poses(scene, rng, K, spec.obstacle_points)
    idx = 0
    while len(per_frame) < spec.frames:
        drone, frame = next(poses)
        obs = degrade(frame, spec.noise, idx)
        idx += 1
        pose = DronePose(x_t=drone.height, theta=drone.pitch, z_c=drone.camera_offset)
        try:
            est = adaptive_scale_factor(obs.relative_depth, frame.labels == CARPET, K, pose,
                                        n=spec.scale_samples, rng=rng, margin=spec.margin)
        except InsufficientGroundError:
            continue
        obstacle = np.argwhere(np.isin(frame.labels, OBSTACLE_CLASSES))
        pick = obstacle[rng.choice(len(obstacle), size=spec.obstacle_points, replace=False)]
        pixels = pick[:, ::-1]  # (u, v)
        truth = frame.depth[pick[:, 0], pick[:, 1]]
        ground_px = est.samples[:, :2].astype(int)
        ground_truth = frame.depth[ground_px[:, 1], ground_px[:, 0]]
        per_frame.append({
            "rel": obs.relative_depth, "pixels": pixels, "truth": truth, "est": est,
            "scale": obs.hidden_scale.reveal(), "ground_err": np.abs(est.scale * est.samples[:, 3] - ground_truth),
        })

    pairs = np.vstack([f["est"].samples[:, [3, 2]] for f in per_frame])
    g_scale = ratio_scale(pairs)
    l_scale, l_shift = fit_scale_shift_least_squares(pairs)

    errors: dict[str, list] = {"adaptive": [], "ratio_global": [], "least_squares_global": []}
    errors.update({f"adaptive_patch{s}": [] for s in PATCH_SIZES})
    for f in per_frame:
        rel_at = f["rel"][f["pixels"][:, 1], f["pixels"][:, 0]]
        metric = metric_depth(f["rel"], f["est"])
        errors["adaptive"].append(np.abs(metric[f["pixels"][:, 1], f["pixels"][:, 0]] - f["truth"]))
        for s in PATCH_SIZES:
            errors[f"adaptive_patch{s}"].append(np.abs(patch_median(metric, f["pixels"], s) - f["truth"]))
        errors["ratio_global"].append(np.abs(g_scale * rel_at - f["truth"]))
        errors["least_squares_global"].append(np.abs(l_scale * rel_at + l_shift - f["truth"]))
    return CalibResult(
        errors={k: np.concatenate(v) for k, v in errors.items()},
        pairs=pairs,
        true_scales=np.array([f["scale"] for f in per_frame]),
        adaptive_scales=np.array([f["est"].scale for f in per_frame]),
        ground_errors=np.concatenate([f["ground_err"] for f in per_frame]),
    )


def error_stats(err: np.ndarray) -> dict:
    err = np.asarray(err, dtype=float)
    return {"n": len(err), "mean": float(err.mean()), "median": float(np.median(err)),
            "min": float(err.min()), "max": float(err.max()),
            "rmse": float(np.sqrt(np.mean(err ** 2))), "std": float(err.std())}


def calib_rows(result: CalibResult) -> list[list]:
    rows = []
    for method, err in result.errors.items():
        st = error_stats(err)
        rows.append([method] + [st[k] for k in CALIB_FIELDS[1:]])
    return rows


# --------------------------------------------------------------------------- segmentation


@dataclass(frozen=True)
class SegTrainSpec:
    corpus: CorpusSpec = field(default_factory=CorpusSpec)
    holdout: float = 0.25
    epochs: int = 50
    seed: int = 0


@dataclass
class SegTrainResult:
    classifier: OvRClassifier
    holdout_accuracy: float
    n_train: int
    n_holdout: int


def train_from_features(features: np.ndarray, labels: np.ndarray, spec: SegTrainSpec) -> SegTrainResult:
    rng = np.random.default_rng([spec.seed, 1])
    train, hold = split_holdout(len(labels), spec.holdout, rng)
    clf = train_one_vs_rest(features[train], labels[train], epochs=spec.epochs, rng=rng)
    acc = float(np.mean(clf.predict(features[hold]) == labels[hold])) if len(hold) else math.nan
    return SegTrainResult(clf, acc, len(train), len(hold))


def seg_train(palette: dict, spec: SegTrainSpec = SegTrainSpec()) -> SegTrainResult:
    features, labels = synthetic_corpus(palette, spec.corpus, np.random.default_rng([spec.seed, 0]))
    return train_from_features(features, labels, spec)


@dataclass(frozen=True)
class SegEvalSpec:
    frames: int = 10
    detection_frames: int = 200
    width: int = 320
    height: int = 256
    boundary_margin: float = 5.0
    rgb_sigma: float = 6.0
    detection_flip: float = 0.02
    seed: int = 0
    helipad: HelipadParams = field(default_factory=HelipadParams)


@dataclass
class SegEvalResult:
    agreement: float
    agreement_all: float
    per_class: list[tuple[int, int, float, float]]  # class, support, precision, recall
    true_positive_rate: float
    false_positive_rate: float
    seconds_per_frame: float


def seg_eval(scene: SceneSpec, clf: OvRClassifier, spec: SegEvalSpec = SegEvalSpec()) -> SegEvalResult:
    """Grid segmentation agreement on rendered frames and helipad detection rates.

    Agreement counts pixels at least ``boundary_margin`` px from any class
    boundary. Detection runs on ground-truth labels corrupted by per-pixel
    label flips and cleaned by the largest-component filter.
    """
    rng = np.random.default_rng([spec.seed, 2])
    K = CameraIntrinsics.default(spec.width, spec.height)
    noise = NoiseModel(rgb_sigma=spec.rgb_sigma, seed=spec.seed)
    agree = total = agree_all = total_all = 0
    tp = np.zeros(N_CLASSES)
    fp = np.zeros(N_CLASSES)
    fn = np.zeros(N_CLASSES)
    elapsed = 0.0
    for i, drone in enumerate(random_poses(scene, spec.frames, rng)):
        frame = render(scene, drone, K)
        rgb = degrade(frame, noise, i).rgb
        start = time.perf_counter()
        pred = segment_frame_grid(rgb, clf)
        elapsed += time.perf_counter() - start
        truth = frame.labels
        interior = boundary_distance(truth) >= spec.boundary_margin
        agree += int(np.count_nonzero((pred == truth) & interior))
        total += int(np.count_nonzero(interior))
        agree_all += int(np.count_nonzero(pred == truth))
        total_all += truth.size
        known = pred != UNKNOWN
        for c in range(N_CLASSES):
            t, p = truth == c, (pred == c) & known
            tp[c] += np.count_nonzero(t & p)
            fp[c] += np.count_nonzero(~t & p)
            fn[c] += np.count_nonzero(t & ~p)
    per_class = []
    for c in range(N_CLASSES):
        support = int(tp[c] + fn[c])
        precision = tp[c] / (tp[c] + fp[c]) if tp[c] + fp[c] else math.nan
        recall = tp[c] / support if support else math.nan
        per_class.append((c, support, float(precision), float(recall)))

    flip = NoiseModel(flip_prob=spec.detection_flip, seed=spec.seed + 1)
    hits = positives = false_alarms = negatives = 0
    for i, (frame, positive) in enumerate(helipad_frames(scene, K, spec.detection_frames, rng)):
        labels = largest_component_filter(degrade(frame, flip, i).labels)
        found = detect_helipad(labels, spec.helipad) is not None
        if positive:
            positives += 1
            hits += found
        else:
            negatives += 1
            false_alarms += found
    return SegEvalResult(
        agreement=agree / total if total else math.nan,
        agreement_all=agree_all / total_all,
        per_class=per_class,
        true_positive_rate=hits / positives if positives else math.nan,
        false_positive_rate=false_alarms / negatives if negatives else math.nan,
        seconds_per_frame=elapsed / max(spec.frames, 1),
    )


__all__ = [
    "BatchSpec", "CalibResult", "CalibSpec", "SegEvalResult", "SegEvalSpec", "SegTrainResult",
    "SegTrainSpec", "calib_eval", "calib_rows", "check_batch", "error_stats", "histograms", "run_batch",
    "seg_eval", "seg_train", "summarize", "summary_text", "train_from_features", "write_batch_outputs",
    "write_csv",
]
