"""``uavnav`` command line: batch missions, calibration and segmentation reports, frame dumps.

Exit codes: 0 success, 2 configuration error, 3 scene error, 4 a ``--check``
threshold failed.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import harness
from .camera_geometry import DronePose, HorizonError
from .config import RunSettings, load_config
from .corpus import CorpusSpec, read_patch_dataset
from .metric_depth import (
    DegenerateDepthError,
    InsufficientGroundError,
    adaptive_scale_factor,
    metric_depth,
    write_pairs_csv,
)
from .netpbm import write_pfm, write_ppm
from .policy import PolicyKind
from .safety_corridor import assess_frame
from .segmentation import CARPET, DegenerateDataError, OvRClassifier, write_label_pgm
from .simulator.kinematics import collides
from .simulator.mission import ConfigError
from .simulator.noise import degrade
from .simulator.render import DroneState, render
from .simulator.scene import InvariantError, ParseError, default_scene, load_scene

logger = logging.getLogger("uavnav")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SCENE = 3
EXIT_CHECK = 4
OUT_ENV = "UAVNAV_OUT"


class SceneError(RuntimeError):
    pass


def _default_out() -> str:
    return os.environ.get(OUT_ENV, "uavnav_out")


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--scene", help="scene file (default: the bundled 8-box room)")
    common.add_argument("--out", default=None, help=f"output directory (default: ${OUT_ENV} or ./uavnav_out)")
    common.add_argument("--seed", type=int, default=0, help="base seed")
    common.add_argument("--noise-sigma", type=float, default=None, help="multiplicative depth noise sigma")
    common.add_argument("--depth-scale-min", type=float, default=None, help="lower bound of the hidden depth scale")
    common.add_argument("--depth-scale-max", type=float, default=None, help="upper bound of the hidden depth scale")
    common.add_argument("--check", action="store_true", help="exit with code 4 when acceptance thresholds fail")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="uavnav", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run-batch", parents=[common], help="seeded missions per policy")
    p.add_argument("--policy", choices=[k.value for k in PolicyKind], action="append",
                   help="policy to fly (repeatable; default both)")
    p.add_argument("--missions", type=_positive_int, default=100)
    p.add_argument("--workers", type=_positive_int, default=None, help="worker processes (default: all cores)")
    p.add_argument("--steps", action="store_true", help="also write one step CSV per mission")
    p.add_argument("--min-success", type=float, default=0.95)

    p = sub.add_parser("calib-eval", parents=[common], help="metric depth error at obstacle points")
    p.add_argument("--frames", type=_positive_int, default=100)
    p.add_argument("--points", type=_positive_int, default=40, help="obstacle points per frame")

    p = sub.add_parser("seg-train", parents=[common], help="train the patch classifier")
    p.add_argument("--dataset", help="patch CSV (image, u, v, class_id); default: synthetic corpus")
    p.add_argument("--per-class", type=_positive_int, default=120)
    p.add_argument("--epochs", type=_positive_int, default=50)
    p.add_argument("--holdout", type=float, default=0.25)

    p = sub.add_parser("seg-eval", parents=[common], help="grid segmentation and helipad detection rates")
    p.add_argument("--classifier", help="classifier weights (default: train on the synthetic corpus)")
    p.add_argument("--frames", type=_positive_int, default=10)
    p.add_argument("--detection-frames", type=_positive_int, default=200)

    p = sub.add_parser("demo-step", parents=[common], help="dump one rendered frame and its corridor report")
    p.add_argument("--pose", default="1.5,-0.4,-1.9,0",
                   help="height,x,y,yaw_deg[,pitch_deg] (default: above the default helipad)")
    return parser


def _settings(args) -> RunSettings:
    settings = load_config(args.config) if args.config else RunSettings()
    changes = {}
    if args.noise_sigma is not None:
        changes["depth_sigma"] = args.noise_sigma
    if args.depth_scale_min is not None:
        changes["scale_min"] = args.depth_scale_min
    if args.depth_scale_max is not None:
        changes["scale_max"] = args.depth_scale_max
    try:
        noise = replace(settings.noise, seed=args.seed, **changes)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return replace(settings, noise=noise)


def _scene(args):
    if not args.scene:
        return default_scene()
    try:
        return load_scene(args.scene)
    except (ParseError, InvariantError, OSError) as exc:
        raise SceneError(str(exc)) from None


def _out(args) -> Path:
    out = Path(args.out or _default_out())
    out.mkdir(parents=True, exist_ok=True)
    return out


def _report_checks(checks) -> int:
    failed = 0
    for name, ok, detail in checks:
        print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        failed += not ok
    return EXIT_CHECK if failed else EXIT_OK


def cmd_run_batch(args) -> int:
    settings = _settings(args)
    policies = tuple(PolicyKind(p) for p in dict.fromkeys(args.policy or [k.value for k in PolicyKind]))
    spec = harness.BatchSpec(scene=_scene(args), policies=policies, missions=args.missions, seed=args.seed,
                             mission=settings.mission, noise=settings.noise, record_steps=args.steps)
    logs = harness.run_batch(spec, workers=args.workers or settings.workers)
    out = _out(args)
    summary = harness.write_batch_outputs(out, logs, steps=args.steps)
    print(harness.summary_text(summary), end="")
    logger.info("wrote %s", out)
    if args.check:
        return _report_checks(harness.check_batch(summary, args.min_success))
    return EXIT_OK


def cmd_calib_eval(args) -> int:
    settings = _settings(args)
    m = settings.mission
    spec = harness.CalibSpec(frames=args.frames, seed=args.seed, obstacle_points=args.points,
                             width=m.width, height=m.height, noise=settings.noise,
                             scale_samples=m.scale_samples, margin=m.scale_margin)
    result = harness.calib_eval(_scene(args), spec)
    out = _out(args)
    rows = harness.calib_rows(result)
    harness.write_csv(out / "calib.csv", harness.CALIB_FIELDS, rows)
    write_pairs_csv(out / "pairs.csv", result.pairs)
    lines = [f"{r[0]:<22} mean {r[2]:.4f} m  median {r[3]:.4f} m  rmse {r[6]:.4f} m" for r in rows]
    text = "\n".join(lines) + "\n"
    (out / "calib.txt").write_text(text)
    print(text, end="")
    if args.check:
        stats = {r[0]: r[2] for r in rows}
        bound = 1e-4 if settings.noise.depth_sigma == 0 else 0.25
        return _report_checks([
            (f"adaptive mean error < {bound:g} m", stats["adaptive"] < bound, f"{stats['adaptive']:.6f} m"),
            ("adaptive beats global least squares", stats["adaptive"] < stats["least_squares_global"],
             f"{stats['adaptive']:.6f} m vs {stats['least_squares_global']:.6f} m"),
        ])
    return EXIT_OK


def cmd_seg_train(args) -> int:
    scene = _scene(args)
    spec = harness.SegTrainSpec(corpus=CorpusSpec(per_class=args.per_class), holdout=args.holdout,
                                epochs=args.epochs, seed=args.seed)
    if not 0 < args.holdout < 1:
        raise ConfigError("--holdout must lie strictly between 0 and 1")
    if args.dataset:
        try:
            features, labels = read_patch_dataset(args.dataset)
        except (OSError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        result = harness.train_from_features(features, labels, spec)
    else:
        result = harness.seg_train(scene.palette, spec)
    out = _out(args)
    result.classifier.save(out / "classifier.txt")
    text = (f"train samples {result.n_train}\nholdout samples {result.n_holdout}\n"
            f"train accuracy {result.classifier.train_accuracy:.6f}\n"
            f"holdout accuracy {result.holdout_accuracy:.6f}\n")
    (out / "seg_train.txt").write_text(text)
    print(text, end="")
    if args.check:
        return _report_checks([("held-out patch accuracy >= 0.99", result.holdout_accuracy >= 0.99,
                                f"{result.holdout_accuracy:.4f}")])
    return EXIT_OK


def cmd_seg_eval(args) -> int:
    settings = _settings(args)
    scene = _scene(args)
    if args.classifier:
        try:
            clf = OvRClassifier.load(args.classifier)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot load classifier {args.classifier}: {exc}") from None
    else:
        clf = harness.seg_train(scene.palette, harness.SegTrainSpec(seed=args.seed)).classifier
    m = settings.mission
    spec = harness.SegEvalSpec(frames=args.frames, detection_frames=args.detection_frames, width=m.width,
                               height=m.height, seed=args.seed, helipad=m.helipad)
    result = harness.seg_eval(scene, clf, spec)
    out = _out(args)
    harness.write_csv(out / "seg_eval.csv", ["class_id", "support", "precision", "recall"], result.per_class)
    harness.write_csv(out / "seg_eval_summary.csv",
                      ["agreement_interior", "agreement_all", "helipad_true_positive", "helipad_false_positive"],
                      [[result.agreement, result.agreement_all, result.true_positive_rate,
                        result.false_positive_rate]])
    # timing is machine dependent, so it stays out of the CSVs
    text = (f"pixel agreement (>= {spec.boundary_margin:g} px from boundaries) {result.agreement:.4f}\n"
            f"pixel agreement (all pixels) {result.agreement_all:.4f}\n"
            f"helipad true-positive rate {result.true_positive_rate:.4f}\n"
            f"helipad false-positive rate {result.false_positive_rate:.4f}\n"
            f"grid inference {result.seconds_per_frame:.3f} s/frame "
            f"({1.0 / max(result.seconds_per_frame, 1e-9):.1f} frames/s)\n")
    (out / "seg_eval.txt").write_text(text)
    print(text, end="")
    if args.check:
        return _report_checks([
            ("pixel agreement away from boundaries >= 0.90", result.agreement >= 0.90, f"{result.agreement:.4f}"),
            ("helipad true-positive rate >= 0.95", result.true_positive_rate >= 0.95,
             f"{result.true_positive_rate:.4f}"),
            ("helipad false-positive rate <= 0.05", result.false_positive_rate <= 0.05,
             f"{result.false_positive_rate:.4f}"),
        ])
    return EXIT_OK


def parse_pose(text: str) -> DroneState:
    try:
        values = [float(v) for v in text.split(",")]
    except ValueError:
        raise ConfigError(f"--pose: expected numbers, got {text!r}") from None
    if len(values) not in (4, 5):
        raise ConfigError("--pose needs height,x,y,yaw_deg[,pitch_deg]")
    h, x, y, yaw = values[:4]
    pitch = values[4] if len(values) == 5 else -25.0
    if not all(math.isfinite(v) for v in values):
        raise ConfigError("--pose values must be finite")
    return DroneState(height=h, x=x, y=y, yaw=math.radians(yaw), pitch=math.radians(pitch))


def cmd_demo_step(args) -> int:
    settings = _settings(args)
    scene = _scene(args)
    drone = parse_pose(args.pose)
    if collides(scene, drone.height, drone.x, drone.y, drone.yaw):
        raise ConfigError(f"pose {args.pose} collides with the scene (a box, the floor, the ceiling or a wall)")
    m = settings.mission
    K = m.intrinsics
    frame = render(scene, drone, K)
    obs = degrade(frame, settings.noise, 0)
    out = _out(args)
    write_ppm(out / "rgb.ppm", obs.rgb)
    write_label_pgm(out / "labels.pgm", obs.labels)
    write_pfm(out / "depth.pfm", frame.depth)

    pose = DronePose(x_t=drone.height, theta=drone.pitch, z_c=drone.camera_offset)
    lines = [f"pose height={drone.height:.6f} x={drone.x:.6f} y={drone.y:.6f} "
             f"yaw_deg={math.degrees(drone.yaw):.6f} pitch_deg={math.degrees(drone.pitch):.6f}"]
    try:
        est = adaptive_scale_factor(obs.relative_depth, obs.labels == CARPET, K, pose, n=m.scale_samples,
                                    rng=np.random.default_rng([args.seed, 2]), margin=m.scale_margin)
    except (InsufficientGroundError, DegenerateDepthError, HorizonError) as exc:
        write_pfm(out / "metric_depth.pfm", np.full(frame.depth.shape, np.nan))
        lines.append(f"scale unavailable ({exc})")
    else:
        metric = metric_depth(obs.relative_depth, est)
        write_pfm(out / "metric_depth.pfm", metric)
        corridor = m.corridor.at(drone.height)
        report = assess_frame(metric, K, pose, corridor, cap=m.policy.advance_cap,
                              upper_fraction=m.layout.upper_fraction)
        lines += [
            f"scale {est.scale:.9f}",
            f"scale_samples {est.n_samples}",
            f"breach {report.breach.value if report.breach else 'none'}",
            f"breach_distance {report.breach_distance:.6f}",
            f"breach_pixels {report.n_breach_pixels}",
            f"advance {report.advance:.6f}",
            f"clearance_left {report.clearance_left:.6f}",
            f"clearance_right {report.clearance_right:.6f}",
        ]
    (out / "corridor.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return EXIT_OK


COMMANDS = {
    "run-batch": cmd_run_batch,
    "calib-eval": cmd_calib_eval,
    "seg-train": cmd_seg_train,
    "seg-eval": cmd_seg_eval,
    "demo-step": cmd_demo_step,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with status 2 already
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except SceneError as exc:
        print(f"uavnav: scene error: {exc}", file=sys.stderr)
        return EXIT_SCENE
    except DegenerateDataError as exc:
        print(f"uavnav: training data error (class {exc.class_id}): {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"uavnav: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
