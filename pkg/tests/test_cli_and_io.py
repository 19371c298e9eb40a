import csv
import math
import statistics
import subprocess
import sys

import numpy as np
import pytest

from uavnav.cli import main, parse_pose
from uavnav.config import (
    RunSettings,
    format_settings,
    load_config,
    parse_config_text,
    settings_from_values,
)
from uavnav.netpbm import read_pfm, read_pgm, read_ppm, write_pfm, write_pgm, write_ppm
from uavnav.simulator.mission import ConfigError

SMALL = "sim.width = 96\nsim.height = 80\n"


@pytest.fixture(scope="module")
def small_config(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "small.cfg"
    path.write_text(SMALL)
    return str(path)


@pytest.fixture(scope="module")
def batch_dirs(tmp_path_factory, small_config):
    base = tmp_path_factory.mktemp("batch")
    dirs = []
    for name, workers in (("a", "1"), ("b", "1"), ("c", "2")):
        out = base / name
        code = main(["run-batch", "--missions", "3", "--seed", "11", "--workers", workers,
                     "--config", small_config, "--out", str(out), "--steps"])
        assert code == 0
        dirs.append(out)
    return dirs


def test_batch_outputs_are_byte_identical(batch_dirs):
    a, b, c = batch_dirs
    for name in ("missions.csv", "summary.csv", "histograms.csv", "summary.txt"):
        assert (a / name).read_bytes() == (b / name).read_bytes() == (c / name).read_bytes()
    steps = sorted(p.name for p in (a / "steps").iterdir())
    assert steps == ["depth_seg_00011.csv", "depth_seg_00012.csv", "depth_seg_00013.csv",
                     "seg_only_00011.csv", "seg_only_00012.csv", "seg_only_00013.csv"]
    for name in steps:
        assert (a / "steps" / name).read_bytes() == (c / "steps" / name).read_bytes()


def _read(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_summary_recomputes_from_missions_csv(batch_dirs):
    missions = _read(batch_dirs[0] / "missions.csv")
    summary = {r["policy"]: r for r in _read(batch_dirs[0] / "summary.csv")}
    assert len(missions) == 6
    for policy, row in summary.items():
        group = [m for m in missions if m["policy"] == policy]
        assert int(row["missions"]) == len(group)
        assert int(row["success"]) == sum(m["success"] == "1" for m in group)
        assert float(row["success_rate"]) == pytest.approx(int(row["success"]) / len(group), abs=1e-12)
        for metric in ("time_to_find_helipad", "time_to_land", "distance_90s", "total_distance"):
            values = [float(m[metric]) for m in group if m[metric] != "nan"]
            for stat, fn in (("median", statistics.median), ("mean", statistics.fmean)):
                got = float(row[f"{stat}_{metric}"])
                if not values:
                    assert math.isnan(got)
                else:
                    assert abs(got - fn(values)) < 1e-9


def test_env_var_sets_output_directory(tmp_path, monkeypatch, small_config):
    monkeypatch.setenv("UAVNAV_OUT", str(tmp_path / "envout"))
    assert main(["demo-step", "--config", small_config]) == 0
    assert (tmp_path / "envout" / "corridor.txt").exists()


def test_demo_step_writes_frames(tmp_path, small_config):
    assert main(["demo-step", "--config", small_config, "--out", str(tmp_path),
                 "--pose", "1.5,0.0,-1.0,0"]) == 0
    names = {"rgb.ppm", "labels.pgm", "depth.pfm", "metric_depth.pfm", "corridor.txt"}
    assert names <= {p.name for p in tmp_path.iterdir()}
    rgb, labels = read_ppm(tmp_path / "rgb.ppm"), read_pgm(tmp_path / "labels.pgm")
    depth, metric = read_pfm(tmp_path / "depth.pfm"), read_pfm(tmp_path / "metric_depth.pfm")
    assert rgb.shape == (80, 96, 3) and labels.shape == depth.shape == (80, 96)
    # without depth noise the recovered metric map equals the true range
    assert np.allclose(metric, depth, rtol=1e-5)
    text = (tmp_path / "corridor.txt").read_text()
    assert "breach" in text and "advance" in text


def test_exit_code_config_errors(tmp_path, small_config):
    bad = tmp_path / "bad.cfg"
    bad.write_text("policy.no_such_key = 3\n")
    assert main(["demo-step", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert main(["demo-step", "--depth-scale-min", "5", "--depth-scale-max", "1", "--out", str(tmp_path)]) == 2
    # a pose inside a box
    assert main(["demo-step", "--config", small_config, "--pose", "1.0,-1.2,-0.6,0", "--out", str(tmp_path)]) == 2
    assert main(["run-batch", "--missions", "0"]) == 2


def test_exit_code_scene_errors(tmp_path):
    broken = tmp_path / "broken.scene"
    broken.write_text("[helipad]\ncenter_x = oops\n")
    assert main(["demo-step", "--scene", str(broken), "--out", str(tmp_path)]) == 3
    assert main(["demo-step", "--scene", str(tmp_path / "missing.scene"), "--out", str(tmp_path)]) == 3


def test_exit_code_check_failure(tmp_path, small_config):
    # heavy depth noise cannot meet the calibration bound
    code = main(["calib-eval", "--frames", "3", "--noise-sigma", "1.5", "--check",
                 "--config", small_config, "--out", str(tmp_path)])
    assert code == 4
    code = main(["calib-eval", "--frames", "3", "--check", "--config", small_config, "--out", str(tmp_path)])
    assert code == 0
    assert {"calib.csv", "pairs.csv", "calib.txt"} <= {p.name for p in tmp_path.iterdir()}


def test_seg_train_and_eval_round_trip(tmp_path, small_config):
    assert main(["seg-train", "--per-class", "30", "--out", str(tmp_path)]) == 0
    clf = tmp_path / "classifier.txt"
    assert clf.exists()
    assert main(["seg-eval", "--classifier", str(clf), "--frames", "1", "--detection-frames", "4",
                 "--config", small_config, "--out", str(tmp_path)]) == 0
    summary = _read(tmp_path / "seg_eval_summary.csv")[0]
    assert float(summary["agreement_interior"]) > 0.8
    assert main(["seg-eval", "--classifier", str(tmp_path / "none.txt"), "--out", str(tmp_path)]) == 2


def test_console_script_exit_code(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "uavnav.cli", "demo-step", "--scene",
                           str(tmp_path / "nope"), "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 3 and "scene error" in proc.stderr


def test_parse_pose():
    d = parse_pose("1.2,0.5,-1,90,-30")
    assert (d.height, d.x, d.y) == (1.2, 0.5, -1.0)
    assert d.yaw == pytest.approx(math.pi / 2) and d.pitch == pytest.approx(math.radians(-30))
    for bad in ("1,2,3", "a,b,c,d", "1,2,3,nan"):
        with pytest.raises(ConfigError):
            parse_pose(bad)


def test_config_text_errors():
    with pytest.raises(ConfigError):
        parse_config_text("a.b = 1\na.b = 2\n")
    with pytest.raises(ConfigError):
        parse_config_text("just words\n")
    with pytest.raises(ConfigError):
        settings_from_values({"nonsense.x": "1"})
    with pytest.raises(ConfigError):
        settings_from_values({"policy.forward_step": "fast"})
    with pytest.raises(ConfigError):
        settings_from_values({"corridor.left_m": "-1"})


def test_config_overrides_and_presets():
    s = settings_from_values({"policy.upper_threshold": "summary", "corridor.front_m": "2.5",
                              "noise.depth_sigma": "0.05", "sim.width": "128", "batch.workers": "3",
                              "policy.pid_kp": "0.7"})
    assert s.mission.policy.upper_threshold == 1000
    assert s.mission.corridor.front == 2.5 and s.noise.depth_sigma == 0.05
    assert s.mission.width == 128 and s.workers == 3 and s.mission.policy.pid.kp == 0.7


def test_format_settings_round_trip(tmp_path):
    s = settings_from_values({"policy.forward_step": "0.25", "noise.flip_prob": "0.01", "batch.workers": "2"})
    path = tmp_path / "all.cfg"
    path.write_text(format_settings(s))
    back = load_config(path)
    assert back.mission == s.mission and back.noise == s.noise and back.workers == 2
    path.write_text(format_settings(RunSettings()))
    assert format_settings(load_config(path)) == format_settings(RunSettings())


def test_netpbm_round_trips(tmp_path, rng):
    g = rng.integers(0, 256, (7, 11), dtype=np.uint8)
    write_pgm(tmp_path / "g.pgm", g)
    assert np.array_equal(read_pgm(tmp_path / "g.pgm"), g)
    c = rng.integers(0, 256, (5, 9, 3), dtype=np.uint8)
    write_ppm(tmp_path / "c.ppm", c)
    assert np.array_equal(read_ppm(tmp_path / "c.ppm"), c)
    f = rng.normal(size=(6, 4)).astype(np.float32)
    f[0, 0] = np.inf
    write_pfm(tmp_path / "f.pfm", f)
    assert np.array_equal(read_pfm(tmp_path / "f.pfm"), f)
    with pytest.raises(ValueError):
        write_pgm(tmp_path / "x.pgm", np.full((2, 2), 300))
    with pytest.raises(ValueError):
        read_ppm(tmp_path / "g.pgm")
