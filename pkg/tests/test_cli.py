import json
from pathlib import Path

import numpy as np
import pytest

from conftest import random_transform
from spinenav import fileio
from spinenav.cli import EXIT_INVALID, EXIT_NUMERICAL, EXIT_OK, main
from spinenav.geometry import RigidTransform, random_rotation
from spinenav.metrics import PipelineReport
from spinenav.phantom import load_phantom
from spinenav.trajectory import Centerline

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def snapshot(*paths):
    return {p: Path(p).read_bytes() for p in paths}


def write_pivot(path, rng, identical=False):
    x_tip, x_pivot = np.array([0.0, 0.0, 100.0]), np.array([50.0, 50.0, 50.0])
    poses = []
    for _ in range(10):
        r = np.eye(3) if identical else random_rotation(rng)
        poses.append(RigidTransform(r, x_pivot - r @ x_tip))
    fileio.write_poses(path, poses)


def test_calibrate_pivot(tmp_path, rng, capsys):
    poses, out = tmp_path / "poses.csv", tmp_path / "pivot.json"
    write_pivot(poses, rng)
    before = snapshot(poses)
    assert main(["calibrate-pivot", "--poses", str(poses), "--out", str(out), "--json"]) == EXIT_OK
    result = json.loads(capsys.readouterr().out)
    assert np.allclose(result["x_tip"], [0, 0, 100], atol=1e-8)
    assert json.loads(out.read_text()) == result
    assert snapshot(poses) == before


def test_identical_pivot_poses_exit_2(tmp_path, capsys):
    poses = tmp_path / "identical_poses.csv"
    write_pivot(poses, None, identical=True)
    assert main(["calibrate-pivot", "--poses", str(poses)]) == EXIT_NUMERICAL
    err = capsys.readouterr().err
    assert "DegenerateMotion" in err and "pivot calibration" in err


def test_calibrate_handeye(tmp_path, rng, capsys):
    x, z = random_transform(rng), random_transform(rng)
    b = [random_transform(rng) for _ in range(6)]
    a = [z @ bi @ x.inverse() for bi in b]
    fa, fb = tmp_path / "a.csv", tmp_path / "b.csv"
    fileio.write_poses(fa, a)
    fileio.write_poses(fb, b)
    assert main(["calibrate-handeye", "--a", str(fa), "--b", str(fb), "--json"]) == EXIT_OK
    result = json.loads(capsys.readouterr().out)
    assert RigidTransform.from_dict(result["x"]).allclose(x, 1e-6)


def test_register(tmp_path, rng, capsys):
    l3 = load_phantom("L3")
    g = random_transform(rng, 300.0)
    surf = l3.surface.points
    names = ["spinous_tip", "left_transverse_tip", "right_transverse_tip"]
    dst = l3.landmarks.array(names)
    model, dig, picks = tmp_path / "model.ply", tmp_path / "dig.csv", tmp_path / "picks.json"
    fileio.write_points(model, surf)
    fileio.write_points(dig, g.inverse().apply(surf[::9]))
    fileio.write_json(picks, fileio.picks_to_dict(g.inverse().apply(dst), dst))
    before = snapshot(model, dig, picks)
    assert main(["register", "--digitized", str(dig), "--model", str(model), "--picks", str(picks), "--json"]) == 0
    result = json.loads(capsys.readouterr().out)
    assert result["rmse"] < 1e-6
    assert RigidTransform.from_dict(result["transform_ct_from_s"]).allclose(g, 1e-6)
    assert snapshot(model, dig, picks) == before


def test_register_collinear_picks_exit_2(tmp_path, capsys):
    pts = tmp_path / "p.csv"
    fileio.write_points(pts, np.random.default_rng(0).normal(size=(20, 3)))
    picks = tmp_path / "picks.json"
    line = [[0, 0, 0], [1, 0, 0], [2, 0, 0]]
    fileio.write_json(picks, {"src": line, "dst": line})
    assert main(["register", "--digitized", str(pts), "--model", str(pts), "--picks", str(picks)]) == EXIT_NUMERICAL
    assert "CollinearPoints" in capsys.readouterr().err


def test_plan_total_length(tmp_path, capsys):
    out, plan_out = tmp_path / "c.csv", tmp_path / "plan.json"
    argv = ["plan", "--radius", "69.5", "--arc-length", "35", "--straight", "27", "--out", str(out)]
    assert main(argv + ["--plan-out", str(plan_out), "--json"]) == EXIT_OK
    payload = json.loads(capsys.readouterr().out)
    assert payload["total_length"] == pytest.approx(62.0, abs=1e-9)
    c = Centerline.from_csv(out.read_text())
    assert c.arclength[-1] == pytest.approx(62.0)
    assert c.polyline_length() == pytest.approx(62.0, abs=1e-3)
    # the written plan JSON reproduces the same centreline
    out2 = tmp_path / "c2.csv"
    assert main(["plan", "--plan", str(plan_out), "--out", str(out2)]) == EXIT_OK
    assert out2.read_bytes() == out.read_bytes()


def test_plan_safety(capsys):
    assert main(["plan", "--canal-diameter", "13", "--json"]) == EXIT_OK
    safety = json.loads(capsys.readouterr().out)["safety"]
    assert safety == {"min_margin": 2.5, "breach": 0.0, "pass": True}


def test_invalid_plan_exit_1(capsys):
    assert main(["plan", "--normal", "0", "0", "1"]) == EXIT_INVALID
    assert "InvalidPlan" in capsys.readouterr().err


def test_simulate_and_report(tmp_path, capsys):
    config = tmp_path / "cfg.json"
    fileio.write_json(config, {"phantom": "L3", "trials": 2, "noise": {"seed": 3}})
    out, dump = tmp_path / "r.json", tmp_path / "traj"
    before = snapshot(config)
    argv = ["simulate", "--config", str(config), "--out", str(out), "--dump-trajectories", str(dump)]
    assert main(argv) == EXIT_OK
    assert "L3" in capsys.readouterr().out
    report = PipelineReport.from_json(out.read_text())
    assert report.trials == 2 and report.schema == "spinenav.pipeline_report/1"
    assert sorted(p.name for p in dump.iterdir()) == ["drilled_trial0.csv", "drilled_trial1.csv", "planned.csv"]
    assert snapshot(config) == before
    assert main(["report", "--report", str(out), "--json"]) == EXIT_OK
    assert json.loads(capsys.readouterr().out) == report.to_dict()


def test_bundled_config_runs(tmp_path):
    out = tmp_path / "r.json"
    assert main(["simulate", "--config", str(CONFIGS / "t12.json"), "--out", str(out)]) == EXIT_OK
    assert PipelineReport.from_json(out.read_text()).failed_trials == 0


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["frobnicate"],
        ["calibrate-pivot"],
        ["plan", "--bogus"],
        ["plan", "--radius", "abc"],
    ],
)
def test_usage_errors_exit_1(argv, capsys):
    assert main(argv) == EXIT_INVALID
    assert "usage" in capsys.readouterr().err


def test_missing_file_exit_1(tmp_path, capsys):
    assert main(["calibrate-pivot", "--poses", str(tmp_path / "nope.csv")]) == EXIT_INVALID
    assert "pivot calibration failed" in capsys.readouterr().err


def test_bad_config_exit_1(tmp_path, capsys):
    config = tmp_path / "cfg.json"
    config.write_text('{"phantom": "L3", "tirals": 2}')
    assert main(["simulate", "--config", str(config)]) == EXIT_INVALID
    assert "tirals" in capsys.readouterr().err
