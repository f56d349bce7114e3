import json
import math

import numpy as np
import pytest

from depthfusion import io
from depthfusion.cli import SCHEMA_VERSION, main


@pytest.fixture(scope="module")
def sim(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert main(["simulate", "--scene", "two_planes", "--width", "160", "--height", "120",
                 "--seed", "7", "-o", str(out)]) == 0
    return out


def test_simulate_writes_four_files(sim):
    assert sorted(p.name for p in sim.iterdir()) == ["gt.pfm", "left.png", "prior.csv", "right.png"]


def test_simulate_row_count(sim):
    rows = (sim / "prior.csv").read_text().strip().splitlines()[1:]
    assert len(rows) == math.ceil(160 / 10) * math.ceil(120 / 10)


def test_simulate_deterministic(sim, tmp_path):
    assert main(["simulate", "--scene", "two_planes", "--width", "160", "--height", "120",
                 "--seed", "7", "-o", str(tmp_path)]) == 0
    assert (tmp_path / "prior.csv").read_bytes() == (sim / "prior.csv").read_bytes()


def test_simulate_from_gt(sim, tmp_path):
    assert main(["simulate", "--gt", str(sim / "gt.pfm"), "--factor", "20", "-o", str(tmp_path)]) == 0
    gt = io.read_disparity(sim / "gt.pfm")
    pr = io.read_prior(tmp_path / "prior.csv")
    assert len(pr) == int(gt.valid[::20, ::20].sum())


def test_simulate_bad_scene(tmp_path):
    assert main(["simulate", "--scene", "nowhere", "-o", str(tmp_path)]) == 2


def fuse_args(sim, out, *extra):
    return ["fuse", str(sim / "left.png"), str(sim / "right.png"), str(sim / "prior.csv"),
            "-o", str(out), "--range", "0:32", *extra]


def test_fuse_outputs_and_echo(sim, tmp_path):
    out = tmp_path / "run"
    assert main(fuse_args(sim, out, "--criterion", "emcc", "--r", "2", "--T", "0.4",
                          "--dump-masks", "--trace")) == 0
    names = {p.name for p in out.iterdir()}
    assert {"disparity.pfm", "disparity.png", "stats.json", "masks.png", "stereo_occ.png",
            "depth_occ.png", "entropy.png", "trace.csv"} <= names
    stats = json.loads((out / "stats.json").read_text())
    assert stats["schema_version"] == SCHEMA_VERSION
    assert stats["params"]["criterion"] == "emcc"
    assert stats["params"]["r"] == 2 and stats["params"]["T"] == 0.4
    assert stats["invariant_violations"] == []
    assert {"density", "energy_histogram", "runtime_s"} <= set(stats)
    assert {"initialization", "growing", "filling"} <= set(stats["runtime_s"])
    d = io.read_disparity(out / "disparity.pfm")
    assert d.valid.all() and d.shape == (120, 160)


def test_fuse_wta_and_no_fill(sim, tmp_path):
    assert main(fuse_args(sim, tmp_path, "--method", "wta", "--no-fill")) == 0
    stats = json.loads((tmp_path / "stats.json").read_text())
    assert stats["method"] == "wta" and stats["fill"] is False


def test_fuse_config_file(sim, tmp_path):
    cfg = tmp_path / "fuse.cfg"
    cfg.write_text("lambda = 0.02\nwindow = 7\n")
    out = tmp_path / "o"
    assert main(fuse_args(sim, out, "--config", str(cfg), "--no-subpixel")) == 0
    params = json.loads((out / "stats.json").read_text())["params"]
    assert params["lam"] == 0.02 and params["window_half"] == 3 and params["subpixel"] is False


def test_fuse_missing_prior(sim, tmp_path, capsys):
    missing = tmp_path / "nope.csv"
    code = main(["fuse", str(sim / "left.png"), str(sim / "right.png"), str(missing),
                 "-o", str(tmp_path / "o")])
    assert code == 1
    assert str(missing) in capsys.readouterr().err


@pytest.mark.parametrize("extra", [["--window", "4"], ["--range", "9:3"], ["--r", "0"],
                                   ["--config", "/nonexistent.cfg"]])
def test_fuse_config_errors(sim, tmp_path, extra):
    assert main(fuse_args(sim, tmp_path, *extra)) == 2


def test_fuse_size_mismatch(sim, tmp_path):
    io.write_image(tmp_path / "small.png", np.zeros((10, 10)))
    code = main(["fuse", str(sim / "left.png"), str(tmp_path / "small.png"),
                 str(sim / "prior.csv"), "-o", str(tmp_path / "o")])
    assert code == 1


def test_fuse_prior_outside_image(sim, tmp_path):
    (tmp_path / "p.csv").write_text("500,3,4.0\n")
    code = main(["fuse", str(sim / "left.png"), str(sim / "right.png"), str(tmp_path / "p.csv"),
                 "-o", str(tmp_path / "o")])
    assert code == 1


def test_fuse_bad_thread_count(sim, tmp_path, monkeypatch):
    monkeypatch.setenv("FUSE_THREADS", "many")
    assert main(fuse_args(sim, tmp_path)) == 2


def test_masks_command(sim, tmp_path):
    assert main(["masks", str(sim / "left.png"), str(sim / "right.png"), str(sim / "prior.csv"),
                 "-o", str(tmp_path), "--range", "0:32"]) == 0
    assert io.read_mask(tmp_path / "stereo_occ.png").shape == (120, 160)
    assert (tmp_path / "masks.png").exists() and (tmp_path / "entropy.png").exists()


def test_eval_identity(sim, tmp_path, capsys):
    code = main(["eval", str(sim / "gt.pfm"), str(sim / "gt.pfm"), "--delta", "0.5,1,2",
                 "-o", str(tmp_path / "r.json")])
    assert code == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["bmp"] == {"0.5": 0.0, "1": 0.0, "2": 0.0}
    assert rep["mse"] == 0.0 and rep["schema_version"] == SCHEMA_VERSION
    assert json.loads((tmp_path / "r.json").read_text()) == rep


def test_eval_with_occlusion_mask(sim, tmp_path, capsys):
    gt = io.read_disparity(sim / "gt.pfm")
    off = gt.copy()
    off.values[:, :80] += 3.0
    io.write_disparity(tmp_path / "r.pfm", off)
    occl = np.zeros(gt.shape, bool)
    occl[:, :80] = True
    io.write_mask(tmp_path / "occ.png", occl)
    assert main(["eval", str(tmp_path / "r.pfm"), str(sim / "gt.pfm"),
                 "--occl", str(tmp_path / "occ.png"), "--delta", "1"]) == 0
    assert json.loads(capsys.readouterr().out)["bmp"] == {"1": 0.0}


def test_eval_errors(sim, tmp_path):
    io.write_pfm(tmp_path / "small.pfm", np.zeros((3, 3), np.float32))
    assert main(["eval", str(tmp_path / "small.pfm"), str(sim / "gt.pfm")]) == 1
    assert main(["eval", str(sim / "gt.pfm"), str(sim / "gt.pfm"), "--delta", "a,b"]) == 2


def test_usage_error_exit_code():
    assert main(["fuse"]) == 2
