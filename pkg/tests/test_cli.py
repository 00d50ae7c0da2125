import shutil
from pathlib import Path

import pytest

from twin_sentinel.cli import main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


@pytest.fixture
def cfg_file(tmp_path):
    path = tmp_path / "m.cfg"
    shutil.copy(CONFIGS / "manipulator.cfg", path)
    return path


def run(*args):
    return main([str(a) for a in args])


def test_simulate_writes_outputs(tmp_path, cfg_file):
    out = tmp_path / "out"
    assert run("simulate", "--config", cfg_file, "--case", "none", "--steps", 50, "--out", out) == 0
    assert (out / "trajectory.csv").exists() and (out / "summary.txt").exists()
    assert len((out / "trajectory.csv").read_text().splitlines()) == 51


def test_simulate_twice_is_byte_identical(tmp_path, cfg_file):
    for tag in ("a", "b"):
        assert run("simulate", "--config", cfg_file, "--case", "stealthy", "--steps", 300, "--out", tmp_path / tag) == 0
    assert (tmp_path / "a/trajectory.csv").read_bytes() == (tmp_path / "b/trajectory.csv").read_bytes()


def test_seed_changes_output(tmp_path, cfg_file):
    run("simulate", "--config", cfg_file, "--steps", 20, "--seed", 1, "--out", tmp_path / "a")
    run("simulate", "--config", cfg_file, "--steps", 20, "--seed", 2, "--out", tmp_path / "b")
    assert (tmp_path / "a/trajectory.csv").read_bytes() != (tmp_path / "b/trajectory.csv").read_bytes()


def test_env_var_sets_output_dir(tmp_path, cfg_file, monkeypatch):
    monkeypatch.setenv("TWIN_SENTINEL_OUT", str(tmp_path / "env"))
    assert run("bound", "--config", cfg_file) == 0
    assert "alpha1" in (tmp_path / "env" / "bound.txt").read_text()


def test_reports(tmp_path, cfg_file):
    assert run("calibrate", "--config", cfg_file, "--out", tmp_path) == 0
    assert run("pbne", "--config", cfg_file, "--out", tmp_path) == 0
    assert (tmp_path / "sigma_phi.txt").read_text().startswith("# Sigma_phi")
    assert "unequal masses" in (tmp_path / "pbne.txt").read_text()


def test_compare_table(tmp_path, cfg_file):
    assert run("compare", "--config", cfg_file, "--steps", 800, "--out", tmp_path) == 0
    text = (tmp_path / "compare.txt").read_text()
    rows = {line.split()[0]: float(line.split()[3]) for line in text.splitlines()
            if line.split() and line.split()[0] in ("none", "naive", "stealthy")}
    assert rows["stealthy"] < rows["naive"]


def test_missing_config_exits_1(tmp_path, capsys):
    missing = tmp_path / "nope.cfg"
    assert run("simulate", "--config", missing) == 1
    assert str(missing) in capsys.readouterr().err


def test_bad_usage_exits_1(cfg_file):
    assert run("simulate", "--config", cfg_file, "--case", "loud") == 1
    assert run("frobnicate") == 1


def test_bad_config_exits_1(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("[run]\nsteps = 5\n")
    assert run("simulate", "--config", path) == 1


def test_divergence_exits_2(tmp_path):
    # a rejection policy that freezes the input lets an unstable plant run away
    path = tmp_path / "unstable.cfg"
    path.write_text(
        "[plant]\nA = [[1.5]]\nB = [[1.0]]\nC = [[1.0]]\nD = [[1.0]]\n"
        "Sigma_x = 1\nSigma_w = 0.01\nSigma_v = 0.01\nSigma_d = 0.01\n"
        "[detector]\nrho1 = 1\nrho2 = 2\n"
        "[attack]\ncase = naive\nnaive_bias = [1000.0]\n"
        "[run]\nseed = 3\nsteps = 500\non_reject = freeze\n")
    assert run("simulate", "--config", path, "--out", tmp_path / "o") == 2
