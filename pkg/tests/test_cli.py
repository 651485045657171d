import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from recipe_rl.cli import build_parser, main, resolve
from recipe_rl.neural import Mlp

FAST_CEM = ["--algo", "cem", "--hidden", "", "--population", "2", "--episodes-per-candidate", "1", "--episodes", "1"]


def _lines(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_baseline_writes_metrics(tmp_path):
    assert main(["baseline", "--out", str(tmp_path), "--episodes", "1"]) == 0
    m = json.loads((tmp_path / "metrics.json").read_text())
    assert m["n_episodes"] == 1 and m["completion_rate"] == 1.0
    assert sorted(p.name for p in (tmp_path / "episodes").glob("episode_*.csv")) == ["episode_1000001.csv"]
    cfg = json.loads((tmp_path / "config.json").read_text())
    assert cfg["command"] == "baseline" and cfg["episodes"] == 1


def test_missing_parameter_file_exits_2(tmp_path, capsys):
    assert main(["baseline", "--out", str(tmp_path), "--params", str(tmp_path / "nope.txt")]) == 2
    assert "error" in capsys.readouterr().err


def test_unknown_config_key_exits_2(tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"sed": 3}))
    assert main(["baseline", "--out", str(tmp_path / "r"), "--config", str(tmp_path / "c.json")]) == 2


def test_train_cem_and_rerun_identically(tmp_path):
    args = ["train", "--generations", "2", "--scenario", "2", "--seed", "4", *FAST_CEM]
    assert main([*args, "--out", str(tmp_path / "a")]) == 0
    assert main([*args, "--out", str(tmp_path / "b")]) == 0
    curve = _lines(tmp_path / "a" / "curve.csv")
    assert curve[0] == ["steps", "mean_return", "std_return"] and len(curve) - 1 >= 2
    for name in ("weights.json", "curve.csv", "metrics.json", "config.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_train_direct_env(tmp_path):
    rc = main(["train", "--out", str(tmp_path), "--env", "direct", "--scenario", "3", "--generations", "1", *FAST_CEM])
    assert rc == 0
    assert Mlp.load(tmp_path / "weights.json").arch == [11, 3]


def test_train_td3_steps(tmp_path):
    rc = main(["train", "--out", str(tmp_path), "--algo", "td3", "--hidden", "8", "--steps", "28", "--batch", "8",
               "--buffer", "100", "--warmup", "10", "--episodes", "1"])  # fmt: skip
    assert rc == 0
    assert Mlp.load(tmp_path / "weights.json").arch == [40, 8, 1]


@pytest.fixture(scope="module")
def linear_weights(tmp_path_factory):
    d = tmp_path_factory.mktemp("w")
    Mlp([40, 1], output="tanh", seed=0).save(d / "w.json")
    return d / "w.json"


def test_evaluate_ten_episodes(tmp_path, linear_weights):
    assert main(["evaluate", "--out", str(tmp_path), "--weights", str(linear_weights), "--hidden", ""]) == 0
    assert len(list((tmp_path / "episodes").glob("episode_*.csv"))) == 10
    assert len(_lines(tmp_path / "episodes" / "episodes.csv")) == 11


def test_evaluate_arch_mismatch_exits_2(tmp_path, linear_weights, capsys):
    rc = main(["evaluate", "--out", str(tmp_path), "--weights", str(linear_weights), "--hidden", "50,50"])
    assert rc == 2
    err = capsys.readouterr().err
    assert "[40, 1]" in err and "[50, 50]" in err
    rc = main(["evaluate", "--out", str(tmp_path), "--weights", str(linear_weights), "--env", "direct"])
    assert rc == 2


def test_evaluate_corrupt_weights_exits_2(tmp_path):
    (tmp_path / "w.json").write_text('{"arch": [40, 1], "layers": [{"W": [[1.0]], "b": [0.0]}]}')
    assert main(["evaluate", "--out", str(tmp_path / "r"), "--weights", str(tmp_path / "w.json")]) == 2
    (tmp_path / "x.json").write_text("not json")
    assert main(["evaluate", "--out", str(tmp_path / "r"), "--weights", str(tmp_path / "x.json")]) == 2


def test_grid_single_cell_and_resume(tmp_path):
    args = ["grid", "--out", str(tmp_path), "--algo", "td3", "--archs", "4", "--batch-sizes", "8", "--lrs", "1e-3",
            "--noises", "0.1", "--buffers", "100", "--scenarios", "2", "--budget", "2", "--episodes", "1"]  # fmt: skip
    assert main(args) == 0
    rows = _lines(tmp_path / "results.csv")
    assert len(rows) == 2 and rows[1][0] == "td3-000"
    weights = tmp_path / "cells" / "td3-000" / "weights.json"
    stamp = weights.stat().st_mtime_ns
    first = (tmp_path / "results.csv").read_bytes()
    assert main(args) == 0
    assert weights.stat().st_mtime_ns == stamp
    assert (tmp_path / "results.csv").read_bytes() == first


def test_seed_precedence():
    p = build_parser()
    assert resolve(p.parse_args(["baseline", "--out", "x"]), environ={}).seed == 0
    assert resolve(p.parse_args(["baseline", "--out", "x"]), environ={"RECIPE_RL_SEED": "7"}).seed == 7
    assert resolve(p.parse_args(["baseline", "--out", "x", "--seed", "3"]), environ={"RECIPE_RL_SEED": "7"}).seed == 3


def test_config_file_values_are_overridden_by_flags(tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"seed": 11, "scenario": 1, "episodes": 4}))
    p = build_parser()
    cfg = resolve(p.parse_args(["baseline", "--out", "x", "--config", str(tmp_path / "c.json"), "--scenario", "3"]), environ={})
    assert (cfg.seed, cfg.scenario, cfg.episodes) == (11, 3, 4)


def test_simulate(tmp_path):
    (tmp_path / "u.csv").write_text("m_dot_feed,T_J_in,T_CW_EHE_in\n" + "1000,355,350\n" * 4)
    assert main(["simulate", "--out", str(tmp_path / "r"), "--inputs", str(tmp_path / "u.csv")]) == 0
    rows = _lines(tmp_path / "r" / "trajectory.csv")
    assert len(rows) == 5 and float(rows[-1][0]) == 120.0
    (tmp_path / "bad.csv").write_text("feed\n1\n")
    assert main(["simulate", "--out", str(tmp_path / "r2"), "--inputs", str(tmp_path / "bad.csv")]) == 2


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "recipe_rl.cli", "baseline", "--out", str(tmp_path), "--episodes", "1"],
                       capture_output=True, text=True)  # fmt: skip
    assert r.returncode == 0, r.stderr
    assert (tmp_path / "metrics.json").exists()
