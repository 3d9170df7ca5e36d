import json
import subprocess
import sys

import numpy as np
import pytest

from lss.cli import EXIT_DIVERGED, EXIT_OK, EXIT_USAGE, EXIT_WARNING, main
from lss.dynamics import Trajectory

REPULSIVE = json.dumps({"kind": "quadratic", "dx": 1, "dy": 1, "matrix": [[-1, 0], [0, 1]]})
ROTATION = json.dumps({"kind": "quadratic", "dx": 1, "dy": 1, "matrix": [[0, 1], [1, 0]]})


def test_analyze_counterexample(tmp_path, capsys):
    out = tmp_path / "cp.json"
    assert main(["analyze", "--game", "counterexample", "--box", "-2", "2", "--grid", "5",
                 "--out", str(out)]) == EXIT_OK
    report = json.loads(out.read_text())
    assert len(report) == 1 and report[0]["classification"] == "NonNashLASE"
    assert report[0]["jacobian_eigs"][0]["re"] == pytest.approx(0.45)


def test_analyze_non_hyperbolic_warns(capsys):
    assert main(["analyze", "--game", ROTATION, "--box", "-1", "1", "--grid", "3"]) == EXIT_WARNING
    assert "non-hyperbolic" in capsys.readouterr().err


def test_simulate_writes_outputs_and_echo_reproduces(tmp_path, capsys):
    csv_path, svg, js = tmp_path / "run.csv", tmp_path / "run.svg", tmp_path / "run.json"
    assert main(["simulate", "--game", "toy2d", "--rule", "lss", "--init", "12.0", "-6.0",
                 "--steps", "300", "--stride", "10", "--out", str(csv_path), "--svg", str(svg),
                 "--json", str(js)]) == EXIT_OK
    first = csv_path.read_text()
    assert first.startswith("n,z_0,z_1,v_0,v_1,omega_norm,v_gap\n")
    assert svg.read_text().lstrip().startswith("<svg")
    assert json.loads(js.read_text())["metadata"]["rule"] == "lss"
    echo = json.loads((tmp_path / "run.csv.config.json").read_text())
    assert echo["config"]["steps"] == 300 and "build_id" in echo

    again = tmp_path / "again.csv"
    assert main(["simulate", "--config", str(tmp_path / "run.csv.config.json"),
                 "--out", str(again)]) == EXIT_OK
    assert again.read_text() == first


def test_simulate_zero_steps(tmp_path):
    path = tmp_path / "z.csv"
    assert main(["simulate", "--rule", "sga", "--init", "0.3", "-0.3", "--steps", "0",
                 "--out", str(path)]) == EXIT_OK
    traj = Trajectory.from_csv(path.read_text())
    assert len(traj.n) == 1
    np.testing.assert_array_equal(traj.z[0], [0.3, -0.3])


@pytest.mark.parametrize("rule", ["simgd", "2ts-simgd", "co", "sga", "lss", "tvlss",
                                  "ode-omega", "ode-h"])
def test_every_rule_runs(rule, capsys):
    assert main(["simulate", "--rule", rule, "--init", "0.3", "-0.3", "--steps", "50"]) == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert summary["rule"] == rule and len(summary["terminal"]) == 2


def test_noisy_simulation_is_seeded(capsys):
    argv = ["simulate", "--rule", "simgd", "--init", "0.3", "-0.3", "--steps", "100",
            "--noise", "gaussian", "--c-z", "0.1", "--sigma", "0.5"]
    assert main(argv + ["--seed", "1"]) == EXIT_OK
    a = capsys.readouterr().out
    assert main(argv + ["--seed", "1"]) == EXIT_OK
    b = capsys.readouterr().out
    assert main(argv + ["--seed", "2"]) == EXIT_OK
    c = capsys.readouterr().out
    assert a == b and a != c


def test_divergence_exit_code_and_marker(tmp_path, capsys):
    path = tmp_path / "d.csv"
    code = main(["simulate", "--game", REPULSIVE, "--init", "1", "1", "--steps", "500",
                 "--a-c", "0.5", "--out", str(path)])
    assert code == EXIT_DIVERGED
    assert "# DIVERGED at n=" in path.read_text()


@pytest.mark.parametrize("argv", [
    ["simulate", "--rule", "adam", "--init", "0", "0"],
    ["simulate", "--init", "0", "0", "0"],
    ["simulate", "--rule", "simgd"],
    ["simulate", "--init", "0", "0", "--steps", "-1"],
    ["simulate", "--init", "0", "0", "--xi1", "0"],
    ["simulate", "--game", "{bad json", "--init", "0", "0"],
    ["analyze", "--box", "3", "1"],
    ["preset", "nope"],
    ["lockin", "--preset", "nope"],
    ["lockin", "--game", "counterexample", "--z-star", "0", "0"],
    ["frobnicate"],
    ["simulate", "--steps", "many"],
])
def test_bad_input_exits_with_usage_code(argv, capsys, tmp_path):
    assert main(argv + ([] if argv[0] != "preset" else ["--out", str(tmp_path)])) == EXIT_USAGE
    assert capsys.readouterr().err


def test_unknown_preset_lists_valid_names(capsys, tmp_path):
    main(["preset", "nope", "--out", str(tmp_path)])
    err = capsys.readouterr().err
    assert "toy2d-figure1" in err and "counterexample-appB" in err


def test_unknown_config_field(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"init": [0.1, 0.1], "stepz": 4}))
    assert main(["simulate", "--config", str(cfg)]) == EXIT_USAGE
    assert "stepz" in capsys.readouterr().err


def test_lockin_small_run(tmp_path, monkeypatch):
    monkeypatch.setenv("LSS_THREADS", "0")
    out, trials = tmp_path / "l.json", tmp_path / "t.csv"
    game = json.dumps({"kind": "quadratic", "dx": 1, "dy": 1, "matrix": [[1, 0], [0, -1]]})
    assert main(["lockin", "--game", game, "--rule", "simgd", "--z-star", "0", "0",
                 "--a-c", "1.0", "--a-alpha", "0.6", "--n0", "100", "--n1", "400",
                 "--horizon", "500", "--trials", "12", "--noise", "uniform", "--c-z", "0.05",
                 "--out", str(out), "--trials-csv", str(trials)]) == EXIT_OK
    doc = json.loads(out.read_text())
    assert doc["trials"] == 12 and doc["p_hat"] == 1.0
    assert doc["wilson"][0] < 1.0 and doc["config"]["n0"] == 100
    assert len(trials.read_text().splitlines()) == 13


def test_counterexample_preset(tmp_path, capsys):
    assert main(["preset", "counterexample-appB", "--out", str(tmp_path)]) == EXIT_OK
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["all_expectations_met"]
    assert len(summary["game_hash"]) == 16
    assert (tmp_path / "lss_init0.csv").exists() and (tmp_path / "lss_all.svg").exists()


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "lss.cli", "--version"], capture_output=True,
                         text=True)
    assert out.returncode == 0 and "0.1.0" in out.stdout
