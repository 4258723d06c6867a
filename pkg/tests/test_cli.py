import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from neutral_hj import History
from neutral_hj.cli import main, run
from neutral_hj.problems import b3_state, get_problem


def read_csv(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# config=")
    config = json.loads(lines[0][len("# config="):])
    rows = list(csv.reader(lines[1:]))
    return config, rows[0], np.array(rows[1:], dtype=float)


def b3_config(**point):
    return {"problem": {"name": "neutral_no_control", "params": {"a": 0.5}},
            "numerics": {"steps_per_interval": 16},
            "point": {"tau": 0.25, "history": {"kind": "linear", "slope": 0.4, "offset": -0.2}, **point}}


def test_simulate_matches_recursion(tmp_path):
    cfg = b3_config()
    assert run("simulate", cfg, tmp_path) == 0
    config, header, data = read_csv(tmp_path / "trajectory.csv")
    assert config == cfg
    assert header == ["t", "x1", "y1"]
    prob = get_problem("neutral_no_control", {"a": 0.5})
    w = History.linear(1.0, [0.4], [-0.2])
    for t, x, _ in data[:: 7]:
        assert x == pytest.approx(b3_state(prob, 0.25, w.left_end, w, t), abs=1e-9)


def test_simulate_rejects_control_outside_lattice(tmp_path, capsys):
    cfg = {"problem": {"name": "delayless_min_norm"}, "point": {"tau": 0.0, "z": 1.0},
           "simulate": {"control": [0.3, 1.0]}}
    assert run("simulate", cfg, tmp_path) == 2
    assert "not in the control lattice" in capsys.readouterr().err


def test_value_b1(tmp_path):
    cfg = {"problem": {"name": "delayless_min_norm"}, "numerics": {"k": 8, "steps_per_interval": 8},
           "point": {"tau": 0.0, "z": 1.5}}
    assert run("value", cfg, tmp_path) == 0
    rec = json.loads((tmp_path / "value.json").read_text())
    # the lattice can land within (ϑ - τ)/(2k) of the origin
    assert rec["value"] <= 2.0 / 16 + 1e-12
    assert rec["config"] == cfg
    assert len(rec["control"]) == 8


def test_value_extend_step_history(tmp_path):
    cfg = {"problem": {"name": "neutral_linear_value"}, "numerics": {"k": 1, "steps_per_interval": 8},
           "point": {"tau": 0.4, "z": [0.5, 0.5],
                     "history": {"kind": "step", "breaks": [-0.6], "values": [[1.0, 0.0], [0.0, 1.0]]}},
           "value": {"extend": True}}
    assert run("value", cfg, tmp_path) == 0
    rec = json.loads((tmp_path / "value.json").read_text())
    c = np.array([1.0, 2.0])
    assert rec["value"] == pytest.approx(c @ (np.array([0.5, 0.5]) - 0.5 * np.array([1.0, 0.0])), abs=1e-3)
    assert len(rec["gaps"]) == 4


def test_budget_exceeded_is_config_error(tmp_path, capsys):
    cfg = {"problem": {"name": "delayless_min_norm"}, "numerics": {"k": 8, "budget": 10},
           "point": {"tau": 0.0, "z": 1.0}}
    assert run("value", cfg, tmp_path) == 2
    assert "budget" in capsys.readouterr().err.lower()


def test_feedback_outputs(tmp_path):
    cfg = {"problem": {"name": "delayless_min_norm"}, "numerics": {"k": 4, "steps_per_interval": 8},
           "point": {"tau": 0.0, "z": 0.5}, "feedback": {"s": 1.0}}
    assert run("feedback", cfg, tmp_path) == 0
    _, header, ctrl = read_csv(tmp_path / "control.csv")
    assert header == ["t_start", "t_end", "u1"]
    assert np.all(ctrl[:, 2] == -1.0)
    assert (tmp_path / "trajectory.csv").exists()


def test_mollify_outputs(tmp_path):
    cfg = {"problem": {"name": "delayless_min_norm"},
           "point": {"tau": 0.0, "z": 1.0, "history": {"kind": "step", "breaks": [-0.5], "values": [-1.0, 1.0]}},
           "mollify": {"j": [4, 32]}}
    assert run("mollify", cfg, tmp_path) == 0
    d4 = json.loads((tmp_path / "mollify_j4.json").read_text())["l1_distance"]
    d32 = json.loads((tmp_path / "mollify_j32.json").read_text())["l1_distance"]
    assert d32 < d4


def test_verify_b4_and_determinism(tmp_path):
    cfg = {"problem": {"name": "neutral_linear_value"}, "numerics": {"seed": 3},
           "verify": {"points": 2, "selections": 2, "phi2_pairs": 40}}
    assert run("verify", cfg, tmp_path / "a") == 0
    assert run("verify", cfg, tmp_path / "b", jobs=2) == 0
    a = (tmp_path / "a" / "report.jsonl").read_bytes()
    assert a == (tmp_path / "b" / "report.jsonl").read_bytes()
    first = json.loads(a.splitlines()[0])
    assert first == {"config": cfg}
    assert (tmp_path / "a" / "summary.txt").read_text().strip().endswith("checks passed")


def test_verify_exit_code_follows_reports(tmp_path):
    cfg = {"problem": {"name": "delayless_min_norm"}, "verify": {"functional": "analytic", "points": 1,
                                                                 "selections": 1, "phi2_pairs": 20}}
    # the B1 closed form has no analytic derivatives; the numeric-candidate checks still run
    code = run("verify", cfg, tmp_path)
    assert code in (0, 1)
    lines = (tmp_path / "report.jsonl").read_text().splitlines()
    passed = [json.loads(l)["passed"] for l in lines[1:]]
    assert code == (0 if all(passed) else 1)


@pytest.mark.parametrize("cfg, message", [
    ({"problem": {"name": "nope"}}, "unknown problem"),
    ({"problem": {"name": "pure_transport", "params": {"bogus": 1}}}, "bad problem parameters"),
    ({"problem": {"name": "pure_transport"}, "point": {"history": {"kind": "spline"}}}, "unknown history kind"),
    ({"problem": {"name": "pure_transport"}, "point": {"history": {"kind": "step", "breaks": [-0.5]}}},
     "malformed step history"),
    ({"problem": {"name": "pure_transport"}, "point": {"tau": 5.0}}, "point.tau"),
    ({"problem": {"name": "pure_transport"}, "numerics": {"k": 0}}, "numerics.k"),
])
def test_config_errors_exit_2(tmp_path, capsys, cfg, message):
    assert run("simulate", cfg, tmp_path) == 2
    assert message in capsys.readouterr().err


def test_main_with_toml_file(tmp_path):
    (tmp_path / "run.toml").write_text(
        '[problem]\nname = "pure_transport"\n\n[point]\ntau = 0.5\nz = [1.0, 0.0]\n')
    assert main(["simulate", "--config", str(tmp_path / "run.toml"), "--out", str(tmp_path / "o")]) == 0
    config, _, data = read_csv(tmp_path / "o" / "trajectory.csv")
    assert config["point"]["z"] == [1.0, 0.0]
    assert data[-1][1:3] == pytest.approx([1.0 + 1.5 * 0.5, -1.5 * 0.25])


def test_main_history_file(tmp_path):
    w = History.step(1.0, [-0.3], [[0.0], [2.0]])
    (tmp_path / "w.json").write_text(w.to_json())
    (tmp_path / "run.json").write_text(json.dumps(
        {"problem": {"name": "neutral_no_control"}, "point": {"tau": 0.0, "history": {"kind": "file", "path": "w.json"}}}))
    assert main(["simulate", "--config", str(tmp_path / "run.json"), "--out", str(tmp_path / "o")]) == 0


def test_main_errors(tmp_path):
    assert main(["simulate", "--out", str(tmp_path)]) == 2
    assert main(["simulate", "--config", str(tmp_path / "missing.toml")]) == 2
    (tmp_path / "bad.toml").write_text("[problem\n")
    assert main(["simulate", "--config", str(tmp_path / "bad.toml")]) == 2


def test_console_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "neutral_hj.cli", "simulate", "--problem", "zero_hamiltonian",
                          "--out", str(tmp_path)], capture_output=True, text=True)
    assert out.returncode == 0
    assert (tmp_path / "trajectory.csv").exists()
