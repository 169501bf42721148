import json

import numpy as np
import pytest

from jetmbs.body import SystemJet
from jetmbs.cli import EXIT_FAILED, EXIT_INVALID, EXIT_OK, main
from jetmbs.models import csv_header, load_model, read_trajectory_csv, save_model, spec_to_dict


def write(tmp_path, name, data):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return path


def test_list_models(capsys):
    assert main(["list-models"]) == EXIT_OK
    out = capsys.readouterr().out
    for name in ("pendulum", "quadrangle", "crank", "planar-quadrangle"):
        assert name in out


def test_check_builtin(capsys, tmp_path):
    dest = tmp_path / "q.json"
    assert main(["check", "quadrangle", "--write-projected", str(dest)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "degrees of freedom   1" in out
    assert load_model(dest).name == "quadrangle"


def test_check_invalid(tmp_path, capsys):
    d = spec_to_dict(load_model("pendulum"))
    d["bodies"][0]["mass"] = 0
    assert main(["check", str(write(tmp_path, "bad.json", d))]) == EXIT_INVALID
    assert "invalid model" in capsys.readouterr().err


def test_check_dependent_rows(tmp_path):
    d = spec_to_dict(load_model("pendulum"))
    d["joints"].append(dict(d["joints"][0]))
    path = write(tmp_path, "dup.json", d)
    assert main(["check", str(path)]) == EXIT_INVALID
    assert main(["simulate", str(path), "--t-end", "0.1"]) == EXIT_INVALID


def test_projection_failure_exit_code(tmp_path, capsys):
    d = spec_to_dict(load_model("quadrangle"))
    d["bodies"][2]["r"] = [30.0, -12.0, 4.0]
    d["projection"]["max_newton"] = 1
    d["projection"]["max_outer"] = 1
    assert main(["simulate", str(write(tmp_path, "far.json", d)), "--t-end", "0.1"]) == EXIT_FAILED
    assert "failed" in capsys.readouterr().err


def test_simulate_writes_auditable_csv(tmp_path, capsys):
    out, stats = tmp_path / "traj.csv", tmp_path / "stats.json"
    code = main(["simulate", "crank", "--t-end", "0.5", "--out", str(out), "--stats", str(stats)])
    assert code == EXIT_OK
    assert "succ. (rej.) steps" in capsys.readouterr().out
    header, rows = read_trajectory_csv(out)
    spec = load_model("crank")
    assert header == csv_header(spec)
    meta = json.loads(stats.read_text())
    assert meta["stats"]["succ_steps"] == len(rows) - 1
    assert meta["metadata"]["invariants"] == "on" and meta["metadata"]["projection"]["mode"] == "quasi"
    # every row re-evaluated from its own state
    m = spec.mechanism()
    n = m.n_coords
    col = {name: k for k, name in enumerate(header)}
    for row in rows:
        jet = SystemJet(row[0], row[2:2 + n], row[2 + n:2 + 2 * n])
        e = m.energies(jet, row[col["W_ext"]])
        assert e.T == pytest.approx(row[col["T"]], rel=1e-12, abs=1e-12)
        assert e.W_total == pytest.approx(row[col["W_total"]], rel=1e-12, abs=1e-9)
        assert np.abs(m.constraints.residual(jet.y)).max() <= 1e-5
    W = rows[:, col["W_total"]]
    assert np.abs(W - W[0]).max() <= 1e-5 * (1 + abs(W[0]))
    assert np.all(np.diff(rows[:, 0]) > 0) and rows[-1, 0] == 0.5


def test_simulate_overrides(tmp_path):
    out = tmp_path / "p.csv"
    assert main(["simulate", "pendulum", "--projection", "orthogonal", "--invariants", "off",
                 "--t-end", "0.3", "--out", str(out)]) == EXIT_OK
    header, rows = read_trajectory_csv(out)
    assert header[:4] == ["t", "h", "r1_0", "r1_1"] and rows[-1, 0] == 0.3


def test_planar_csv_columns(tmp_path):
    out = tmp_path / "pq.csv"
    assert main(["simulate", "planar-quadrangle", "--t-end", "0.1", "--out", str(out)]) == EXIT_OK
    header, _ = read_trajectory_csv(out)
    assert header[2:5] == ["x1", "y1", "beta1"] and "dbeta3" in header


def test_saved_model_loads_from_path(tmp_path):
    path = tmp_path / "c.json"
    save_model(load_model("crank"), path)
    assert main(["check", str(path)]) == EXIT_OK
