import csv
import json

import pytest

from surrogate_dual.cli import fmt, main


def run(args, capsys):
    code = main(args)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_solve_dual(tmp_path, capsys, data_dir):
    code, out, _ = run(["solve-dual", "--instance", str(data_dir / "example1.json"), "--out", str(tmp_path)], capsys)
    assert code == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["bound"] == pytest.approx(-0.38, abs=0.01)
    assert summary["termination"] == "psi_below_epsilon"
    with open(tmp_path / "trace.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["K", "iteration", "psi", "psi_primal", "lambda_1_1", "lambda_1_2", "sub_status", "sub_bound", "D"]
    assert len(rows) == summary["iterations"]
    assert json.loads(out)["bound"] == summary["bound"]


def test_evaluate_example2(tmp_path, capsys, data_dir):
    inst = str(data_dir / "example2.json")
    _, out, _ = run(["evaluate", "--instance", inst, "--lambda", "[[0.7,0.3],[0.3,0.7]]"], capsys)
    assert json.loads(out)["value"] == pytest.approx(0.30, abs=0.01)
    _, out, _ = run(["evaluate", "--instance", inst, "--lambda", "[[0.5,0.5],[0.5,0.5]]", "--out", str(tmp_path)], capsys)
    assert json.loads(out)["value"] == pytest.approx(0.19, abs=0.01)
    assert (tmp_path / "summary.json").exists()


def test_evaluate_lagrangian(capsys, data_dir):
    inst = str(data_dir / "example1.json")
    _, out, _ = run(["evaluate", "--instance", inst, "--lambda", "[0.67, 0.82]", "--lagrangian"], capsys)
    assert json.loads(out)["value"] == pytest.approx(-0.78, abs=0.01)


def test_missing_file(capsys):
    code, _, err = run(["solve-dual", "--instance", "does/not/exist.json"], capsys)
    assert code == 2 and "not found" in err


def test_bad_instance(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"n": 1, "objective": [1], "boxes": [[0, null]], "nonlinear": []}')
    code, _, err = run(["evaluate", "--instance", str(bad), "--lambda", "[1]"], capsys)
    assert code == 2 and "unbounded variable" in err


def test_bad_lambda(capsys, data_dir):
    code, _, err = run(["evaluate", "--instance", str(data_dir / "example1.json"), "--lambda", "[1, 2, 3]"], capsys)
    assert code == 2 and "--lambda" in err


def test_unknown_flag_exits_2(data_dir):
    with pytest.raises(SystemExit) as exc:
        main(["solve-dual", "--instance", str(data_dir / "example1.json"), "--symmetry", "lex"])
    assert exc.value.code == 2


def test_rootgap(tmp_path, capsys, data_dir):
    code, out, _ = run(
        ["rootgap", "--instance", str(data_dir / "example1.json"), "--k", "2", "--max-iterations", "25", "--out", str(tmp_path)],
        capsys,
    )
    assert code == 0
    runs = json.loads(out)["runs"]
    assert [r["K"] for r in runs] == [1, 2]
    assert runs[1]["bound"] >= runs[0]["bound"] - 1e-6
    assert runs[1]["gap_closed_vs_K1"] > 0.5
    header = (tmp_path / "trace.csv").read_text().splitlines()[0]
    assert "lambda_2_2" in header


def test_tree_demo(tmp_path, capsys, data_dir):
    inst = str(data_dir / "tree_demo.json")
    code, _, _ = run(["tree-demo", "--instance", inst, "--pool-size", "1", "--depth", "2", "--out", str(tmp_path)], capsys)
    assert code == 0
    with open(tmp_path / "nodes.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert rows[0]["candidates"] == "1"
    assert any(r["candidates"] == "0" and r["depth"] != "0" for r in rows)

    code, _, _ = run(["tree-demo", "--instance", inst, "--pool-size", "0", "--depth", "2", "--out", str(tmp_path)], capsys)
    with open(tmp_path / "nodes.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert all(r["bound"] == r["milp_bound"] for r in rows)

    run(["tree-demo", "--instance", inst, "--pool-size", "1", "--depth", "2", "--primal", "-0.6", "--out", str(tmp_path)], capsys)
    with open(tmp_path / "nodes.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert any(r["pruned"] == "1" for r in rows)
    assert all((r["pruned"] == "1") == (float(r["bound"]) > -0.6) for r in rows)


def test_float_format():
    assert fmt(1 / 3) == "0.333333333333"
    assert fmt(float("inf")) == "inf" and fmt(-float("inf")) == "-inf"
    assert fmt(2.0) == "2"
