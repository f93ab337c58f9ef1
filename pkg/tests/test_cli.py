import csv
import io
import json
import math
from pathlib import Path

import pytest

from fwdstraddle.cli import RunConfig, dumps, main, run

FIX = Path(__file__).resolve().parent.parent / "fixtures"
U1, U2 = str(FIX / "uniform_mu.json"), str(FIX / "uniform_nu.json")


def call(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_check_reversed(capsys):
    code, out, _ = call(capsys, "check", U2, U1)
    assert code == 2
    d = json.loads(out)
    assert d["message"] == "convex_order violated_at 0"
    assert d["violated_at"] == 0.0


def test_check_ok(capsys):
    code, out, _ = call(capsys, "check", U1, U2)
    d = json.loads(out)
    assert code == 0 and d["convex_order"] == "holds" and d["kappa"] == 0.5


def test_lower_report(capsys, tmp_path):
    curves = tmp_path / "c.csv"
    code, out, _ = call(capsys, "lower", U1, U2, "--grid", "60", "--curves", str(curves))
    d = json.loads(out)
    assert code == 0
    assert d["primal_price"] == pytest.approx(0.5931003178828911, abs=1e-12)
    assert abs(d["gap"]) <= 1e-6 and d["min_lagrangian"] >= -1e-9
    header = curves.read_text().splitlines()[0]
    assert header == "u,x,P,Q,phi,zeta,w"


def test_lower_sample(capsys, tmp_path):
    target = tmp_path / "s.csv"
    code, _, _ = call(capsys, "lower", U1, U2, "--grid", "20", "--sample", "5", "--seed", "3", "--sample-out", str(target))
    rows = list(csv.reader(io.StringIO(target.read_text())))
    assert code == 0 and rows[0] == ["x", "y"] and len(rows) == 6


def test_verify(capsys):
    code, out, _ = call(capsys, "verify", U1, U2, "--grid", "500x500")
    d = json.loads(out)
    assert code == 0 and d["min_lagrangian"] >= -1e-9 and d["passed"]


def test_upper(capsys):
    code, out, _ = call(capsys, "upper", U1, str(FIX / "upper_nu.json"))
    d = json.loads(out)
    assert code == 0 and d["upper_price"] == pytest.approx(2.0, abs=1e-12)
    code, out, _ = call(capsys, "upper", U1, U2)
    assert code == 2 and json.loads(out)["error"] == "separation"


def test_hedge_table(capsys, tmp_path):
    out_file = tmp_path / "h.csv"
    code, _, _ = call(capsys, "hedge", U1, U2, "--grid", "-3", "3", "7", "--out", str(out_file))
    rows = list(csv.reader(io.StringIO(out_file.read_text())))
    assert code == 0 and rows[0] == ["x", "psi", "delta"] and len(rows) == 8
    code, out, _ = call(capsys, "hedge", U1, U2, "--out", str(out_file), "--lagrangian-grid", "50", "50")
    assert code == 0 and json.loads(out)["passed"]


def test_curves(capsys):
    code, out, _ = call(capsys, "curves", U1, U2, "--grid", "-2", "2", "5")
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["x", "D", "D_left", "D_right"]
    assert float(rows[3][1]) == pytest.approx(0.25, abs=1e-15)


def test_oracle(capsys):
    code, out, _ = call(capsys, "oracle", U1, U2, "--n", "30", "--sense", "min")
    d = json.loads(out)
    assert code == 0 and set(d) >= {"value", "epsilon", "n"} and d["n"] == 30


def test_oracle_csv(capsys):
    code, out, _ = call(capsys, "oracle", U1, U2, "--n", "10", "--format", "csv")
    rows = dict(csv.reader(io.StringIO(out)))
    assert code == 0 and rows["n"] == "10"


def test_multi(capsys):
    code, out, _ = call(capsys, "multi", U1, U2, str(FIX / "u3.json"))
    d = json.loads(out)
    assert code == 0
    assert d["total"] == sum(s["price"] for s in d["steps"])
    code, out, _ = call(capsys, "multi", U2, U1)
    assert code == 2 and json.loads(out)["step"] == 1


def test_sample_deterministic(capsys):
    _, a, _ = call(capsys, "sample", U1, U2, "--n", "50", "--seed", "9")
    _, b, _ = call(capsys, "sample", U1, U2, "--n", "50", "--seed", "9")
    assert a == b and len(a.splitlines()) == 51


def test_json_byte_identical(capsys):
    _, a, _ = call(capsys, "lower", U1, U2, "--grid", "30")
    _, b, _ = call(capsys, "lower", U1, U2, "--grid", "30")
    assert a == b
    keys = list(json.loads(a))
    assert keys == sorted(keys)


def test_input_errors(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"atoms": [{"x": 1}]}')
    code, _, err = call(capsys, "check", str(bad), U2)
    assert code == 1 and json.loads(err)["error"] == "input"
    code, _, _ = call(capsys, "check", str(tmp_path / "missing.json"), U2)
    assert code == 1
    bad.write_text("not json")
    assert call(capsys, "check", str(bad), U2)[0] == 1


def test_power_tail_inputs(capsys):
    code, out, _ = call(capsys, "check", str(FIX / "atoms_mu.json"), str(FIX / "atoms_nu.json"))
    assert code == 0
    assert json.loads(out)["E"] == [-0.5, 1.0]


def test_non_finite_rendered_as_strings():
    d = json.loads(dumps({"b": math.inf, "a": [-math.inf, math.nan, 0.1]}))
    assert d == {"a": ["-inf", "nan", 0.1], "b": "inf"}


def test_run_config_validation():
    with pytest.raises(ValueError):
        RunConfig("check", [U1, U2], tol_order=0.0)
    assert run(RunConfig("check", [U1])) == 1
