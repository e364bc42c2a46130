import csv
import io
import json
import math

import numpy as np
import pytest

from g2forms import cli, g2
from g2forms.report import (
    ScenarioError, build_field, canonical_bytes, dumps, run_builtin, run_scenario, to_csv,
    validate,
)
from g2forms.scenarios import BUILTINS

FLAT_POINTS = [[0.1 * i - 0.3] * 7 for i in range(5)]


def run_cli(capsys, *argv):
    code = cli.main(list(argv))
    return code, capsys.readouterr().out


# --- validation -------------------------------------------------------------

def test_validate_collects_every_error():
    errs = validate({"operation": "torsion", "grid": 1, "seed": -2, "tolerance": 0,
                     "field": {"dim": 7, "degree": 2, "lo": [0], "hi": [1] * 7,
                               "components": {"12": "foo"}}})
    joined = "\n".join(errs)
    for key in ("name:", "grid:", "seed:", "tolerance:", "field: torsion needs",
                "field.lo:", "field.components['12']"):
        assert key in joined
    assert len(errs) >= 7


@pytest.mark.parametrize("sc, fragment", [
    ([], "JSON object"),
    ({"name": "a", "operation": "nope"}, "operation:"),
    ({"name": "a", "operation": "builtin", "builtin": "nope"}, "builtin:"),
    ({"name": "a", "operation": "closedness"}, "field: required"),
    ({"name": "a", "operation": "closedness", "field": "nope"}, "field.builtin"),
    ({"name": "a", "operation": "solve-maximal"}, "mesh:"),
    ({"name": "a", "operation": "solve-maximal", "mesh": {"p": 4, "n": 2},
      "boundary": []}, "mesh.p"),
    ({"name": "a", "operation": "solve-maximal", "mesh": {"p": 2}, "boundary": ["x3"]},
     "boundary[0]"),
    ({"name": "a", "operation": "positivity", "field": "flat7", "points": []}, "points:"),
    ({"name": "a", "operation": "closedness", "field": "flat7", "grid": True}, "grid:"),
])
def test_validate_messages(sc, fragment):
    assert any(fragment in e for e in validate(sc))


def test_valid_scenarios_have_no_errors():
    assert validate({"name": "a", "operation": "builtin", "builtin": "model-calibration"}) == []
    assert validate({"name": "a", "operation": "closedness",
                     "field": {"dim": 2, "degree": 1, "lo": [0, 0], "hi": [1, 1],
                               "components": {"1": "x2"}}}) == []


def test_run_scenario_raises_with_error_list():
    with pytest.raises(ScenarioError) as info:
        run_scenario({"operation": "closedness"})
    assert len(info.value.errors) == 2


# --- fields from expressions ------------------------------------------------

def test_build_field_permutation_signs():
    spec = {"dim": 3, "degree": 2, "lo": [0, 0, 0], "hi": [1, 1, 1],
            "components": {"21": "1", "13": "x1", "2,3": "2"}}
    fld, orientation = build_field(spec)
    assert orientation == 1
    # basis order (12, 13, 23); "21" is -dx12
    np.testing.assert_allclose(fld(np.array([0.5, 0.0, 0.0])), [-1.0, 0.5, 2.0])


def test_expression_field_closedness():
    closed = {"name": "c", "operation": "closedness",
              "field": {"dim": 2, "degree": 1, "lo": [0, 0], "hi": [1, 1],
                        "components": {"1": "x2", "2": "x1"}}}
    assert run_scenario(closed)["passed"]
    # x2 dx1 - x1 dx2 has d = -2 dx12
    rotating = json.loads(json.dumps(closed))
    rotating["field"]["components"] = {"1": "x2", "2": "-x1"}
    rep = run_scenario(rotating)
    assert not rep["passed"]
    assert rep["checks"][0]["value"] == pytest.approx(2.0, rel=1e-6)
    assert len(rep["tables"]["points"]) == 25


def _phi0_components():
    from g2forms.exterior import basis
    return {"".join(str(i + 1) for i in K): repr(float(v))
            for K, v in zip(basis(7, 3), g2.phi_model().coeffs) if v != 0}


def test_expression_phi0():
    field = {"dim": 7, "degree": 3, "lo": [-1] * 7, "hi": [1] * 7,
             "components": _phi0_components()}
    np.testing.assert_array_equal(build_field(field)[0](np.zeros(7)), g2.phi_model().coeffs)
    sc = {"name": "phi", "operation": "positivity", "points": FLAT_POINTS, "field": field}
    assert run_scenario(sc)["passed"]
    assert run_scenario(dict(sc, operation="torsion"))["passed"]
    # reversing the index order of every component gives -phi_0
    field["components"] = {k[::-1]: v for k, v in field["components"].items()}
    assert not run_scenario(sc)["passed"]


# --- operations on named fields --------------------------------------------

@pytest.mark.parametrize("op, field, extra, passed", [
    ("closedness", "flat7", {"grid": 2}, True),
    ("torsion", "flat7", {"points": FLAT_POINTS}, True),
    ("positivity", "flat7", {}, True),
    ("positivity", "phi_eps", {"grid": 2}, True),
    ("torsion", "baraglia", {"grid": 2}, True),
    ("closedness", "torus_reduction", {}, True),
    ("torsion", "s6", {"grid": 2}, False),
    ("positivity", "s6", {"grid": 3}, True),
])
def test_field_operations(op, field, extra, passed):
    rep = run_scenario(dict({"name": "t", "operation": op, "field": field}, **extra))
    assert rep["passed"] is passed
    assert rep["schema"] == 1 and rep["library"]["name"] == "g2forms"
    assert rep["scenario"]["file"]["field"] == field


def test_mean_convexity_of_sphere_cap():
    rep = run_scenario({"name": "m", "operation": "mean-convexity", "field": "s6", "grid": 2})
    v = rep["values"]
    assert rep["passed"]
    assert v["strictly_mean_convex"] and v["classes"]["positive"] == 64


def test_solve_maximal_scenario():
    sc = {"name": "flat", "operation": "solve-maximal", "mesh": {"kind": "box", "p": 2, "n": 5},
          "boundary": ["0.3*x1 - 0.2*x2", "0.1*x2"]}
    rep = run_scenario(sc)
    assert rep["passed"]
    assert rep["values"]["nodes"] == 25
    rows = rep["tables"]["solution"]
    r = rows[12]
    assert r["u1"] == pytest.approx(0.3 * r["x1"] - 0.2 * r["x2"], abs=1e-8)


def test_config_overrides_scenario():
    sc = {"name": "c", "operation": "closedness", "field": "flat7", "grid": 3}
    from g2forms.scenarios import Config
    rep = run_scenario(sc, Config(grid=2))
    assert rep["scenario"]["config"]["grid"] == 2
    assert len(rep["tables"]["points"]) == 2 ** 7


def test_unknown_builtin():
    with pytest.raises(ScenarioError):
        run_builtin("nope")


# --- serialisation ----------------------------------------------------------

def test_dumps_formatting():
    text = dumps({"a": 0.1, "b": [1, 2.5], "c": float("nan"), "d": -math.inf,
                  "e": True, "f": None, "g": np.float64(1 / 3), "h": "λ", "i": []})
    obj = json.loads(text)
    assert obj["a"] == 0.1 and obj["g"] == 1 / 3
    assert obj["c"] == "nan" and obj["d"] == "-inf"
    assert '"h": "λ"' in text
    assert "0.33333333333333331" in text
    assert '"b": [1, 2.5]' in text


def test_canonical_bytes_ignores_timing():
    a = run_builtin("model-calibration")
    b = json.loads(json.dumps(a))
    b["timing"]["seconds"] = 123.0
    assert canonical_bytes(a) == canonical_bytes(b)
    assert b"timing" not in canonical_bytes(a)


def test_csv_layout():
    rep = run_scenario({"name": "c", "operation": "positivity", "field": "flat7", "grid": 2})
    rows = list(csv.reader(io.StringIO(to_csv(rep))))
    assert rows[0] == ["check", "value", "op", "bound", "pass"]
    assert rows[1][0] == "min_margin" and rows[1][4] == "true"
    table = rows.index([]) + 1
    assert rows[table][0] == "table:points" and rows[table][-1] == "margin"
    assert len(rows) - table - 1 == 2 ** 7


# --- command line -----------------------------------------------------------

def test_list_builtins(capsys):
    code, out = run_cli(capsys, "list-builtins")
    assert code == 0
    lines = out.strip().splitlines()
    assert len(lines) == len(BUILTINS) == 16
    assert lines[0].startswith("model-calibration")


def test_verify_builtin(capsys):
    code, out = run_cli(capsys, "verify", "model-calibration")
    assert code == 0
    rep = json.loads(out)
    assert rep["passed"] and rep["scenario"]["criterion"] == 1


def test_verify_failing_scenario_exits_1(tmp_path, capsys):
    f = tmp_path / "s.json"
    f.write_text(json.dumps({"name": "rot", "operation": "closedness",
                             "field": {"dim": 2, "degree": 1, "lo": [0, 0], "hi": [1, 1],
                                       "components": {"1": "x2", "2": "-x1"}}}))
    code, out = run_cli(capsys, "verify", str(f))
    assert code == 1 and json.loads(out)["passed"] is False


@pytest.mark.parametrize("content", ['{"operation": 3', '{"operation": "closedness"}', "[]"])
def test_malformed_scenario_exits_2(tmp_path, capsys, content):
    f = tmp_path / "bad.json"
    f.write_text(content)
    code, out = run_cli(capsys, "verify", str(f))
    assert code == 2
    obj = json.loads(out)
    assert obj["passed"] is False and obj["errors"]


def test_missing_file_exits_2(capsys):
    code, out = run_cli(capsys, "verify", "no-such-thing")
    assert code == 2 and "neither a file" in json.loads(out)["errors"][0]


def test_library_error_exits_2(tmp_path, capsys):
    f = tmp_path / "dom.json"
    f.write_text(json.dumps({"name": "d", "operation": "positivity", "points": [[0.0] * 7],
                             "field": {"dim": 7, "degree": 3, "lo": [-1] * 7, "hi": [1] * 7,
                                       "components": {"123": "log(x1)"}}}))
    code, out = run_cli(capsys, "verify", str(f))
    assert code == 2 and json.loads(out)["errors"][0].startswith("DomainError")


def test_csv_and_out(tmp_path, capsys):
    out_file = tmp_path / "sub" / "r.csv"
    code, out = run_cli(capsys, "verify", "model-calibration", "--format", "csv",
                        "--out", str(out_file))
    assert code == 0 and out == ""
    assert out_file.read_text().startswith("check,value,op,bound,pass\n")


def test_out_dir_env(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv(cli.OUT_DIR_ENV, str(tmp_path))
    code, out = run_cli(capsys, "verify", "model-calibration")
    assert code == 0 and out == ""
    assert json.loads((tmp_path / "model-calibration.json").read_text())["passed"]


def test_report_reemission(tmp_path, capsys):
    code, out = run_cli(capsys, "verify", "model-calibration")
    saved = tmp_path / "saved.json"
    saved.write_text(out)
    code, again = run_cli(capsys, "report", str(saved))
    assert code == 0 and again == out
    code, text = run_cli(capsys, "report", str(saved), "--format", "csv")
    assert code == 0 and text.splitlines()[1].startswith("complex_structure_deviation,")
    code, err = run_cli(capsys, "report", str(tmp_path / "missing.json"))
    assert code == 2


def test_solve_maximal_command(tmp_path, capsys):
    f = tmp_path / "m.json"
    f.write_text(json.dumps({"name": "m", "operation": "solve-maximal",
                             "mesh": {"p": 1, "n": 9}, "boundary": ["0.5*x1"]}))
    code, out = run_cli(capsys, "solve-maximal", str(f), "--tol", "1e-10")
    assert code == 0
    rep = json.loads(out)
    assert rep["values"]["nodes"] == 9 and rep["scenario"]["config"]["tol"] == 1e-10
    g = tmp_path / "c.json"
    g.write_text(json.dumps({"name": "c", "operation": "closedness", "field": "flat7"}))
    code, out = run_cli(capsys, "solve-maximal", str(g))
    assert code == 2


def test_builtin_reports_carry_values():
    rep = run_builtin("b3-volume")
    assert {"lhs", "rhs", "min_mu"} <= set(rep["values"])
    assert all(isinstance(c["pass"], bool) for c in rep["checks"])
