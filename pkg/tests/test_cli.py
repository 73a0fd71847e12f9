import csv
import io
import json
import subprocess
import sys

import pytest

import spba.cli as cli
from spba.analysis import SWEEP_COLUMNS, TABLE_COLUMNS, TableRow
from spba.cli import EXIT_CHECK_FAILED, EXIT_ERROR, EXIT_OK, main

TABLE_HEADER = ("scenario,rS,rE,D1,D2,D3,predicted,numeric,gap_ratio,annihilation_residual,"
                "complete,match,corrections")
SWEEP_HEADER = "param,feature,quantity,value,jacobian_norm,nullity,predicted_nullity,translation_exclusion"


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_pinned_headers():
    assert ",".join(TABLE_COLUMNS) == TABLE_HEADER
    assert ",".join(SWEEP_COLUMNS) == SWEEP_HEADER


def test_obsv_table(tmp_path):
    out = tmp_path / "table.csv"
    assert main(["obsv-table", "--preset", "room", "--preset", "corridor", "--out", str(out)]) == EXIT_OK
    assert out.read_text().splitlines()[0] == TABLE_HEADER
    rows = _rows(out)
    assert [r["scenario"] for r in rows] == ["corridor", "room"]
    assert all(r["match"] == "true" and r["complete"] == "true" for r in rows)


def test_obsv_table_from_config(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"schema_version": 1, "scenarios": [{"preset": "two-edges"}]}))
    out = tmp_path / "t.csv"
    assert main(["obsv-table", "--config", str(cfg), "--out", str(out), "--states", "2"]) == EXIT_OK
    assert _rows(out)[0]["predicted"] == "4"


def test_obsv_table_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for p in (a, b):
        main(["obsv-table", "--preset", "wall-corner", "--seed", "9", "--out", str(p)])
    assert a.read_bytes() == b.read_bytes()


@pytest.mark.parametrize("param", ["sp", "cp", "pluecker"])
def test_singularity_sweep(param, tmp_path):
    out = tmp_path / f"{param}.csv"
    assert main(["singularity-sweep", "--param", param, "--out", str(out)]) == EXIT_OK
    assert out.read_text().splitlines()[0] == SWEEP_HEADER
    rows = _rows(out)
    assert rows and all(r["param"] == param for r in rows)
    if param == "cp":
        tiny = [r for r in rows if float(r["value"]) == 1e-6]
        assert float(tiny[0]["jacobian_norm"]) >= 1e5


def test_ba_montecarlo(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for p in (a, b):
        assert main(["ba-montecarlo", "--runs", "1", "--seed", "2", "--out", str(p)]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()
    rep = json.loads(a.read_text())
    assert rep["command"] == "ba-montecarlo" and rep["schema_version"] == 1
    (r,) = rep["reports"]
    assert r["fej"] is True and r["runs"] == 1 and len(r["runs_detail"]) == 1


def test_fej_off_reports_without_check(tmp_path):
    out = tmp_path / "off.json"
    assert main(["ba-montecarlo", "--runs", "1", "--fej", "off", "--out", str(out)]) == EXIT_OK
    assert json.loads(out.read_text())["reports"][0]["fej"] is False


@pytest.mark.parametrize("argv", [
    ["ba-montecarlo", "--param", "cpp", "--runs", "1"],
    ["obsv-table", "--config", "/nonexistent/cfg.json"],
])
def test_error_exit_codes(argv, capsys):
    assert main(argv) == EXIT_ERROR
    assert "error:" in capsys.readouterr().err


def test_bad_configs(tmp_path):
    bad = tmp_path / "bad.json"
    for text in ("{", json.dumps({"schema_version": 1, "scenarios": [{"name": "empty"}]}),
                 json.dumps({"schema_version": 7, "scenarios": ["room"]})):
        bad.write_text(text)
        assert main(["obsv-table", "--config", str(bad)]) == EXIT_ERROR


@pytest.mark.parametrize("argv", [
    ["obsv-table", "--bogus"], ["singularity-sweep"], ["ba-montecarlo", "--runs", "0"], ["frobnicate"],
])
def test_usage_errors(argv):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == EXIT_ERROR


def test_failed_check_exit_code(monkeypatch, tmp_path):
    bad = TableRow("x", 1, 0, True, False, False, 8, 7, 1e6, 1e-17, True, False, "")
    monkeypatch.setattr(cli, "obsv_table", lambda *a, **k: [bad])
    assert main(["obsv-table", "--preset", "room", "--out", str(tmp_path / "t.csv")]) == EXIT_CHECK_FAILED


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "spba", "singularity-sweep", "--param", "cp"],
                         capture_output=True, text=True, timeout=60)
    assert res.returncode == 0
    rows = list(csv.DictReader(io.StringIO(res.stdout)))
    assert len(rows) == 4
