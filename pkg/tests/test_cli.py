# tests/test_cli.py
import io
import json

import pandas as pd
import pytest

from src.bellman import BoundReport
from src.cli import main, parse_range
from src.errors import DomainError


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_omega_text_and_json(capsys):
    code, out, _ = run(capsys, "omega", "--p", "2", "--tau", "0.5")
    assert code == 0
    assert out.splitlines()[0] == "omega 1.70710678118655"
    code, out, _ = run(capsys, "omega", "--p", "2", "--tau", "0.5", "--json")
    record = json.loads(out)
    assert record["omega"] == 1.70710678118655
    assert record["residual"] <= 1e-13


def test_omega_domain_error(capsys):
    code, _, err = run(capsys, "omega", "--p", "2", "--tau", "1.5")
    assert code == 2
    assert err.startswith("error:")


def test_bellman_reference_point(capsys):
    code, out, _ = run(capsys, "bellman", "--p", "3", "--q", "2", "--f", "1", "--A", str(25 / 21), "--json")
    assert code == 0
    record = json.loads(out)
    assert abs(record["exact"] - 7.0) <= 1e-9
    assert abs(record["F"] - 125 / 49) <= 1e-9
    assert record["upper"] >= record["exact"]
    assert record["on_surface"] is True


def test_bellman_surface_error(capsys):
    code, _, _ = run(capsys, "bellman", "--p", "3", "--q", "2", "--f", "1", "--A", "2")
    assert code == 3


def test_extremal_passes_and_dumps(capsys, tmp_path):
    dump = tmp_path / "phi.txt"
    code, out, _ = run(capsys, "extremal", "--p", "3", "--q", "2", "--f", "1", "--A", str(25 / 21),
                       "--alpha", "1/4", "--depth", "10", "--max-rank", "4", "--dump", str(dump), "--json")
    assert code == 0
    record = json.loads(out)
    assert record["status"] == "PASS"
    assert len(record["ranks"]) == 5
    assert dump.exists() and dump.with_suffix(".members.csv").exists()


def test_extremal_text_output(capsys):
    code, out, _ = run(capsys, "extremal", "--p", "3", "--q", "2", "--f", "1", "--A", str(25 / 21),
                       "--alpha", "1/2", "--depth", "6", "--max-rank", "5")
    assert code == 0
    assert out.splitlines()[0].startswith("z ")
    assert out.rstrip().endswith("PASS")


def test_extremal_errors(capsys):
    base = ["extremal", "--p", "3", "--q", "2", "--f", "1", "--A", str(25 / 21)]
    code, _, _ = run(capsys, *base, "--alpha", "1/8", "--depth", "18", "--max-rank", "6")
    assert code == 4
    code, _, _ = run(capsys, *base, "--alpha", "1/3", "--depth", "10", "--max-rank", "1")
    assert code == 2
    code, _, _ = run(capsys, *base, "--alpha", "1/0", "--depth", "10", "--max-rank", "1")
    assert code == 2


def test_verify_suite(capsys, tmp_path):
    code, out, _ = run(capsys, "verify", "--suite", "maximal", "--trials", "20", "--out", str(tmp_path), "--json")
    assert code == 0
    assert json.loads(out) == [{"suite": "maximal", "checks": 60, "violations": 0, "status": "PASS"}]
    assert (tmp_path / "maximal_seed0.parquet").exists()


def test_verify_accepts_lemma41_alias(capsys):
    code, out, _ = run(capsys, "verify", "--suite", "lemma41", "--trials", "5", "--seed", "7", "--json")
    assert code == 0
    assert json.loads(out) == [{"suite": "maximal", "checks": 15, "violations": 0, "status": "PASS"}]


def test_verify_reports_violations(capsys, monkeypatch, tmp_path):
    from src import harness
    monkeypatch.setitem(harness.CHECKS, "doob", lambda phi, exps, tol: {"passed": False})
    monkeypatch.setattr("src.harness.FAILURES_DIR", tmp_path)
    code, out, _ = run(capsys, "verify", "--suite", "doob", "--trials", "2")
    assert code == 1
    assert "FAIL" in out


def test_sweep_surface_table(capsys):
    code, out, _ = run(capsys, "sweep", "--p", "3", "--q", "2", "--f", "1", "--A", "1.05:1.3:50")
    assert code == 0
    df = pd.read_csv(io.StringIO(out))
    assert len(df) == 50
    ok = df[df["status"] == "ok"]
    assert len(ok) > 0
    assert (ok["exact"] <= ok["upper"] * (1 + 1e-12)).all()
    assert (df.loc[df["status"] != "ok", "status"] == "surface error").all()


def test_sweep_fails_when_exact_exceeds_upper(capsys, monkeypatch):
    monkeypatch.setattr("src.cli.upper_bound", lambda exps, triple: BoundReport(
        upper_bound=1.0, k=1.008, on_surface=True, exact_value=7.0))
    code, out, _ = run(capsys, "sweep", "--p", "3", "--q", "2", "--f", "1", "--A", str(25 / 21))
    assert code == 1
    df = pd.read_csv(io.StringIO(out))
    assert df["exact"].iloc[0] == 7.0 and df["upper"].iloc[0] == 1.0


def test_sweep_triples_and_json(capsys):
    code, out, _ = run(capsys, "sweep", "--p", "2", "--q", "1.5", "--f", "1", "--A", "1.2", "--F", "1.5",
                       "--format", "json")
    assert code == 0
    rows = json.loads(out)
    assert len(rows) == 1
    assert abs(rows[0]["k"] - 19 / 15) <= 1e-12
    assert rows[0]["on_surface"] is False


def test_sweep_errors(capsys):
    code, _, _ = run(capsys, "sweep", "--p", "3", "--q", "2", "--f", "1", "--A", "1.1:1.2:0")
    assert code == 2
    code, _, _ = run(capsys, "sweep", "--p", "3", "--q", "2", "--f", "1", "--A", "1.1", "--format", "parquet")
    assert code == 2


def test_sweep_parquet(capsys, tmp_path):
    out = tmp_path / "sweep.parquet"
    code, _, _ = run(capsys, "sweep", "--p", "3:4:2", "--q", "2", "--f", "1", "--A", "1.1:1.2:3",
                     "--format", "parquet", "--out", str(out))
    assert code == 0
    assert len(pd.read_parquet(out)) == 6


def test_converge(capsys):
    code, out, _ = run(capsys, "converge", "--p", "3", "--q", "2", "--f", "1", "--A", str(25 / 21),
                       "--steps", "4", "--depth", "8", "--format", "csv")
    assert code == 0
    df = pd.read_csv(io.StringIO(out))
    assert len(df) == 4
    assert df["lower_analytic"].is_monotonic_increasing


def test_parse_range():
    assert parse_range("3").tolist() == [3.0]
    assert parse_range("1:2:3").tolist() == [1.0, 1.5, 2.0]
    with pytest.raises(DomainError):
        parse_range("1:2")


def test_missing_arguments_exit_by_argparse():
    with pytest.raises(SystemExit) as exc:
        main(["omega", "--p", "2"])
    assert exc.value.code == 2
