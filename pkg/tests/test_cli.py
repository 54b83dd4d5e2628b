import json

import pytest

from burnside_lab import __version__
from burnside_lab.cli import build_parser, main

TINY = {
    "name": "tiny",
    "generators": [{"name": "r", "kind": "rotation", "axis": [0, 0, 1], "angle": 1.5707963267948966}],
    "experiments": ["growth", "order"],
    "max_radius": 6,
}


@pytest.fixture
def tiny(tmp_path):
    p = tmp_path / "tiny.json"
    p.write_text(json.dumps(TINY))
    return str(p)


def test_subcommands():
    p = build_parser()
    for cmd in ("growth", "derivs", "crgrowth", "lyapunov", "pesin", "qc", "recur", "order", "conjfamily", "run"):
        assert p.parse_args([cmd, "--scenario", "x"]).command == cmd


def test_run_json_to_stdout(tiny, capsys):
    assert main(["run", "--scenario", tiny]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["library_version"] == __version__
    assert doc["experiments"]["growth"]["rows"][-1]["count"] == 4
    assert doc["experiments"]["order"]["exponent"] == 4


def test_out_dir_and_csv(tiny, tmp_path):
    out = tmp_path / "o"
    assert main(["growth", "--scenario", tiny, "--out", str(out), "--format", "csv"]) == 0
    assert (out / "growth.csv").read_text().splitlines()[0] == "radius,count,log_count,max_log_Dnorm"
    assert json.loads((out / "report.json").read_text())["scenario"]["experiments"] == ["growth"]
    assert "wall_clock_seconds" in json.loads((out / "timing.json").read_text())


def test_validation_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(dict(TINY, epsilon=-1)))
    assert main(["run", "--scenario", str(bad)]) == 2
    assert "epsilon must be positive" in capsys.readouterr().err
    assert main(["run", "--scenario", str(tmp_path / "missing.json")]) == 2
    assert main(["run"]) == 2
    assert main(["growth", "--scenario", str(bad), "--seed", "-4"]) == 2


def test_resource_cap_exit_code(tmp_path, capsys):
    doc = dict(TINY, generators=[
        {"name": "a", "kind": "rotation", "axis": [0, 0, 1], "angle": 1.2309594173407747},
        {"name": "b", "kind": "rotation", "axis": [1, 0, 0], "angle": 1.2309594173407747},
    ], experiments=["growth"], options={"element_cap": 50})
    p = tmp_path / "cap.json"
    p.write_text(json.dumps(doc))
    assert main(["run", "--scenario", str(p)]) == 3
    assert json.loads(capsys.readouterr().out)["truncated"] is True


def test_threads_env_fallback(tiny, monkeypatch, capsys):
    monkeypatch.setenv("BURNSIDE_LAB_THREADS", "3")
    assert main(["growth", "--scenario", tiny]) == 0
    first = capsys.readouterr().out
    monkeypatch.setenv("BURNSIDE_LAB_THREADS", "zero")
    assert main(["growth", "--scenario", tiny]) == 2
    assert "BURNSIDE_LAB_THREADS" in capsys.readouterr().err
    monkeypatch.delenv("BURNSIDE_LAB_THREADS")
    assert main(["growth", "--scenario", tiny, "--threads", "2"]) == 0
    assert capsys.readouterr().out == first


def test_repeat_runs_byte_identical(tiny, capsys):
    outs = []
    for threads in ("1", "4", "1"):
        assert main(["run", "--scenario", tiny, "--threads", threads]) == 0
        outs.append(capsys.readouterr().out)
    assert outs[0] == outs[1] == outs[2]


def test_lyapunov_overrides(capsys):
    assert main(["lyapunov", "--scenario", "linked-twists", "--steps", "200", "--start", "0,1,0"]) == 0
    block = json.loads(capsys.readouterr().out)["experiments"]["lyapunov"]
    assert block["steps"] == 200 and block["start"] == [0.0, 1.0, 0.0]


def test_recur_bad_triple(capsys):
    assert main(["recur", "--scenario", "cyclic4", "--triple", "1,0,0,1,0,0,0,0,1"]) == 2


def test_pesin_csv_stdout_with_summary(capsys):
    assert main(["pesin", "--scenario", "cyclic4", "--format", "csv"]) == 0
    cap = capsys.readouterr()
    assert cap.out.splitlines()[0] == "sample_index,x,y,z,m11,m12,m22"
    summary = json.loads(cap.err)
    assert set(summary) >= {"epsilon", "N", "max_dilatation_per_generator", "tail_slope"}


def test_multi_epsilon_csv_needs_out(capsys, tmp_path):
    assert main(["qc", "--scenario", "commuting-twists", "--format", "csv"]) == 2
    out = tmp_path / "qc"
    assert main(["qc", "--scenario", "commuting-twists", "--format", "csv", "--out", str(out)]) == 0
    assert (out / "qc_eps0.2.csv").exists() and (out / "qc_eps1_summary.json").exists()


def test_csv_without_table_falls_back_to_json(tiny, capsys):
    assert main(["order", "--scenario", tiny, "--format", "csv"]) == 0
    assert json.loads(capsys.readouterr().out)["experiments"]["order"]["exponent"] == 4
