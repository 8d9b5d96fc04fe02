import csv
import json
import os
import subprocess
import sys

import pytest

from slgbm.cli import main
from slgbm.experiments import CSV_COLUMNS, ExperimentSpec, SpecError, dumps_report, load_spec, run_experiment
from slgbm.plots import ReportParseError, emit_plots


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_moments_command(tmp_path, capsys):
    spec = tmp_path / "m.json"
    spec.write_text(json.dumps({"schema_version": 1, "command": "moments", "n": 3, "p": 2, "tau": [1.0],
                                "out": str(tmp_path / "out")}))
    assert main(["moments", "--spec", str(spec)]) == 0
    text = (tmp_path / "out" / "moments.csv").read_text()
    assert text.splitlines()[0] == ",".join(CSV_COLUMNS)
    rows = read_csv(tmp_path / "out" / "moments.csv")
    got = {r["p_or_partition"]: float(r["estimate"]) for r in rows}
    assert got["(1,1)"] == pytest.approx(93.0964, abs=5e-5)
    assert got["(2)"] == pytest.approx(76.7867, abs=5e-5)
    assert all(r["flag"] == "pass" for r in rows)
    # every number in the summary is in the CSV
    out = capsys.readouterr().out
    for r in rows:
        assert r["estimate"] in text and f"estimate={r['estimate']}" in out


def test_flags_override_spec(tmp_path):
    spec = tmp_path / "m.json"
    spec.write_text(json.dumps({"schema_version": 1, "command": "moments", "n": 3, "p": 2, "tau": [1.0]}))
    assert main(["moments", "--spec", str(spec), "--n", "2", "--out", str(tmp_path), "--format", "csv"]) == 0
    rows = read_csv(tmp_path / "moments.csv")
    assert {r["n"] for r in rows} == {"2"}
    assert not (tmp_path / "moments.json").exists()
    assert not [f for f in os.listdir(tmp_path) if f.startswith(".tmp-")]


def test_qvcheck_command(tmp_path):
    assert main(["qvcheck", "--n", "3", "--samples", "1000000", "--seed", "1", "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "qvcheck.csv")
    assert rows and all(r["flag"] == "pass" for r in rows)
    assert any(r["p_or_partition"] == "E tr d_sym^2 / dt" for r in rows)


def test_empty_horizon(tmp_path, capsys):
    assert main(["simulate", "--n", "3", "--tau", "0", "--out", str(tmp_path)]) == 2
    assert "empty horizon" in capsys.readouterr().err


def test_schema_errors_name_field_and_line(tmp_path):
    spec = tmp_path / "bad.json"
    spec.write_text('{\n  "schema_version": 1,\n  "command": "simulate",\n  "n": 3,\n  "paths": "many"\n}\n')
    with pytest.raises(SpecError, match=r"bad.json:5: field 'paths'"):
        load_spec(spec)
    spec.write_text('{\n  "schema_version": 1,\n  "command": "simulate",\n  "colour": 3\n}\n')
    with pytest.raises(SpecError, match=r":4: field 'colour'"):
        load_spec(spec)
    spec.write_text('{\n  "schema_version": 1,\n  "command": "simulate",\n  "n": 3,\n}\n')
    with pytest.raises(SpecError, match=r"bad.json:5: invalid JSON"):
        load_spec(spec)
    spec.write_text('{"command": "simulate"}')
    with pytest.raises(SpecError, match="field 'schema_version'"):
        load_spec(spec)


def test_simulate_json_round_trip(tmp_path):
    rep = run_experiment(ExperimentSpec("simulate", n=3, p=2, tau=(0.5, 1.0), dt=1e-2, paths=500, seed=2))
    text = rep.to_json()
    assert dumps_report(json.loads(text)) == text
    obj = json.loads(text)
    assert obj["provenance"]["seed"] == 2 and "wall_time_s" in obj["provenance"]
    assert "wall_time" not in rep.to_csv()
    assert len(obj["rows"]) == 2 * 3


_SCRIPT = """
import sys
from slgbm.experiments import ExperimentSpec, run_experiment
spec = ExperimentSpec("simulate", n=3, p=2, tau=(0.5, 1.0), dt=1e-2, paths=300, seed=5,
                      workers=int(sys.argv[1]))
sys.stdout.write(run_experiment(spec).to_csv())
"""


def test_csv_bytes_independent_of_workers():
    env = dict(os.environ, NUMBA_NUM_THREADS="8", PYTHONWARNINGS="ignore")
    outs = [subprocess.run([sys.executable, "-c", _SCRIPT, w], env=env, capture_output=True,
                           check=True).stdout for w in ("1", "8")]
    assert outs[0] == outs[1] and len(outs[0]) > 100


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "slgbm", "pde", "--n", "3", "--tau", "10", "--out", str(tmp_path)],
                       capture_output=True, text=True, env=dict(os.environ, PYTHONWARNINGS="ignore"))
    assert r.returncode == 0, r.stderr
    rows = read_csv(tmp_path / "pde.csv")
    z = [r for r in rows if r["p_or_partition"] == "zeta_origin"][0]
    assert float(z["estimate"]) <= 0.5 and z["flag"] == "pass"


def test_moment_plots(tmp_path):
    rep = run_experiment(ExperimentSpec("moments", n=3, p=3, tau=(0.0, 2.0)))
    obj = json.loads(rep.to_json())
    files = emit_plots(obj, str(tmp_path / "a"))
    assert [os.path.basename(f) for f in files] == ["moments_p1.svg", "moments_p2.svg", "moments_p3.svg"]
    svg = open(files[1]).read()
    assert svg.count('id="line2d_') >= 4  # two bounds and two exact curves (plus ticks)
    again = emit_plots(obj, str(tmp_path / "b"))
    for f, g in zip(files, again):
        assert open(f, "rb").read() == open(g, "rb").read()


def test_nontight_single_point_plot(tmp_path):
    obj = {"command": "nontight", "series": {"nontight": {"tau_star": [20.0], "estimate": [0.4], "stderr": [0.02]}}}
    files = emit_plots(obj, str(tmp_path))
    assert len(files) == 1 and "1/2" in open(files[0]).read()


def test_malformed_reports(tmp_path):
    obj = {"command": "moments", "series": {"moments": [{"p": 1, "tau": [0, 1]}]}}
    with pytest.raises(ReportParseError, match=r"series.moments\[0\]"):
        emit_plots(obj, str(tmp_path))
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ReportParseError):
        emit_plots(str(bad), str(tmp_path))
    with pytest.warns(UserWarning):
        assert emit_plots({"command": "pde", "series": {}}, str(tmp_path)) == []


def test_report_command(tmp_path):
    assert main(["nontight", "--n", "3", "--tau", "2", "--dt", "0.01", "--paths", "1000",
                 "--out", str(tmp_path)]) == 0
    assert main(["report", "--input", str(tmp_path / "nontight.json"), "--out", str(tmp_path / "p")]) == 0
    assert sorted(os.listdir(tmp_path / "p")) == ["log_norm_histogram.svg", "nontightness.svg"]
    assert main(["report", "--out", str(tmp_path)]) == 2
