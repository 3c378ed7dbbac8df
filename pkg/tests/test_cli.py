import csv
import json

import pytest

from mbtsim.harness.cli import EXIT_INPUT, EXIT_OK, EXIT_STRICT, main
from mbtsim.harness.config import ENV_VAR
from mbtsim.harness.formats import save_log, save_scenario
from mbtsim.irr import dumps_scores_csv, planted_panel
from mbtsim.simcore import EventLog

from helpers import reciprocal_pair


@pytest.fixture(autouse=True)
def _no_env_config(monkeypatch):
    monkeypatch.delenv(ENV_VAR, raising=False)


def run(*argv):
    return main([str(a) for a in argv])


def _pair_file(tmp_path, **kw):
    p = tmp_path / "pair.json"
    save_scenario(reciprocal_pair(duration=600.0, **kw), p)
    return p


def test_generate_simulate_is_byte_identical(tmp_path):
    sc = tmp_path / "sc.json"
    assert run("generate", "--pattern", "Crossing", "--n-aircraft", 3, "--seed", 3, "--out", sc) == EXIT_OK
    outs = []
    for i in range(2):
        out = tmp_path / f"run{i}.jsonl"
        assert run("simulate", "--scenario", sc, "--agent", "hawk", "--seed", 5, "--out", out) == EXIT_OK
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_wind_off_changes_the_run(tmp_path):
    sc = _pair_file(tmp_path, wind=(0.0, 30.0))
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    assert run("simulate", "--scenario", sc, "--agent", "null", "--out", a) == EXIT_OK
    assert run("simulate", "--scenario", sc, "--agent", "null", "--wind-off", "--out", b) == EXIT_OK
    assert a.read_bytes() != b.read_bytes()


def test_missing_and_malformed_inputs_exit_2(tmp_path, capsys):
    assert run("simulate", "--scenario", tmp_path / "nope.json", "--out", tmp_path / "o") == EXIT_INPUT
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert run("simulate", "--scenario", bad, "--out", tmp_path / "o") == EXIT_INPUT
    assert "error" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_bad_env_config_exits_2(tmp_path, monkeypatch):
    cfg = tmp_path / "cfg.json"
    cfg.write_text('{"minima": {"lateral_min": "x"}}')
    monkeypatch.setenv(ENV_VAR, str(cfg))
    assert run("simulate", "--scenario", _pair_file(tmp_path), "--out", tmp_path / "o") == EXIT_INPUT


def _plot(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_replay_plot_data(tmp_path):
    log = tmp_path / "r.jsonl"
    assert run("simulate", "--scenario", _pair_file(tmp_path), "--agent", "null", "--out", log) == EXIT_OK
    out = tmp_path / "plot.csv"
    assert run("replay", "--run", log, "--plot-data", out) == EXIT_OK
    rows = _plot(out)
    assert rows[0] == ["time_s", "callsign", "x_nm", "y_nm", "fl", "event"]
    assert {r[1] for r in rows[1:]} == {"AAA1", "BBB2"}
    los = [r for r in rows[1:] if r[5].startswith("LossOfSeparation")]
    assert {r[5] for r in los} == {"LossOfSeparation:BBB2:Reciprocal", "LossOfSeparation:AAA1:Reciprocal"}
    assert float(los[0][0]) == 300.0


def test_replay_of_empty_log_is_header_only(tmp_path):
    log = tmp_path / "empty.jsonl"
    save_log(EventLog({"scenario_id": "s", "agent": "null", "seed": 0, "dt": 5.0}, [], True), log)
    out = tmp_path / "plot.csv"
    assert run("replay", "--run", log, "--plot-data", out) == EXIT_OK
    assert out.read_text() == "time_s,callsign,x_nm,y_nm,fl,event\n"


def test_export_trace_then_fidelity(tmp_path):
    sc = _pair_file(tmp_path)
    log, tr, clr, summ = (tmp_path / n for n in ("r.jsonl", "t.csv", "c.json", "s.json"))
    assert run("simulate", "--scenario", sc, "--agent", "hawk", "--out", log) == EXIT_OK
    assert run("export-trace", "--run", log, "--trace", tr, "--clearances", clr) == EXIT_OK
    assert run("fidelity", "--reference", tr, "--clearances", clr, "--scenario", sc, "--summary", summ,
               "--strict") == EXIT_OK
    doc = json.loads(summ.read_text())
    assert doc["Aircraft in threshold (%)"] == 100.0
    assert doc["Horizontal error (NM)"] == {"Mean": 0.0, "SD": 0.0}
    assert doc["metadata"]["thresholds"] == {"horizontal_nm": 2.5, "vertical_fl": 5.0}
    # shift one aircraft 3 NM north: out of threshold, strict mode fails
    lines = tr.read_text().splitlines()
    shifted = [lines[0]]
    for ln in lines[1:]:
        t, cs, x, y, f = ln.split(",")
        shifted.append(",".join((t, cs, x, repr(float(y) + 3.0) if cs == "AAA1" else y, f)))
    tr.write_text("\n".join(shifted) + "\n")
    assert run("fidelity", "--reference", tr, "--clearances", clr, "--scenario", sc, "--summary", summ) == EXIT_OK
    assert json.loads(summ.read_text())["metadata"]["manual_review"] == ["AAA1"]
    assert run("fidelity", "--reference", tr, "--clearances", clr, "--scenario", sc, "--summary", summ,
               "--strict") == EXIT_STRICT
    tr.write_text("time_s,callsign,x_nm,y_nm,fl\n0,AAA1,zero,0,330\n")
    assert run("fidelity", "--reference", tr, "--clearances", clr, "--scenario", sc, "--summary", summ) == EXIT_INPUT


def test_irr_cli(tmp_path):
    scores = tmp_path / "g.csv"
    scores.write_text(dumps_scores_csv(planted_panel(sigma=0.9, seed=1)))
    reps = []
    for i in range(2):
        rep = tmp_path / f"irr{i}.json"
        assert run("irr", "--scores", scores, "--permutations", 500, "--seed", 2, "--report", rep) == EXIT_OK
        reps.append(rep.read_bytes())
    assert reps[0] == reps[1]
    assert json.loads(reps[0])["permutation"]["n_perm"] == 500
    rep = tmp_path / "x.json"
    assert run("irr", "--scores", scores, "--permutations", 50, "--report", rep) == EXIT_INPUT
    scores.write_text("scenario_id,rater_id,competency,grade,candidate_class\nS1,a,Safety,3,\nS2,a,Safety,2,\n")
    assert run("irr", "--scores", scores, "--report", rep) == EXIT_INPUT


def test_assess_needs_exactly_three_scenarios(tmp_path):
    suite = tmp_path / "suite"
    suite.mkdir()
    for i in range(2):
        save_scenario(reciprocal_pair(duration=1800.0, sid=f"s{i}"), suite / f"{i}.json")
    assert run("assess", "--agent", "hawk", "--suite", suite, "--report", tmp_path / "r.json") == EXIT_INPUT
    assert run("assess", "--agent", "hawk", "--suite", tmp_path / "none", "--report", tmp_path / "r.json") == EXIT_INPUT


def test_assess_is_byte_identical(tmp_path):
    suite = tmp_path / "suite"
    assert run("generate-suite", "--kind", "easy", "--seed", 0, "--out-dir", suite) == EXIT_OK
    assert len(list(suite.glob("*.json"))) == 3
    reps = []
    for i in range(2):
        rep = tmp_path / f"rep{i}" / "report.json"
        assert run("assess", "--agent", "hawk", "--suite", suite, "--seed", 1, "--report", rep) == EXIT_OK
        reps.append((rep.read_bytes(), rep.with_suffix(".md").read_bytes(),
                     sorted(p.read_bytes() for p in (rep.parent / "report_runs").iterdir())))
    assert reps[0] == reps[1]
    doc = json.loads(reps[0][0])
    assert doc["decision"]["overall"] in ("Pass", "Fail") and len(doc["runs"]) == 3
