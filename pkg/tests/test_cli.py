import csv
import hashlib
import io
import json
import subprocess
import sys

import pytest

import oracles
from fpuniq import anonymity_histogram, load_catalog
from fpuniq.cli import main
from fpuniq.dataset import select
from fpuniq.snapshot import load_snapshot


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def worked_snapshot(tmp_path, data_dir, capsys):
    snap = tmp_path / "w.uqfp"
    code, _, _ = run(capsys, "ingest", "--records", data_dir / "worked_records.jsonl",
                     "--catalog", data_dir / "worked_catalog.json", "--snapshot-out", snap)
    assert code == 0
    return snap, data_dir / "worked_catalog.json"


def test_ingest_cleaning_fixture(tmp_path, data_dir, capsys):
    snap = tmp_path / "c.uqfp"
    code, out, err = run(capsys, "ingest", "--records", data_dir / "cleaning_fixture.jsonl",
                         "--catalog", data_dir / "cleaning_catalog.json", "--snapshot-out", snap)
    assert code == 0 and "wrote snapshot" in err
    report = json.loads(out)
    assert report["initial_users"] == 7 and report["final_users"] == 1
    assert set(report["removed"].values()) == {1}
    ds = load_snapshot(snap, load_catalog(data_dir / "cleaning_catalog.json"))
    assert list(ds.user_ids) == ["clean"] and ds.row_counts.tolist() == [5]
    code, out, _ = run(capsys, "ingest", "--records", data_dir / "cleaning_fixture.jsonl", "--catalog",
                       data_dir / "cleaning_catalog.json", "--snapshot-out", snap, "--format", "csv")
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["rule", "users"] and rows[1] == ["initial users", "7"] and rows[-1] == ["final users", "1"]


def test_ingest_clean_input_and_errors(tmp_path, data_dir, capsys):
    code, out, _ = run(capsys, "ingest", "--records", data_dir / "worked_records.jsonl",
                       "--catalog", data_dir / "worked_catalog.json", "--snapshot-out", tmp_path / "s")
    assert code == 0 and sum(json.loads(out)["removed"].values()) == 0
    code, out, err = run(capsys, "ingest", "--records", data_dir / "worked_records.jsonl",
                         "--catalog", tmp_path / "missing.json", "--snapshot-out", tmp_path / "s")
    assert code == 1 and out == "" and err.startswith("error:")
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"user_id": "a"}\n{"user_id": "b", \n')
    code, _, err = run(capsys, "ingest", "--records", bad, "--catalog", data_dir / "worked_catalog.json",
                       "--snapshot-out", tmp_path / "s")
    assert code == 1 and "bad.jsonl:2" in err


def test_analyze_outputs(worked_snapshot, capsys, tmp_path):
    snap, cat = worked_snapshot
    code, out, err = run(capsys, "analyze", snap, "--catalog", cat, "--selector", "ext")
    assert code == 0 and "100.00%" in err
    report = json.loads(out)
    assert report["histogram"]["sizes"] == {"1": 6} and report["uniqueness"] == 1.0
    assert report["bins"][0] == ["1", 6]
    assert report["entropy"]["extensions"]["normalized"] == 1.0
    assert set(report["thresholds"]["extensions"]) == {"1", "2", "3", "4"}
    assert report["thresholds"]["extensions"]["4"] is None
    code, out, _ = run(capsys, "analyze", snap, "--catalog", cat, "--format", "csv", "--bins", "raw",
                       "--out", tmp_path / "plot.csv")
    assert code == 0 and out == ""
    assert (tmp_path / "plot.csv").read_text() == "bin,count\n1,6\n"


def test_analyze_empty_selection(worked_snapshot, capsys):
    snap, cat = worked_snapshot
    code, out, err = run(capsys, "analyze", snap, "--catalog", cat, "--selector", "log")
    assert code == 1 and "error" in err and out == ""


def test_analyze_json_roundtrip(worked_snapshot, capsys):
    snap, cat = worked_snapshot
    _, out, _ = run(capsys, "analyze", snap, "--catalog", cat)
    assert json.dumps(json.loads(out), indent=2) + "\n" == out


def test_attack_modes(worked_snapshot, capsys):
    snap, cat = worked_snapshot
    code, out, _ = run(capsys, "attack", snap, "--catalog", cat, "--mode", "targeted", "--user", "U5")
    report = json.loads(out)
    assert code == 0 and report["patterns"][0]["entries"] == [["A2", False], ["A3", True]]
    code, out, _ = run(capsys, "attack", snap, "--catalog", cat, "--mode", "targeted")
    summary = json.loads(out)["summary"]
    assert summary["unique"]["users"] == 6 and summary["non_unique"]["users"] == 0
    code, out, _ = run(capsys, "attack", snap, "--catalog", cat, "--mode", "general", "--tolerance", "0")
    report = json.loads(out)
    assert report["template"]["attributes"] == ["A3", "A2", "A1", "A4"] and report["final_uniqueness"] == 1.0
    code, out, _ = run(capsys, "attack", snap, "--catalog", cat, "--mode", "general", "--max-attributes", "1")
    assert json.loads(out)["template"] == {"attributes": ["A3"], "trace": [0.0]}
    code, _, err = run(capsys, "attack", snap, "--catalog", cat, "--mode", "targeted", "--user", "nobody")
    assert code == 1 and "nobody" in err
    code, _, err = run(capsys, "attack", snap, "--catalog", cat, "--mode", "general", "--tolerance", "1.5")
    assert code == 1


def test_attack_stable_only(tmp_path, capsys):
    cat = tmp_path / "cat.json"
    cat.write_text(json.dumps([
        {"id": "s1", "kind": "Extension", "detection": "WAR", "stability_months": [0, 1]},
        {"id": "u1", "kind": "Extension", "detection": "WAR", "stability_months": [1]},
        {"id": "s2", "kind": "Extension", "detection": "WAR", "stability_months": [0, 1]},
    ]))
    recs = tmp_path / "r.jsonl"
    rows = [("a", ["s1", "u1"]), ("b", ["u1"]), ("c", ["s2"]), ("d", ["s1", "s2"])]
    recs.write_text("".join(json.dumps({"user_id": u, "user_agent": "x", "screen_resolution": "x", "fonts": "x",
                                        "canvas_hash": "x", "detected_extensions": e}) + "\n" for u, e in rows))
    assert run(capsys, "ingest", "--records", recs, "--catalog", cat, "--snapshot-out", tmp_path / "s")[0] == 0
    code, out, _ = run(capsys, "attack", tmp_path / "s", "--catalog", cat, "--selector", "ext",
                       "--mode", "general", "--tolerance", "0", "--stable-only")
    report = json.loads(out)
    assert code == 0 and set(report["template"]["attributes"]) <= {"s1", "s2"}
    assert report["template"]["attributes"]


def test_tradeoff(worked_snapshot, capsys, tmp_path):
    snap, cat = worked_snapshot
    metrics = tmp_path / "m.json"
    metrics.write_text(json.dumps({"none": {"cookies": 12}, "A2+A3": {"cookies": 3}, "A2": {"cookies": 7.5}}))
    code, out, _ = run(capsys, "tradeoff", snap, "--catalog", cat, "--privacy", "A2,A3", "--metrics", metrics)
    rows = json.loads(out)["rows"]
    assert code == 0 and [r["key"] for r in rows] == ["none", "A2", "A3", "A2+A3"]
    assert rows[0]["metrics"] == {"cookies": 12} and "metrics" not in rows[2]
    assert rows[1]["uniqueness"] == pytest.approx(4 / 6)
    assert rows[3]["uniqueness"] == anonymity_histogram(select(load_snapshot(snap, load_catalog(cat)), "ext")).uniqueness
    code, out, _ = run(capsys, "tradeoff", snap, "--catalog", cat, "--privacy", "A2,A3", "--metrics", metrics,
                       "--format", "csv")
    assert out.splitlines()[0] == "combination,uniqueness,cookies" and out.splitlines()[3].endswith(",")
    code, _, err = run(capsys, "tradeoff", snap, "--catalog", cat, "--privacy", "A1,A2,A3,A4,A5,A6")
    assert code == 1 and "at most 5" in err
    code, _, _ = run(capsys, "tradeoff", snap, "--catalog", cat, "--privacy", "A9")
    assert code == 1


def test_simulate(tmp_path, data_dir, capsys):
    out_path, cat_path = tmp_path / "r.jsonl", tmp_path / "c.json"
    code, _, _ = run(capsys, "simulate", data_dir / "scenario.json", "--out", out_path, "--catalog-out", cat_path)
    assert code == 0
    assert out_path.read_text() == (data_dir / "scenario_records.jsonl").read_text()
    assert "linkedin" in load_catalog(cat_path)
    bad = tmp_path / "bad.json"
    bad.write_text("{nope")
    code, _, err = run(capsys, "simulate", bad)
    assert code == 1 and "bad.json" in err


def test_synth_reproducible(tmp_path, data_dir, capsys):
    golden = json.loads((data_dir / "synth_zipf_golden.json").read_text())
    code, out, _ = run(capsys, "synth", data_dir / "synth_zipf.json")
    assert code == 0 and hashlib.sha256(out.encode()).hexdigest() == golden["sha256"]
    _, again, _ = run(capsys, "synth", data_dir / "synth_zipf.json", "--seed", "42")
    assert again == out
    _, other, _ = run(capsys, "synth", data_dir / "synth_zipf.json", "--seed", "43")
    assert other != out


def test_csp_only_pipeline(tmp_path, capsys):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({
        "n_users": 400, "n_extensions": 20, "n_logins": 12, "n_csp_logins": 4,
        "mean_extensions_per_user": 2.0, "mean_logins_per_user": 3.0, "fraction_js_disabled": 1.0,
        "login_popularity": {"zipf": 0.3}, "seed": 5,
    }))
    recs, cat = tmp_path / "r.jsonl", tmp_path / "c.json"
    assert run(capsys, "synth", spec, "--out", recs, "--catalog-out", cat)[0] == 0
    assert run(capsys, "ingest", "--records", recs, "--catalog", cat, "--snapshot-out", tmp_path / "s")[0] == 0
    code, out, _ = run(capsys, "analyze", tmp_path / "s", "--catalog", cat, "--selector", "csp-only")
    assert code == 0
    report = json.loads(out)
    ds = select(load_snapshot(tmp_path / "s", load_catalog(cat)), "csp-only")
    assert ds.attribute_ids == ["login08", "login09", "login10", "login11"]
    want = oracles.histogram(ds.to_bool(), extra=ds.user_agents)
    assert {int(k): v for k, v in report["histogram"]["sizes"].items()} == want
    assert {int(k): v for k, v in report["csp_logins_only"]["sizes"].items()} == oracles.histogram(ds.to_bool())
    assert report["uniqueness"] >= report["csp_logins_only"]["uniqueness"]
    assert report["uniqueness"] >= report["user_agent_only"]["uniqueness"]


def test_both_and_refines_ext(tmp_path, capsys):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"n_users": 600, "n_extensions": 40, "n_logins": 10, "mean_extensions_per_user": 2.0,
                                "mean_logins_per_user": 1.5, "seed": 11}))
    recs, cat = tmp_path / "r.jsonl", tmp_path / "c.json"
    run(capsys, "synth", spec, "--out", recs, "--catalog-out", cat)
    run(capsys, "ingest", "--records", recs, "--catalog", cat, "--snapshot-out", tmp_path / "s")
    _, out, _ = run(capsys, "analyze", tmp_path / "s", "--catalog", cat, "--selector", "both-and")
    both = json.loads(out)
    ds = select(load_snapshot(tmp_path / "s", load_catalog(cat)), "both-and")
    ext_cols = [a for a in ds.attribute_ids if a.startswith("ext")]
    assert both["uniqueness"] >= anonymity_histogram(ds, ext_cols).uniqueness


def test_module_entry_point(data_dir):
    proc = subprocess.run([sys.executable, "-m", "fpuniq", "synth", str(data_dir / "synth_zipf.json"), "-q"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stderr == ""
    assert len(proc.stdout.splitlines()) == 1000
    proc = subprocess.run([sys.executable, "-m", "fpuniq", "analyze"], capture_output=True, text=True)
    assert proc.returncode != 0 and proc.stdout == ""
