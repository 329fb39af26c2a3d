import json
import subprocess
import sys
from pathlib import Path

import pytest

from nseb.cli import main

DATA = Path(__file__).parent / "data"


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_extract_matches_golden(tmp_path, capsys):
    out, stats = tmp_path / "o.txt", tmp_path / "s.json"
    code, _, _ = run(["extract", "--config", str(DATA / "extract_config.json"), "--out", str(out),
                      "--stats", str(stats)], capsys)
    assert code == 0
    assert out.read_bytes() == (DATA / "golden_extract.txt").read_bytes()
    assert stats.read_bytes() == (DATA / "golden_extract_stats.json").read_bytes()


def test_simulate_matches_golden(tmp_path, capsys):
    out = tmp_path / "x.txt"
    code, _, _ = run(["simulate", "--schedule", "preset:skewed4-table", "--from", "-100", "--to", "99",
                      "--seed", "3", "--out", str(out)], capsys)
    assert code == 0 and out.read_bytes() == (DATA / "golden_simulate.txt").read_bytes()


def test_flags_override_config(tmp_path, capsys):
    code, out, _ = run(["inspect", "--config", str(DATA / "extract_config.json"), "--from", "0", "--to", "40"],
                       capsys)
    assert code == 0
    assert out.splitlines()[-42].startswith("0\t")


def test_extract_fair_decay_k16_reports_infeasible_plan(capsys):
    code, out, err = run(["extract", "--schedule", str(DATA / "fair_decay.json"), "--k", "16", "--eps", "0.25",
                          "--from", "0", "--to", "100000", "--seed", "7"], capsys)
    assert code == 0
    lines = out.splitlines()
    assert len(lines) == 100_001 and lines[0] == "0\t-\t-"
    stats = json.loads(err)
    assert stats["plan"]["j"] == 0 and "no whole bit" in stats["plan"]["reason"]


def test_kakutani_verdict(capsys):
    code, out, _ = run(["kakutani", "--a", str(DATA / "fair_decay.json"), "--b", "preset:fair-coin",
                        "--N", "100000"], capsys)
    assert code == 0 and json.loads(out)["verdict"] == "singular"
    code, out, _ = run(["kakutani", "--a", str(DATA / "fair_decay_fast.json"), "--b", "preset:fair-coin"], capsys)
    assert json.loads(out)["verdict"] == "equivalent"


def test_codebook_record(capsys):
    code, out, _ = run(["codebook", "--schedule", "preset:fair-coin", "--k", "8", "--eps", "0.5"], capsys)
    rec = json.loads(out)
    assert code == 0 and rec["codebook"]["B_size"] == 16 and rec["plan"]["feasible"] is False


def test_analyze_and_ceiling(tmp_path, capsys):
    stream = tmp_path / "x.txt"
    run(["simulate", "--schedule", "preset:skewed4", "--from", "0", "--to", "199999", "--seed", "1",
         "--out", str(stream)], capsys)
    code, out, _ = run(["analyze", "--input", str(stream), "--L", "2", "--ceiling-p", "0.6", "0.2", "0.1", "0.1"],
                       capsys)
    rec = json.loads(out)
    assert code == 0 and rec["ceiling"]["passed"]
    code, out, _ = run(["analyze", "--input", str(stream), "--L", "2", "--ceiling-p", "0.97", "0.01", "0.01",
                        "0.01"], capsys)
    assert code == 1 and not json.loads(out)["ceiling"]["passed"]


def test_dissipativity_record(capsys):
    code, out, _ = run(["dissipativity", "--schedule", "preset:dissipative", "--N", "50", "--K", "500",
                        "--fit-lo", "10", "--fit-hi", "50"], capsys)
    rec = json.loads(out)
    assert code == 0 and rec["truncation_K"] == 500 and rec["loglog_slope"] < 0


def test_inspect_pipeline_text(capsys):
    code, out, _ = run(["inspect", "--schedule", "preset:skewed4-power-decay", "--from", "0", "--to", "60",
                        "--seed", "3", "--k", "2"], capsys)
    assert code == 0 and out.startswith("# k=2 determined_from=9 markers=[5, 42]")


@pytest.mark.parametrize("content,fragment", [
    ('{"k": 9,\n "eps": 0.5, "colour": 3}', "line 2, column 14: unknown key 'colour'"),
    ('{"k": 9,\n "eps": 0.5 "delta": 3}', "line 2, column 13: Expecting ',' delimiter"),
    ('{"k": "9"}', "line 1, column 2: bad value for 'k'"),
    ('[1, 2]', "must be a JSON object"),
])
def test_config_errors_exit_2(tmp_path, capsys, content, fragment):
    cfg = tmp_path / "c.json"
    cfg.write_text(content)
    code, _, err = run(["codebook", "--schedule", "preset:skewed4", "--config", str(cfg)], capsys)
    assert code == 2 and fragment in err and str(cfg) in err


@pytest.mark.parametrize("argv,fragment", [
    (["frob"], "invalid choice"),
    ([], ""),
    (["codebook", "--schedule", "preset:fair-coin", "--k", "10", "--eps", "0.25"], "252 words"),
    (["codebook", "--schedule", "preset:nope", "--k", "8", "--eps", "0.5"], "unknown preset"),
    (["codebook", "--k", "8", "--eps", "0.5"], "--schedule is required"),
    (["simulate", "--schedule", "missing.json"], "cannot read"),
    (["kakutani", "--a", "preset:fair-coin", "--b", "preset:skewed4"], "different"),
])
def test_usage_errors_exit_2(capsys, argv, fragment):
    code, _, err = run(argv, capsys)
    assert code == 2 and fragment in err


def test_bad_schedule_file_reports_position(tmp_path, capsys):
    s = tmp_path / "s.json"
    s.write_text('{"alphabet": [0, 1],\n "kind": "stationary", "p": [0.5, 0.5], "colour": 1}')
    code, _, err = run(["simulate", "--schedule", str(s)], capsys)
    assert code == 2 and "line 2, column 41" in err and str(s) in err


def test_verify_subset(capsys):
    code, out, _ = run(["verify", "--suite", "desk", "--only", "6"], capsys)
    assert code == 0 and out.startswith("[PASS]  6") and "1/1 criteria passed" in out


def test_verify_failure_exit_code(capsys):
    code, out, _ = run(["verify", "--only", "1"], capsys)
    assert code == 1 and out.startswith("[FAIL]  1")


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "nseb", "codebook", "--schedule", "preset:fair-coin", "--k", "8",
                        "--eps", "0.5"], capture_output=True, text=True, check=False)
    assert r.returncode == 0 and json.loads(r.stdout)["codebook"]["k"] == 8


def test_binary_streams(tmp_path, capsys):
    raw = tmp_path / "x.bin"
    run(["extract", "--config", str(DATA / "extract_config.json"), "--format", "binary", "--out", str(raw)], capsys)
    data = raw.read_bytes()
    assert len(data) == 8000 and sum(b != 0xFF for b in data) == 180
