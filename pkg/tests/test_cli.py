import csv
import io
import json

import pytest

from tdimv.cli import EXIT_BUDGET, EXIT_INVARIANT, EXIT_USAGE, main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def csv_rows(text):
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(lines))))


def test_build_reports(capsys):
    code, out, _ = run(capsys, "build", "--family", "parsell", "--d", "2", "--k", "2")
    assert code == 0
    assert "r=5 (closed-form 5) K=8 (closed-form 8)" in out
    code, out, _ = run(capsys, "build", "--family", "vinogradov", "--k", "3")
    assert code == 0 and "r=3 K=6" in out.splitlines()


def test_build_spec_file_and_out(capsys, tmp_path, monkeypatch):
    spec = tmp_path / "akc.spec"
    spec.write_text("dimension: 2\nseed: z1 z2\n")
    monkeypatch.setenv("TDIMV_OUTPUT_DIR", str(tmp_path / "outdir"))
    code, out, _ = run(capsys, "build", "--spec", str(spec), "--out", "sys.txt")
    assert code == 0 and out.strip() == "r=3 K=4"
    written = (tmp_path / "outdir" / "sys.txt").read_text()
    assert "form: z1 z2" in written


def test_build_malformed_spec(capsys, tmp_path):
    spec = tmp_path / "bad.spec"
    spec.write_text("dimension: 2\nseed: z1^^2\n")
    target = tmp_path / "never.txt"
    code, _, err = run(capsys, "build", "--spec", str(spec), "--out", str(target))
    assert code == EXIT_USAGE
    assert json.loads(err)["error"] == "input"
    assert "line 2" in json.loads(err)["reason"]
    assert not target.exists()


def test_count_example(capsys):
    code, out, _ = run(capsys, "count", "--family", "vinogradov", "--k", "2", "--s", "2", "--X", "10", "--check")
    assert code == 0
    assert out.startswith("# tdimv ")
    rows = csv_rows(out)
    assert len(rows) == 1 and rows[0]["J"] == "190" and rows[0]["s"] == "2"


def test_count_schedule_must_increase(capsys):
    code, _, err = run(capsys, "count", "--family", "vinogradov", "--k", "2", "--s", "2", "--X", "10,5")
    assert code == EXIT_USAGE


def test_iterate_zero_gamma(capsys):
    code, out, _ = run(capsys, "iterate", "--r", "2", "--k", "2", "--N", "5", "--policy", "zero")
    assert code == 0
    rows = csv_rows(out)
    assert len(rows) == 6
    assert all(r["gamma"] == "0/1" for r in rows)
    assert [r["b"] for r in rows] == ["1", "2", "4", "8", "16", "32"]


def test_iterate_list_policy(capsys):
    code, out, _ = run(capsys, "iterate", "--r", "2", "--k", "2", "--N", "3", "--policy", "list:1,0,2")
    assert code == 0
    rows = csv_rows(out)
    assert rows[1]["b"] == "3" and rows[1]["gamma"] == "7/1"


def test_iterate_random_needs_seed(capsys):
    code, _, err = run(capsys, "iterate", "--r", "2", "--k", "2", "--N", "3", "--policy", "random")
    assert code == EXIT_USAGE and json.loads(err)["error"] == "input"


def test_fit_slope(capsys):
    code, out, _ = run(capsys, "fit", "--family", "vinogradov", "--k", "2", "--s", "6", "--X", "8,16,32,64")
    assert code == 0
    payload = json.loads(out)
    assert 8.5 <= payload["slope"] <= 9.5
    assert "config" in payload


def test_budget_exit(capsys):
    code, _, err = run(capsys, "weyl", "scan", "--family", "vinogradov", "--k", "3", "--X", "10", "--grid", "200")
    assert code == EXIT_BUDGET
    assert json.loads(err)["error"] == "budget"


def test_invariant_exit(capsys, tmp_path):
    # a wrong expected value is an oracle mismatch
    man = {"instances": [{"label": "bad", "polys": ["z1^2 - 1"], "prime": 3, "level": 2, "expected": 1}]}
    path = tmp_path / "m.json"
    path.write_text(json.dumps(man))
    code, out, err = run(capsys, "congruence", "hensel", "--manifest", str(path))
    assert code == EXIT_INVARIANT
    assert json.loads(err)["error"] == "invariant"
    assert csv_rows(out)[0]["count"] == "2"


def test_classify(capsys):
    code, out, _ = run(capsys, "classify", "--family", "vinogradov", "--k", "2", "--solution", "1;5;6;2;3;7")
    assert code == 0
    payload = json.loads(out)
    assert "labels" in payload


def test_deterministic_and_thread_independent(capsys):
    args = ["count", "--family", "parsell", "--d", "2", "--k", "2", "--s", "1,2", "--X", "2,3"]
    outs = {run(capsys, *args, "--threads", str(t))[1] for t in (1, 4, 1)}
    assert len(outs) == 1
    other = run(capsys, "count", "--family", "parsell", "--d", "2", "--k", "2", "--s", "1,2", "--X", "2,4")[1]
    assert other.splitlines()[0] != outs.pop().splitlines()[0]
