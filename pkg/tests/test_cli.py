import json
import subprocess
import sys

import pytest

from conftest import CORPUS
from findex.cli import main
from findex.scenario import load_scenario

EX1 = str(CORPUS / "ex1.json")


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_check_ex1(capsys):
    code, out, _ = run(["check", "--input", EX1], capsys)
    doc = json.loads(out)
    assert code == 0
    assert doc["status"] == "pass" and doc["command"] == "check"
    assert {a["name"] for a in doc["axioms"]} >= {"positive", "faithful", "idempotent"}


def test_constants_ex1(capsys):
    code, out, _ = run(["constants", "--input", EX1, "--restarts", "8"], capsys)
    doc = json.loads(out)
    assert code == 0
    assert float(doc["K"]["value"]) == pytest.approx(2)
    assert float(doc["L"]["value"]) == pytest.approx(4)
    assert doc["floor_K"] == 2


def test_constants_infinite(capsys):
    code, out, _ = run(["constants", "--input", str(CORPUS / "infinite-demo.json"),
                        "--restarts", "4"], capsys)
    assert code == 0
    assert json.loads(out)["status"] == "infinite-index"


def test_index_tensor(capsys):
    code, out, _ = run(["index", "--input", str(CORPUS / "tensor-h1-k3.json")], capsys)
    doc = json.loads(out)
    assert code == 0
    assert float(doc["norm"]) == pytest.approx(31 / 3)
    assert doc["is_central"]


def test_tower_writes_file(tmp_path, capsys):
    out = tmp_path / "tower.json"
    code, _, _ = run(["tower", "--input", EX1, "--levels", "2", "--out", str(out)], capsys)
    doc = json.loads(out.read_text())
    assert code == 0
    assert [lv["shape"] for lv in doc["levels"]] == ["M2", "M4", "M8"]
    assert not doc["truncated"]


def test_tower_budget_truncates(capsys):
    code, out, _ = run(["tower", "--input", EX1, "--levels", "3", "--dim-budget", "10"], capsys)
    doc = json.loads(out)
    assert code == 0 and doc["truncated"]
    assert "ambient dimension" in doc["truncation_reason"]


def test_suite_expected_counterexample_passes(capsys):
    code, out, _ = run(["suite", "--input", str(CORPUS / "elambda-1_2.25.json"),
                        "--checks", "sandwich,floor_k_squared", "--restarts", "8"], capsys)
    assert code == 0
    assert json.loads(out)["failed"] == []


def test_suite_reports_failure_exit_one(tmp_path, capsys):
    d = json.loads((CORPUS / "elambda-1_2.25.json").read_text())
    d.pop("expect_counterexample")
    f = tmp_path / "broken.json"
    f.write_text(json.dumps(d))
    code, out, _ = run(["suite", "--input", str(f), "--checks", "floor_k_squared",
                        "--restarts", "8"], capsys)
    assert code == 1
    assert json.loads(out)["failed"] == [d["name"]]


def test_parse_error_exit_two(tmp_path, capsys):
    f = tmp_path / "bad.json"
    f.write_text('{"schema_version": "1",\n "name": 3,\n')
    code, _, err = run(["check", "--input", str(f)], capsys)
    assert code == 2 and "line" in err


def test_unitality_error_exit_two(tmp_path, capsys):
    d = json.loads((CORPUS / "ex1.json").read_text())
    d["embedding"]["inclusion_matrix"] = [[1]]
    f = tmp_path / "nonunital.json"
    f.write_text(json.dumps(d))
    code, _, err = run(["check", "--input", str(f)], capsys)
    assert code == 2 and "A-block 0" in err


def test_missing_input_and_unknown_check(capsys):
    assert run(["check"], capsys)[0] == 2
    assert run(["check", "--input", "/nonexistent/x.json"], capsys)[0] == 2
    with pytest.raises(SystemExit) as info:
        main(["suite", "--input", EX1, "--checks", "sandwich,nope"])
    assert info.value.code == 2


def test_gen_directory_round_trips(tmp_path, capsys):
    code, _, _ = run(["gen", "--count", "3", "--seed", "10", "--out", str(tmp_path)], capsys)
    assert code == 0
    names = sorted(p.name for p in tmp_path.glob("*.json"))
    assert names == ["random-10.json", "random-11.json", "random-12.json"]
    sc = load_scenario(tmp_path / "random-11.json")
    assert sc.to_json() == (tmp_path / "random-11.json").read_text()


def test_gen_single_to_stdout(capsys):
    code, out, _ = run(["gen", "--seed", "4", "--max-block-dim", "1"], capsys)
    assert code == 0
    assert json.loads(out)["name"] == "random-4"


def test_console_script_is_installed():
    r = subprocess.run([sys.executable, "-m", "findex.cli", "check", "--input", EX1],
                       capture_output=True, text=True)
    assert r.returncode == 0
    assert json.loads(r.stdout)["status"] == "pass"


def test_suite_parallel_matches_serial(tmp_path, capsys):
    args = ["suite", "--input", str(CORPUS / "ex1.json"), "--input",
            str(CORPUS / "elambda-0.5.json"), "--checks", "sandwich,kadison",
            "--restarts", "4", "--samples", "20"]
    serial = json.loads(run(args + ["--jobs", "1"], capsys)[1])
    parallel = json.loads(run(args + ["--jobs", "2"], capsys)[1])
    for doc in (serial, parallel):
        doc.pop("timestamp")
    assert serial == parallel
    assert [r["scenario"] for r in serial["reports"]] == ["elambda-0.5", "ex1"]
