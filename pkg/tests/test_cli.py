import csv
import io
import json
import subprocess
import sys

import pytest

from transeg.cli import main
from transeg.models import load_model, save_model
from transeg.fixtures import strict_two_label

GEN = ["--T", "3", "--vocab-size", "2", "--k", "1"]


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def model_file(tmp_path, capsys):
    path = tmp_path / "m.json"
    assert run(capsys, "generate", "--seed", "4", *GEN, "--out", str(path))[0] == 0
    return path


def test_verify_passes_on_generated_and_fixture_models(tmp_path, capsys, model_file):
    code, out, _ = run(capsys, "verify", "--model", str(model_file))
    assert code == 0 and json.loads(out)["passed"]
    m1 = tmp_path / "m1.json"
    save_model(strict_two_label(), m1)
    code, out, _ = run(capsys, "verify", "--model", str(m1))
    report = json.loads(out)
    assert code == 0 and {c["check"] for c in report["checks"]} >= {"normalization", "equivalence", "total_mass"}
    assert report["config"]["model"] == str(m1)


def test_verify_reports_corrupted_model(tmp_path, capsys, model_file):
    data = json.loads(model_file.read_text())
    row = data["rows"][0]["probs"]
    key = next(iter(row))
    row[key] = row[key] + 0.05
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(data))
    code, out, err = run(capsys, "verify", "--model", str(bad))
    assert code == 1
    assert "normalization" in err and "row sums to" in err
    assert not json.loads(out)["passed"]


def test_verify_reports_unparseable_file(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(capsys, "verify", "--model", str(bad))[0] == 1


def test_usage_error_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["decode"])
    assert exc.value.code == 2


def test_decode_auto_transform_note(capsys, model_file):
    code, out, _ = run(capsys, "decode", "--model", str(model_file), "--strategy", "label_sync_full")
    res = json.loads(out)
    assert code == 0
    assert res["metadata"]["transform"] == "transducer_to_segmental"
    assert "auto-wrapped" in res["metadata"]["note"]
    code, out, _ = run(capsys, "decode", "--model", str(model_file))
    same = json.loads(out)
    assert same["metadata"]["transform"] is None
    assert same["nbest"][0]["labels"] == res["nbest"][0]["labels"]
    assert same["nbest"][0]["score"] == pytest.approx(res["nbest"][0]["score"], abs=1e-10)
    assert "wall_ms" not in same["stats"] and "config" in same


def test_decode_is_byte_identical_on_rerun(capsys, model_file):
    argv = ["decode", "--model", str(model_file), "--q-prune", "2", "--nbest", "3"]
    assert run(capsys, *argv)[1] == run(capsys, *argv)[1]


def test_transform_materialized_and_lazy(tmp_path, capsys, model_file):
    mat, lazy = tmp_path / "seg.json", tmp_path / "view.json"
    assert run(capsys, "transform", "--input", str(model_file), "--direction", "t2s", "--out", str(mat))[0] == 0
    assert load_model(mat).kind == "segmental"
    assert run(capsys, "transform", "--input", str(model_file), "--direction", "t2s", "--no-materialize",
               "--out", str(lazy))[0] == 0
    assert json.loads(lazy.read_text())["kind"] == "view"
    results = []
    for path in (model_file, mat, lazy):
        code, out, _ = run(capsys, "decode", "--model", str(path), "--strategy", "label_sync_full")
        assert code == 0
        results.append(json.loads(out)["nbest"][0])
    assert len({tuple(r["labels"]) for r in results}) == 1
    assert max(r["score"] for r in results) - min(r["score"] for r in results) <= 1e-10
    assert run(capsys, "verify", "--model", str(mat))[0] == 0
    # wrong direction for the input kind
    assert run(capsys, "transform", "--input", str(model_file), "--direction", "s2t")[0] == 1


def test_compare(tmp_path, capsys, model_file):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    run(capsys, "decode", "--model", str(model_file), "--out", str(a))
    run(capsys, "decode", "--model", str(model_file), "--strategy", "label_sync_two_stage", "--out", str(b))
    code, out, _ = run(capsys, "compare", "--a", str(a), "--b", str(b))
    report = json.loads(out)["report"]
    assert code == 0 and report["same_trans_pct"] == 100.0 and report["same_score_pct"] == 100.0


def test_sweep_deterministic_and_seed_override(tmp_path, capsys, monkeypatch):
    argv = ["sweep", "--seed", "3", "--count", "4", *GEN, "--q-grid", "1,4"]
    c1, c2 = tmp_path / "1.csv", tmp_path / "2.csv"
    assert run(capsys, *argv, "--csv", str(c1), "--json", str(tmp_path / "1.json"))[0] == 0
    assert run(capsys, *argv, "--csv", str(c2))[0] == 0
    assert c1.read_bytes() == c2.read_bytes()
    lines = c1.read_text().splitlines()
    assert lines[0].startswith("grid_point,strategy,wer") and len(lines) == 1 + 2 * 3
    header = json.loads((tmp_path / "1.json").read_text())["header"]
    assert header["config"]["seed"] == 3
    monkeypatch.setenv("TRANSEG_SEED", "99")
    code, out, _ = run(capsys, *argv)
    assert code == 0 and out != c1.read_text()
    monkeypatch.setenv("TRANSEG_SEED", "3")
    assert run(capsys, *argv)[1] == c1.read_text()


def test_beam_grid_sweep(capsys):
    code, out, _ = run(capsys, "sweep", "--count", "3", *GEN, "--strategy-b", "label_sync_two_stage",
                       "--beam-grid", "1:1,4:2")
    assert code == 0
    names = [row[0] for row in list(csv.reader(io.StringIO(out)))[1:]]
    assert names == ["B=1,Bt=1"] * 2 + ["B=4,Bt=2"] * 2 + ["exhaustive"] * 2


def test_generate_many_and_lm(tmp_path, capsys):
    code, _, err = run(capsys, "generate", "--count", "3", "--kind", "segmental", *GEN, "--out", str(tmp_path))
    assert code == 0 and len(json.loads(err)["files"]) == 3
    assert load_model(tmp_path / "segmental_0002.json").kind == "segmental"
    code, out, _ = run(capsys, "generate", "--kind", "lm", "--vocab-size", "2")
    assert code == 0 and json.loads(out)["kind"] == "lm"


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "transeg.cli", "bogus"], capture_output=True, text=True)
    assert proc.returncode == 2
