import json
import math

import pytest

from ctaf_goalcast.cli import main


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["simulate", "--seed", "7", "--n-flights", "6", "--out", str(root / "data")]) == 0
    assert main(["train", "--data", str(root / "data"), "--epochs", "50", "--seed", "7", "--out", str(root / "model")]) == 0
    return root


def test_wer_identical_files(tmp_path, capsys):
    (tmp_path / "ref.txt").write_text("left downwind runway eight\ncherokee one three five papa lima\n")
    code, out, _ = run(capsys, "wer", tmp_path / "ref.txt", tmp_path / "ref.txt")
    assert code == 0 and out.strip() == "0.0"


def test_wer_mismatched_lines(tmp_path, capsys):
    (tmp_path / "a.txt").write_text("one\ntwo\n")
    (tmp_path / "b.txt").write_text("one\n")
    code, _, err = run(capsys, "wer", tmp_path / "a.txt", tmp_path / "b.txt")
    assert code == 4 and err.startswith("error code=4 kind=input_invalid")


def test_eval_missing_checkpoint(tmp_path, capsys, pipeline):
    code, _, err = run(capsys, "eval", "--model", tmp_path / "nope.ckpt", "--data", pipeline / "data", "--out", tmp_path / "ev")
    assert code == 3 and "kind=input_missing" in err
    assert not (tmp_path / "ev" / "report.json").exists()


def test_unknown_flag_is_usage_error(capsys):
    code, _, err = run(capsys, "simulate", "--out", "x", "--bogus")
    assert code == 2 and "kind=usage" in err


def test_config_schema_mismatch(tmp_path, capsys):
    (tmp_path / "sim.cfg").write_text("schema=9\nn_flights=2\n")
    code, _, err = run(capsys, "simulate", "--config", tmp_path / "sim.cfg", "--out", tmp_path / "o")
    assert code == 5 and "kind=schema_mismatch" in err


def test_smoke_pipeline(tmp_path, capsys, pipeline):
    code, out, _ = run(capsys, "eval", "--model", pipeline / "model" / "model.ckpt", "--data", pipeline / "data",
                       "--seed", "7", "--out", tmp_path / "ev")
    assert code == 0
    report = json.loads((tmp_path / "ev" / "report.json").read_text())
    assert math.isfinite(report["mean"]) and report["n_scenes"] > 0
    manifest = json.loads((tmp_path / "ev" / "manifest.json").read_text())
    assert manifest["command"] == "eval" and manifest["seeds"] == {"eval": 7}
    train_manifest = json.loads((pipeline / "model" / "manifest.json").read_text())
    assert train_manifest["config"]["train"]["epochs"] == 50


def test_parse_and_context(tmp_path, capsys, pipeline):
    d = pipeline / "data"
    code, out, _ = run(capsys, "parse", "--calls", d / "calls.jsonl", "--directory", d / "directory.txt",
                       "--tracks", d / "tracks.csv", "--out", tmp_path / "labels.csv")
    assert code == 0 and "intent_label_accuracy=" in out
    assert (tmp_path / "labels.csv.manifest.json").exists()
    code, out, _ = run(capsys, "context", "--directory", d / "directory.txt", "--tracks", d / "tracks.csv", "--time", "60")
    assert code == 0 and "Location - " in out


def test_ablate_and_sweep(tmp_path, capsys, pipeline):
    ckpt, data = pipeline / "model" / "model.ckpt", pipeline / "data"
    code, out, _ = run(capsys, "ablate", "pfi", "--model", ckpt, "--data", data, "--reps", "3", "--out", tmp_path / "pfi")
    assert code == 0 and out.startswith("PFI:")
    code, _, _ = run(capsys, "sweep", "call_age_bucket", "--values", "0-600", "--model", ckpt, "--data", data,
                     "--format", "svg", "--out", tmp_path / "sw")
    assert code == 0
    assert (tmp_path / "sw" / "curve_call_age_bucket_model.csv").read_text().startswith("value,mean_fde,q25,q75")
    assert (tmp_path / "sw" / "curve_call_age_bucket.svg").exists()
    code, _, err = run(capsys, "ablate", "pfi", "--data", data, "--out", tmp_path / "x")
    assert code == 2
