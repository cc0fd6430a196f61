import csv
import json

import pytest

from conftest import TINY_MODEL, TINY_SIM
from navdistill.cli import main
from navdistill.simworld import DatasetManifest

TINY = {
    "sim": TINY_SIM.model_dump(mode="json"),
    "model": TINY_MODEL.model_dump(mode="json"),
    "teacher": {"steps": 3, "batch_size": 16},
    "pretrain": {"steps": 3, "batch_size": 16},
    "finetune": {"steps": 3, "batch_size": 16},
    "controller": {"time_budget": 3.0},
    "eval": {"trials": 2},
}


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "tiny.json").write_text(json.dumps(TINY))
    return d


def run(workdir, *argv):
    return main([*argv, "--config", str(workdir / "tiny.json")])


@pytest.fixture(scope="module")
def pipeline(workdir):
    d = workdir
    assert run(d, "gen-data", "--out", str(d / "ds"), "--episodes", "8", "--seed", "3") == 0
    assert run(d, "train-teacher", "--data", str(d / "ds"), "--out", str(d / "t.ckpt")) == 0
    assert run(d, "pretrain-student", "--data", str(d / "ds"), "--teacher", str(d / "t.ckpt"),
               "--out", str(d / "p.ckpt")) == 0
    assert run(d, "finetune-student", "--data", str(d / "ds"), "--ckpt", str(d / "p.ckpt"),
               "--out", str(d / "f.ckpt")) == 0
    return d


def test_gen_data_example(tmp_path):
    assert main(["gen-data", "--out", str(tmp_path / "ds"), "--episodes", "4", "--seed", "42"]) == 0
    m = DatasetManifest(tmp_path / "ds")
    assert len(m.episodes) == 4
    assert {e["split"] for e in m.episodes} <= {"train", "val", "test"}


def test_full_pipeline(pipeline, capsys):
    d = pipeline
    assert run(d, "finetune-student", "--data", str(d / "ds"), "--scratch", "--out", str(d / "bc.ckpt")) == 0
    assert run(d, "eval-offline", "--data", str(d / "ds"), "--ckpt", str(d / "f.ckpt"), "--ckpt", str(d / "bc.ckpt"),
               "--method", "ours", "--method", "bc", "--split", "train", "--report", str(d / "r.csv")) == 0
    rows = list(csv.DictReader((d / "r.csv").open()))
    assert {r["method"] for r in rows} == {"ours", "bc"}
    assert json.loads((d / "r.json").read_text())
    assert run(d, "eval-closedloop", "--ckpt", str(d / "f.ckpt"), "--scenario", "Crowd", "--out", str(d / "cl.csv")) == 0
    lines = (d / "cl.csv").read_text().splitlines()
    assert len(lines) == 1 + 2 + 1 and "/2" in lines[-1]
    assert run(d, "export-activations", "--ckpt", str(d / "f.ckpt"), "--data", str(d / "ds"), "--episode", "0",
               "--step", "5", "--out", str(d / "act")) == 0
    assert len(list((d / "act").glob("*.pgm"))) == 5
    assert (d / "act" / "attention.json").exists()


def test_scripted_closed_loop(workdir, capsys):
    assert run(workdir, "eval-closedloop", "--scripted", "zero", "--scenario", "FrontalApproach") == 0
    out = capsys.readouterr().out
    assert "0/2" in out


def test_teacher_checkpoint_refused_for_eval(pipeline, capsys):
    d = pipeline
    assert run(d, "eval-offline", "--data", str(d / "ds"), "--ckpt", str(d / "t.ckpt")) == 3
    assert "error" in capsys.readouterr().err


def test_missing_file_is_io_error(workdir):
    assert run(workdir, "train-teacher", "--data", str(workdir / "nope"), "--out", str(workdir / "x.ckpt")) == 2
    assert main(["train-teacher", "--data", "x", "--out", "y", "--config", str(workdir / "absent.json")]) == 2


def test_bad_config_is_usage_error(workdir, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"teacher": {"learning_rat": 1.0}}))
    assert main(["train-teacher", "--data", "x", "--out", "y", "--config", str(bad)]) == 1
    bad.write_text("{not json")
    assert main(["train-teacher", "--data", "x", "--out", "y", "--config", str(bad)]) == 1
    assert main(["train-teacher", "--bogus"]) == 1
    assert main(["gen-data", "--out", str(tmp_path / "z"), "--episodes", "0"]) == 1


def test_hash_mismatch_needs_force(pipeline, tmp_path):
    d = pipeline
    other = dict(TINY, model={**TINY["model"], "d_model": 8})
    (tmp_path / "other.json").write_text(json.dumps(other))
    args = ["pretrain-student", "--data", str(d / "ds"), "--teacher", str(d / "t.ckpt"), "--out", str(tmp_path / "p.ckpt"),
            "--config", str(tmp_path / "other.json")]
    assert main(args) == 3
    assert not (tmp_path / "p.ckpt").exists()


def test_dataset_mismatch_needs_force(pipeline, tmp_path):
    d = pipeline
    other = dict(TINY, sim={**TINY["sim"], "steps": 24})
    (tmp_path / "other.json").write_text(json.dumps(other))
    args = ["train-teacher", "--data", str(d / "ds"), "--out", str(tmp_path / "t.ckpt"), "--config", str(tmp_path / "other.json")]
    assert main(args) == 3
    assert main(args + ["--force"]) == 0
