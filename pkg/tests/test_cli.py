"""End-to-end commands: synth, preprocess, train, eval, report and ablate."""

import json

import pytest
import yaml

from conftest import toy_config
from jrrelp import cli
from jrrelp.cli import main
from jrrelp.schemas.config import TrainConfig
from jrrelp.storage.artifact_store import compute_file_sha256


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    spec = {
        "num_entity_types": 3,
        "num_relations": 2,
        "templates_per_relation": 2,
        "train_size": 40,
        "dev_size": 10,
        "test_size": 10,
    }
    (root / "synth.yaml").write_text(yaml.safe_dump(spec), encoding="utf-8")
    (root / "config.yaml").write_text(toy_config(epochs=1).to_yaml(), encoding="utf-8")

    assert main(["synth", "--spec", str(root / "synth.yaml"), "--seed", "2", "--out", str(root / "raw")]) == 0
    assert main([
        "preprocess",
        "--input", str(root / "raw" / "train.json"),
        "--dev", str(root / "raw" / "dev.json"),
        "--test", str(root / "raw" / "test.json"),
        "--out", str(root / "data"),
    ]) == 0
    return root


def test_print_config(capsys):
    assert main(["--print-config"]) == 0
    config = TrainConfig.model_validate(yaml.safe_load(capsys.readouterr().out))
    assert config == TrainConfig()


def test_no_command_prints_help(capsys):
    assert main([]) == 2
    assert "usage" in capsys.readouterr().out


def test_synth_and_preprocess_write_manifests(workspace):
    for name in ("raw", "data"):
        manifest = json.loads((workspace / name / "manifest.json").read_text(encoding="utf-8"))
        assert set(manifest["dataset_hashes"]) == {"train", "dev", "test"}
    assert (workspace / "data" / "vocab.json").exists()
    assert (workspace / "data" / "answer_sets.json").exists()


def test_train_eval_report(workspace, capsys):
    run = workspace / "run-a"
    assert main([
        "train", "--config", str(workspace / "config.yaml"), "--data", str(workspace / "data"),
        "--out", str(run), "--ablation", "no_coupling",
    ]) == 0
    assert "P/R/F1" in capsys.readouterr().out
    for name in ("config.yaml", "steps.jsonl", "checkpoint.pt", "history.json", "metrics.json", "manifest.json"):
        assert (run / name).exists(), name
    metrics = json.loads((run / "metrics.json").read_text(encoding="utf-8"))
    assert metrics["arm"] == "no_coupling"
    assert metrics["seed"] == 13

    assert main(["eval", "--checkpoint", str(run / "checkpoint.pt"), "--data", str(workspace / "data"),
                 "--split", "test"]) == 0
    scores = json.loads(capsys.readouterr().out)
    assert scores["micro"]["f1"] == pytest.approx(metrics["test"]["f1"])
    assert scores["macro"]["averaging"] == "macro"

    assert main(["report", "--runs", str(run), "--out", str(workspace / "report")]) == 0
    lines = (workspace / "report" / "report.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "Run,Arm,Seed,Precision,Recall,F1"
    assert lines[1].startswith("run-a,no_coupling,13,")
    curves = (workspace / "report" / "loss_curves.csv").read_text(encoding="utf-8").splitlines()
    assert len(curves) == 2


def test_ablate_local(workspace, capsys):
    out = workspace / "ablation"
    assert main([
        "ablate", "--config", str(workspace / "config.yaml"), "--data", str(workspace / "data"),
        "--seeds", "0", "--out", str(out), "--dispatch", "local",
    ]) == 0
    table = json.loads((out / "ablation.json").read_text(encoding="utf-8"))
    assert [r["arm"] for r in table["results"]] == ["full", "no_coupling", "no_kglp", "baseline"]
    assert (out / "medians.csv").read_text(encoding="utf-8").startswith("Arm,Precision,Recall,F1")
    assert "baseline" in capsys.readouterr().out


def test_missing_data_dir_exits_with_artifact_code(tmp_path, capsys):
    code = main(["train", "--data", str(tmp_path / "nowhere"), "--out", str(tmp_path / "run")])
    assert code == 4
    error = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert error["error"] == "ArtifactError"


def test_invalid_config_exits_with_lab_code(tmp_path, workspace, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("trainer:\n  epochs: 0\n", encoding="utf-8")
    code = main(["train", "--config", str(bad), "--data", str(workspace / "data"), "--out", str(tmp_path / "run")])
    assert code == 2
    error = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert error["error"] == "ConfigurationError"
    assert error["field"] == "trainer.epochs"


def test_bad_seed_list(tmp_path, workspace, capsys):
    code = main(["ablate", "--data", str(workspace / "data"), "--seeds", "1,x", "--out", str(tmp_path / "a")])
    assert code == 2


def test_preprocess_manifest_records_inputs_and_data_config(workspace):
    manifest = json.loads((workspace / "data" / "manifest.json").read_text(encoding="utf-8"))
    assert set(manifest["inputs"]) == {"train", "dev", "test"}
    train_input = workspace / "raw" / "train.json"
    assert manifest["inputs"]["train"]["uri"] == str(train_input.resolve())
    assert manifest["inputs"]["train"]["sha256"] == compute_file_sha256(train_input)
    assert manifest["params"]["format"] == "tacred-json"
    assert manifest["params"]["data"] == TrainConfig().data.model_dump(mode="json")


def _train_run(workspace, out):
    assert main([
        "train", "--config", str(workspace / "config.yaml"), "--data", str(workspace / "data"), "--out", str(out),
    ]) == 0


def test_eval_rejects_a_different_config(workspace, tmp_path, capsys):
    run = tmp_path / "run"
    _train_run(workspace, run)
    other = tmp_path / "other.yaml"
    other.write_text(toy_config(epochs=2).to_yaml(), encoding="utf-8")
    capsys.readouterr()

    code = main(["eval", "--checkpoint", str(run / "checkpoint.pt"), "--data", str(workspace / "data"),
                 "--config", str(other)])
    assert code == 4
    error = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert error["error"] == "ArtifactError"
    assert "config" in error["message"]


def test_eval_rejects_an_edited_config_beside_the_checkpoint(workspace, tmp_path, capsys):
    run = tmp_path / "run"
    _train_run(workspace, run)
    (run / "config.yaml").write_text(toy_config(epochs=5).to_yaml(), encoding="utf-8")
    capsys.readouterr()

    code = main(["eval", "--checkpoint", str(run / "checkpoint.pt"), "--data", str(workspace / "data")])
    assert code == 4


def test_unexpected_error_is_reported_as_json(monkeypatch, workspace, tmp_path, capsys):
    def broken(_data_dir):
        raise RuntimeError("vocabulary index out of sync")

    monkeypatch.setattr(cli, "read_prepared_corpus", broken)
    code = main(["train", "--data", str(workspace / "data"), "--out", str(tmp_path / "run")])
    assert code == 2
    error = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert error == {
        "error": "UnexpectedError",
        "kind": "internal",
        "message": "vocabulary index out of sync",
        "cause": "RuntimeError",
    }


def test_os_error_maps_to_io_exit_code(monkeypatch, workspace, tmp_path, capsys):
    def unreadable(data_dir):
        raise PermissionError(13, "Permission denied", str(data_dir))

    monkeypatch.setattr(cli, "read_prepared_corpus", unreadable)
    code = main(["train", "--data", str(workspace / "data"), "--out", str(tmp_path / "run")])
    assert code == 4
    error = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert error["kind"] == "io"
    assert error["cause"] == "PermissionError"
    assert error["path"] == str(workspace / "data")
