"""End-to-end command-line flows on a small generated dataset."""

import json

import numpy as np
import pytest

from jmmfr.cli import main
from jmmfr.synth import read_manifest

SMALL_GEN = {
    "n_members": 60,
    "n_jobs": 90,
    "n_edges": 250,
    "skill_dim": 30,
    "industry_dim": 8,
    "n_titles": 6,
    "n_clusters": 3,
    "seed": 0,
}

FAST_TRAIN = {
    "encoder": "mlp",
    "epochs": 2,
    "proj_dim": 6,
    "channel_dim": 4,
    "decoder_hidden": 4,
}


@pytest.fixture()
def dataset(tmp_path):
    cfg = tmp_path / "gen.json"
    cfg.write_text(json.dumps(SMALL_GEN))
    out = tmp_path / "data"
    assert main(["generate", "--config", str(cfg), "--out-dir", str(out)]) == 0
    return out


def run_train(dataset, tmp_path, name="run", **overrides):
    cfg = dict(FAST_TRAIN)
    cfg.update(overrides)
    cfg_path = tmp_path / f"{name}.json"
    cfg_path.write_text(json.dumps(cfg))
    out = tmp_path / name
    code = main(["train", "--data-dir", str(dataset),
                 "--config", str(cfg_path), "--out", str(out)])
    return code, out


def test_generate_writes_dataset(dataset):
    nodes = (dataset / "nodes.jsonl").read_text().strip().split("\n")
    edges = (dataset / "edges.jsonl").read_text().strip().split("\n")
    assert len(nodes) == SMALL_GEN["n_members"] + SMALL_GEN["n_jobs"]
    assert len(edges) == SMALL_GEN["n_edges"]
    manifest = read_manifest(dataset / "manifest.json")
    assert manifest.skill_dim == 30
    assert manifest.n_members == 60


def test_generate_seed_flag_beats_config(tmp_path):
    cfg = tmp_path / "gen.json"
    cfg.write_text(json.dumps(SMALL_GEN))
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["generate", "--config", str(cfg), "--out-dir", str(a)]) == 0
    assert main(["generate", "--config", str(cfg), "--out-dir", str(b),
                 "--seed", "7"]) == 0
    assert read_manifest(b / "manifest.json").seed == 7
    assert (a / "edges.jsonl").read_text() != (b / "edges.jsonl").read_text()


def test_train_writes_checkpoint_and_report(dataset, tmp_path):
    code, out = run_train(dataset, tmp_path)
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert report["epochs_run"] == 2
    assert report["config"]["encoder"] == "mlp"
    checkpoint = json.loads((out / "checkpoint.json").read_text())
    assert checkpoint["format"] == "jmmfr-params-v1"


def test_train_flag_overrides_config_file(dataset, tmp_path):
    code, out = run_train(dataset, tmp_path)
    assert code == 0
    cfg_path = tmp_path / "run.json"
    out2 = tmp_path / "override"
    code = main(["train", "--data-dir", str(dataset), "--config", str(cfg_path),
                 "--out", str(out2), "--encoder", "sage", "--epochs", "1"])
    assert code == 0
    report = json.loads((out2 / "report.json").read_text())
    assert report["config"]["encoder"] == "sage"
    assert report["epochs_run"] == 1


def test_train_is_bitwise_deterministic(dataset, tmp_path):
    _, out1 = run_train(dataset, tmp_path, name="d1", seed=5)
    _, out2 = run_train(dataset, tmp_path, name="d2", seed=5)
    assert (out1 / "report.json").read_bytes() == (out2 / "report.json").read_bytes()
    assert (out1 / "checkpoint.json").read_bytes() == (out2 / "checkpoint.json").read_bytes()


def test_eval_prints_split_metrics(dataset, tmp_path, capsys):
    _, out = run_train(dataset, tmp_path)
    code = main(["eval", "--data-dir", str(dataset),
                 "--checkpoint", str(out / "checkpoint.json")])
    assert code == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["split"] == "test"
    assert {"member", "job", "combined"} <= set(doc)
    assert 0.0 <= doc["combined"]["accuracy"] <= 1.0


def test_eval_writes_file_when_asked(dataset, tmp_path):
    _, out = run_train(dataset, tmp_path)
    target = tmp_path / "metrics.json"
    code = main(["eval", "--data-dir", str(dataset),
                 "--checkpoint", str(out / "checkpoint.json"),
                 "--split", "val", "--out", str(target)])
    assert code == 0
    assert json.loads(target.read_text())["split"] == "val"


def test_sweep_missing_writes_json_and_table(dataset, tmp_path):
    cfg_path = tmp_path / "sweep.json"
    cfg_path.write_text(json.dumps(FAST_TRAIN))
    out = tmp_path / "sweep"
    code = main(["sweep", "--data-dir", str(dataset), "--config", str(cfg_path),
                 "--out-dir", str(out), "--axis", "missing",
                 "--models", "mlp", "--seeds", "0", "--ratios", "0.1,0.5"])
    assert code == 0
    doc = json.loads((out / "sweep_missing.json").read_text())
    assert doc["axis"] == "missing_ratio"
    assert doc["values"] == [0.1, 0.5]
    table = (out / "sweep_missing.txt").read_text()
    assert table.startswith("missing_ratio")
    assert len(table.strip().split("\n")) == 3


def test_sweep_skills_axis(dataset, tmp_path):
    cfg_path = tmp_path / "sweep.json"
    cfg_path.write_text(json.dumps(FAST_TRAIN))
    out = tmp_path / "sweep"
    code = main(["sweep", "--data-dir", str(dataset), "--config", str(cfg_path),
                 "--out-dir", str(out), "--axis", "skills",
                 "--models", "mlp", "--seeds", "0", "--dims", "30,10"])
    assert code == 0
    doc = json.loads((out / "sweep_skills.json").read_text())
    assert doc["axis"] == "skill_dim"
    assert doc["values"] == [30, 10]


def test_sweep_rejects_unknown_model(dataset, tmp_path, capsys):
    code = main(["sweep", "--data-dir", str(dataset),
                 "--out-dir", str(tmp_path / "x"), "--axis", "missing",
                 "--models", "transformer", "--seeds", "0"])
    assert code == 1
    assert "unknown model kind" in capsys.readouterr().err


def test_export_embeddings_and_restored(dataset, tmp_path):
    _, out = run_train(dataset, tmp_path, name="jm", encoder="jmmfr-mc")
    emb = tmp_path / "emb.tsv"
    code = main(["export", "--data-dir", str(dataset),
                 "--checkpoint", str(out / "checkpoint.json"),
                 "--what", "embeddings", "--out", str(emb)])
    assert code == 0
    lines = emb.read_text().strip().split("\n")
    assert len(lines) == 1 + SMALL_GEN["n_members"] + SMALL_GEN["n_jobs"]

    restored = tmp_path / "restored.jsonl"
    code = main(["export", "--data-dir", str(dataset),
                 "--checkpoint", str(out / "checkpoint.json"),
                 "--what", "restored", "--out", str(restored)])
    assert code == 0
    rows = [json.loads(x) for x in restored.read_text().strip().split("\n")]
    assert len(rows) == SMALL_GEN["n_members"] + SMALL_GEN["n_jobs"]
    assert rows[0]["channel"] == "skills"
    assert all(0.0 <= s <= 1.0 for s in rows[0]["scores"])
    assert all(s == round(s, 6) for s in rows[0]["scores"])


def test_restored_export_needs_restoration_model(dataset, tmp_path, capsys):
    _, out = run_train(dataset, tmp_path)
    code = main(["export", "--data-dir", str(dataset),
                 "--checkpoint", str(out / "checkpoint.json"),
                 "--what", "restored", "--out", str(tmp_path / "r.jsonl")])
    assert code == 1
    assert "does not restore" in capsys.readouterr().err


def test_missing_data_dir_is_a_clean_error(tmp_path, capsys):
    code = main(["train", "--data-dir", str(tmp_path / "nope"),
                 "--out", str(tmp_path / "out")])
    assert code == 1
    assert "error:" in capsys.readouterr().err


def test_bad_config_json_is_a_clean_error(dataset, tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    code = main(["train", "--data-dir", str(dataset), "--config", str(bad),
                 "--out", str(tmp_path / "out")])
    assert code == 1
    assert "not valid JSON" in capsys.readouterr().err


def test_config_rejects_off_grid_values(dataset, tmp_path, capsys):
    cfg_path = tmp_path / "bad.json"
    cfg_path.write_text(json.dumps({"encoder": "mlp", "batch_size": 123}))
    code = main(["train", "--data-dir", str(dataset), "--config", str(cfg_path),
                 "--out", str(tmp_path / "out")])
    assert code == 1
    assert "batch_size" in capsys.readouterr().err


def test_log_level_env_is_validated(dataset, tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("JMMFR_LOG", "chatty")
    code = main(["eval", "--data-dir", str(dataset), "--checkpoint", "x.json"])
    assert code == 1
    assert "JMMFR_LOG" in capsys.readouterr().err


def test_log_level_debug_is_accepted(dataset, tmp_path, monkeypatch):
    monkeypatch.setenv("JMMFR_LOG", "debug")
    code, _ = run_train(dataset, tmp_path, name="dbg")
    assert code == 0


def test_masking_flows_through_train(dataset, tmp_path):
    code, out = run_train(dataset, tmp_path, name="mask",
                          encoder="jmmfr-mc", missing_ratio=0.4)
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert report["config"]["missing_ratio"] == 0.4
