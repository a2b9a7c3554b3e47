#!/usr/bin/env python3
"""
Testes de ponta a ponta da CLI vaforge sobre um dataset sintético pequeno.
"""
import json
import os
import sys
from pathlib import Path

import pandas as pd
import pytest

root_dir = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, root_dir)

from cli.config import CONFIG_ENV_VAR, EXIT_OK, EXIT_RUNTIME_ERROR, EXIT_VALIDATION_ERROR, TAXONOMY_FILE
from cli.main import main
from core.dataset import load_taxonomy, write_dataset
from evaluation.synthetic import make_synthetic_dataset

N_PER_CLASS = 8


def _write_config(tmp: Path, **overrides) -> Path:
    config = {
        "dataset": "va.jsonl",
        "seed": 7,
        "test_fraction": 0.25,
        "learners": [
            {"kind": "logreg", "modality": "questions", "hyperparams": {"max_iter": 50}},
            {"kind": "knn", "modality": "narrative", "hyperparams": {"n_neighbors": 3}},
        ],
        "text": {"svd_k": 4, "min_df": 1},
        "ensemble": {"strategy": "soft_vote"},
        "study": {"preset": "logreg", "n_trials": 3, "n_startup": 2, "k": 2},
        "sufficiency": {"svd_k": 3, "shapley_samples": 3, "shapley_rows": 2, "top": 5},
        "output_dir": "out",
    }
    config.update(overrides)
    path = tmp / "run.json"
    path.write_text(json.dumps(config), encoding="utf-8")
    return path


@pytest.fixture
def workspace(tmp_path):
    ds = make_synthetic_dataset(load_taxonomy(TAXONOMY_FILE), n_per_class=N_PER_CLASS, seed=3)
    write_dataset(ds, tmp_path / "va.jsonl")
    return tmp_path


def test_validate_clean_dataset(workspace, capsys):
    config = _write_config(workspace)
    assert main(["--config", str(config), "validate"]) == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report["errors"] == []
    assert report["n_records"] == N_PER_CLASS * len(load_taxonomy(TAXONOMY_FILE).level3)
    assert report["learners"] == ["logreg:questions", "knn:narrative"]


def test_validate_reports_missing_files(workspace):
    config = _write_config(workspace, taxonomy="missing.csv")
    assert main(["--config", str(config), "validate"]) == EXIT_VALIDATION_ERROR


def test_missing_config_is_validation_error(workspace, monkeypatch):
    monkeypatch.delenv(CONFIG_ENV_VAR, raising=False)
    assert main(["--config", str(workspace / "nope.json"), "run"]) == EXIT_VALIDATION_ERROR
    assert main(["run"]) == EXIT_VALIDATION_ERROR


def test_config_from_environment(workspace, monkeypatch):
    monkeypatch.setenv(CONFIG_ENV_VAR, str(_write_config(workspace)))
    assert main(["validate"]) == EXIT_OK


def test_invalid_config_is_validation_error(workspace):
    config = _write_config(workspace, ensemble={"strategy": "majority"})
    assert main(["--config", str(config), "run"]) == EXIT_VALIDATION_ERROR


def test_malformed_dataset_is_validation_error(workspace):
    with open(workspace / "va.jsonl", "a", encoding="utf-8") as f:
        f.write('{"id": "x1", "cause_level3": "Unknown cause"}\n')
    config = _write_config(workspace)
    assert main(["--config", str(config), "validate"]) == EXIT_VALIDATION_ERROR
    assert main(["--config", str(config), "run"]) == EXIT_VALIDATION_ERROR


def test_invalid_utf8_is_validation_error(workspace, capsys):
    with open(workspace / "va.jsonl", "ab") as f:
        f.write(b'{"id": "bad", "narrative": "\xff\xfe"}\n')
    config = _write_config(workspace)
    assert main(["--config", str(config), "validate"]) == EXIT_VALIDATION_ERROR
    report = json.loads(capsys.readouterr().out)
    assert any("UTF-8" in error for error in report["errors"])
    assert main(["--config", str(config), "run"]) == EXIT_VALIDATION_ERROR


def test_invalid_utf8_config_is_validation_error(workspace):
    path = workspace / "run.json"
    path.write_bytes(b'{"dataset": "va\xff.jsonl"}')
    assert main(["--config", str(path), "validate"]) == EXIT_VALIDATION_ERROR


def test_prep_writes_fused_documents(workspace):
    config = _write_config(workspace)
    assert main(["--config", str(config), "prep"]) == EXIT_OK
    out = workspace / "out"
    lines = (out / "fused_documents.jsonl").read_text(encoding="utf-8").splitlines()
    assert len(lines) == N_PER_CLASS * len(load_taxonomy(TAXONOMY_FILE).level3)
    assert (out / "artifacts" / "text_narrative.json").exists()
    assert (out / "artifacts" / "text_fused_text.json").exists()
    top = json.loads((out / "artifacts" / "top_ngrams_narrative.json").read_text(encoding="utf-8"))
    assert [c["component"] for c in top] == [f"svd_{i}" for i in range(4)]
    assert all(0 < len(c["ngrams"]) <= 10 for c in top)
    indicators = json.loads((out / "artifacts" / "indicators.json").read_text(encoding="utf-8"))
    assert indicators == sorted(indicators) and indicators
    split = json.loads((out / "split.json").read_text(encoding="utf-8"))
    assert set(split["train_ids"]).isdisjoint(split["test_ids"])


def test_run_writes_outputs_and_is_reproducible(workspace):
    config = _write_config(workspace)
    assert main(["--config", str(config), "run"]) == EXIT_OK
    out = workspace / "out"
    for name in ("logreg_questions", "knn_narrative", "soft_vote"):
        base = out / "models" / name
        assert (base / "metrics.json").exists()
        assert (base / "probabilities.csv").exists()
        assert (base / "confusion.csv").exists()
        assert (base / "csmf.csv").exists()
    assert (out / "models" / "logreg_questions" / "model.json").exists()
    report = json.loads((out / "report.json").read_text(encoding="utf-8"))
    assert set(report["summary"]) == {"logreg:questions", "knn:narrative", "soft_vote"}
    assert (out / "manifest.json").exists()

    first = (out / "models" / "soft_vote" / "metrics.json").read_bytes()
    assert main(["--config", str(config), "run"]) == EXIT_OK
    assert (out / "models" / "soft_vote" / "metrics.json").read_bytes() == first


def test_run_reports_accuracy_interval(workspace):
    config = _write_config(workspace, report={"bootstrap": 50})
    assert main(["--config", str(config), "run"]) == EXIT_OK
    report = json.loads((workspace / "out" / "report.json").read_text(encoding="utf-8"))
    for name in ("logreg:questions", "knn:narrative", "soft_vote"):
        interval = report["extras"][name]["accuracy_interval"]
        assert interval["lower"] <= interval["point"] <= interval["upper"]
        assert interval["n"] == 50
        assert interval["point"] == pytest.approx(report["summary"][name]["accuracy"], abs=1e-4)
    assert "bootstrap" in (workspace / "out" / "report.md").read_text(encoding="utf-8")


def test_run_reports_collapsed_levels(workspace):
    config = _write_config(workspace, label_level="L1", report={"levels": ["L2", "L3"]})
    assert main(["--config", str(config), "run"]) == EXIT_OK
    out = workspace / "out"
    report = json.loads((out / "report.json").read_text(encoding="utf-8"))
    taxonomy = load_taxonomy(TAXONOMY_FILE)
    for level, classes in (("L2", taxonomy.level2), ("L3", taxonomy.level3)):
        assert set(report["extras"]["soft_vote"]["levels"][level]) >= {"accuracy", "csmf_accuracy"}
        metrics = json.loads((out / "models" / "soft_vote" / f"metrics_{level}.json").read_text(encoding="utf-8"))
        assert set(metrics["csmf_true"]) == set(classes)
    assert "Níveis agregados" in (out / "report.md").read_text(encoding="utf-8")


def test_report_levels_need_a_many_to_one_mapping(workspace):
    # a mesma causa L3 aparece em dois grupos L2 no CSV embarcado
    config = _write_config(workspace, report={"levels": ["L2"]})
    assert main(["--config", str(config), "run"]) == EXIT_VALIDATION_ERROR
    config = _write_config(workspace, report={"levels": ["L3"]})
    assert main(["--config", str(config), "run"]) == EXIT_VALIDATION_ERROR


def test_predict_reuses_run_artifacts(workspace):
    config = _write_config(workspace)
    assert main(["--config", str(config), "predict", "--model", "knn:narrative",
                 "--input", str(workspace / "va.jsonl")]) == EXIT_RUNTIME_ERROR
    assert main(["--config", str(config), "run"]) == EXIT_OK
    out = workspace / "out"
    for name, folder in (("logreg:questions", "logreg_questions"), ("knn:narrative", "knn_narrative")):
        assert main(["--config", str(config), "predict", "--model", name,
                     "--input", str(workspace / "va.jsonl")]) == EXIT_OK
        predicted = pd.read_csv(out / "predictions" / f"{folder}.csv", index_col="id")
        held_out = pd.read_csv(out / "models" / folder / "probabilities.csv", index_col="id")
        assert len(predicted) == N_PER_CLASS * len(load_taxonomy(TAXONOMY_FILE).level3)
        pd.testing.assert_frame_equal(predicted.loc[held_out.index], held_out, atol=1e-9)


def test_seed_and_out_flags(workspace):
    config = _write_config(workspace)
    assert main(["--config", str(config), "--seed", "11", "--out", str(workspace / "alt"), "run"]) == EXIT_OK
    report = json.loads((workspace / "alt" / "report.json").read_text(encoding="utf-8"))
    assert report["notes"]["seed"] == 11
    assert not (workspace / "out").exists()


def test_question_only_run(workspace):
    config = _write_config(
        workspace,
        learners=[{"kind": "gbdt", "modality": "questions", "hyperparams": {"n_estimators": 5, "max_depth": 2}}],
        ensemble={"strategy": "single"},
    )
    assert main(["--config", str(config), "run"]) == EXIT_OK
    report = json.loads((workspace / "out" / "report.json").read_text(encoding="utf-8"))
    assert list(report["summary"]) == ["gbdt:questions"]


def test_stacking_ensemble_and_manifest_replay(workspace):
    config = _write_config(workspace, ensemble={"strategy": "stacking", "k": 2})
    assert main(["--config", str(config), "ensemble"]) == EXIT_OK
    out = workspace / "out"
    first = (out / "models" / "stacking" / "metrics.json").read_bytes()
    assert not (out / "models" / "logreg_questions").exists()

    manifest = out / "manifest.json"
    replay_out = workspace / "replay"
    assert main(["--config", str(config), "--out", str(replay_out), "ensemble", "--manifest", str(manifest)]) == EXIT_OK
    assert (replay_out / "models" / "stacking" / "metrics.json").read_bytes() == first


def test_manifest_replay_ignores_changed_config(workspace):
    config = _write_config(workspace, ensemble={"strategy": "stacking", "k": 2})
    assert main(["--config", str(config), "ensemble"]) == EXIT_OK
    first = (workspace / "out" / "models" / "stacking" / "metrics.json").read_bytes()
    manifest = json.loads((workspace / "out" / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["text"]["min_df"] == 1 and manifest["text"]["svd_k"] == 4
    assert manifest["adults_only"] is False

    changed = _write_config(workspace, text={"svd_k": 6, "min_df": 3, "ngram_range": [1, 1]},
                            learners=[{"kind": "gbdt", "modality": "questions"}],
                            ensemble={"strategy": "soft_vote"})
    replay_out = workspace / "replay"
    argv = ["--config", str(changed), "--out", str(replay_out), "ensemble",
            "--manifest", str(workspace / "out" / "manifest.json")]
    assert main(argv) == EXIT_OK
    assert (replay_out / "models" / "stacking" / "metrics.json").read_bytes() == first


def test_stacking_does_not_depend_on_worker_count(workspace):
    config = _write_config(workspace, ensemble={"strategy": "stacking", "k": 2})
    outputs = []
    for workers in ("1", "4"):
        out = workspace / f"w{workers}"
        assert main(["--config", str(config), "--workers", workers, "--out", str(out), "run"]) == EXIT_OK
        stacking = out / "models" / "stacking"
        outputs.append(((stacking / "probabilities.csv").read_bytes(), (stacking / "metrics.json").read_bytes()))
    assert outputs[0] == outputs[1]


def test_hpo_does_not_depend_on_worker_count(workspace):
    config = _write_config(workspace, study={"preset": "logreg", "n_trials": 6, "n_startup": 2, "k": 3,
                                             "startup_trials": 1})
    results = []
    for workers in ("1", "4"):
        out = workspace / f"hpo{workers}"
        assert main(["--config", str(config), "--workers", workers, "--out", str(out), "hpo"]) == EXIT_OK
        results.append(((out / "hpo" / "best_config.json").read_bytes(),
                        (out / "hpo" / "study_log.jsonl").read_bytes()))
    assert results[0] == results[1]


def test_ensemble_requires_ensemble_strategy(workspace):
    config = _write_config(workspace, ensemble={"strategy": "single"})
    assert main(["--config", str(config), "ensemble"]) == EXIT_RUNTIME_ERROR


def test_sensitivity_fractions(workspace):
    config = _write_config(workspace)
    assert main(["--config", str(config), "sensitivity", "--fractions", "0.5,1.0"]) == EXIT_OK
    frame = pd.read_csv(workspace / "out" / "sensitivity.csv")
    assert len(frame) == 4
    assert sorted(set(frame["fraction"])) == [0.5, 1.0]
    full = frame[frame["fraction"] == 1.0]
    half = frame[frame["fraction"] == 0.5]
    assert (half["n_train"].values < full["n_train"].values).all()
    assert main(["--config", str(config), "sensitivity", "--fractions", "a,b"]) == EXIT_RUNTIME_ERROR


def test_ablation(workspace, capsys):
    config = _write_config(workspace)
    assert main(["--config", str(config), "ablation"]) == EXIT_OK
    frame = pd.read_csv(workspace / "out" / "ablation.csv")
    assert len(frame) == 3
    assert frame.loc[0, "ensemble"] == "All models (base)"
    assert "All but knn:narrative" in capsys.readouterr().out


def test_hpo_writes_study_log(workspace):
    config = _write_config(workspace)
    assert main(["--config", str(config), "hpo"]) == EXIT_OK
    best = json.loads((workspace / "out" / "hpo" / "best_config.json").read_text(encoding="utf-8"))
    assert best["learner"] == "logreg:questions"
    assert best["n_trials"] == 3
    log = (workspace / "out" / "hpo" / "study_log.jsonl").read_text(encoding="utf-8").splitlines()
    assert len(log) == 3


def test_sufficiency_command(workspace):
    config = _write_config(workspace)
    assert main(["--config", str(config), "sufficiency"]) == EXIT_OK
    out = workspace / "out" / "sufficiency"
    report = json.loads((out / "report.json").read_text(encoding="utf-8"))
    assert set(report["accuracies"]) == {"narrative", "questions", "feature_fusion"}
    assert len(report["top_features"]) == 5
    assert [row["level"] for row in report["cod_by_sufficiency"]] == ["Low", "Medium", "High"]
    assert len(pd.read_csv(out / "importance.csv")) == 5


def test_report_after_run(workspace, capsys):
    config = _write_config(workspace)
    assert main(["--config", str(config), "run"]) == EXIT_OK
    capsys.readouterr()
    assert main(["--config", str(config), "report"]) == EXIT_OK
    markdown = capsys.readouterr().out
    assert "# Relatório de avaliação" in markdown
    assert "soft_vote" in markdown
    metrics = workspace / "out" / "models" / "soft_vote" / "metrics.json"
    assert main(["--config", str(config), "report", "--input", str(metrics)]) == EXIT_OK
    assert "metrics" in capsys.readouterr().out


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
