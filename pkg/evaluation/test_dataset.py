#!/usr/bin/env python3
"""
Testes do modelo de dados, da taxonomia e das divisões estratificadas.
"""
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np
import pytest

root_dir = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, root_dir)

from cli.config import TAXONOMY_FILE
from core.dataset import (
    CauseTaxonomy, Dataset, Icd10Mapping, LabelLevel, Response, VARecord, collapse_probabilities, filter_records,
    load_dataset, load_taxonomy, parse_response, write_dataset,
)
from core.errors import (
    DuplicateIdError, EmptyClassError, FoldError, LabelError, ParseError, SchemaError, VaForgeError,
)
from core.features import ProbMatrix, encode_questions
from core.splits import stratified_kfold, stratified_split, subsample_training
from evaluation.synthetic import make_synthetic_dataset


def _write_jsonl(path: Path, rows):
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n", encoding="utf-8")


def _row(rid, cause="Injuries", **extra):
    return {"id": rid, "narrative": "he fell from a roof", "questions": {"i147o": "No"},
            "cause_level3": cause, **extra}


def test_parse_response_aliases():
    assert parse_response("yes") is Response.YES
    assert parse_response("N") is Response.NO
    assert parse_response("DK") is Response.DONT_KNOW
    assert parse_response("") is Response.MISSING
    assert parse_response(None) is Response.MISSING
    assert parse_response(float("nan")) is Response.MISSING
    with pytest.raises(ValueError):
        parse_response("perhaps")


def test_record_defaults_and_score_range():
    rec = VARecord(id=" a1 ", narrative="x", questions={"i147o": "Y"}, age_group="")
    assert rec.id == "a1"
    assert rec.age_group.value == "adult"
    assert rec.questions["i147o"] is Response.YES
    with pytest.raises(ValueError):
        VARecord(id="a2", sufficiency_score=6)


def test_taxonomy_file_and_icd10_mapping():
    taxonomy = load_taxonomy(TAXONOMY_FILE)
    assert taxonomy.level3 == (
        "HIV and pulmonary TB", "Non-HIV/TB infections", "Non-communicable causes",
        "Injuries", "Maternal conditions", "Indeterminate",
    )
    assert taxonomy.map_icd10("B22").level3 == "HIV and pulmonary TB"
    assert taxonomy.map_icd10("I21.9").level2 == "Circulatory diseases"
    assert taxonomy.map_icd10("Z99") is None
    assert taxonomy.encode("Injuries", "L3") == 3
    assert taxonomy.decode(3, LabelLevel.L3) == "Injuries"
    with pytest.raises(LabelError):
        taxonomy.encode("Unknown", "L3")


def test_taxonomy_rejects_duplicates():
    with pytest.raises(SchemaError):
        CauseTaxonomy(level3=("A", "A"))


def test_level_parsing():
    assert LabelLevel.parse(1) is LabelLevel.L1
    assert LabelLevel.parse("level2") is LabelLevel.L2
    with pytest.raises(SchemaError):
        LabelLevel.parse("L4")


def test_load_jsonl_and_fill_from_icd10():
    taxonomy = load_taxonomy(TAXONOMY_FILE)
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "va.jsonl"
        _write_jsonl(path, [
            _row("a"),
            {"id": "b", "narrative": "fever", "questions": {}, "cause_icd10": "A41.9"},
        ])
        ds = load_dataset(path, None, taxonomy)
    assert ds.ids == ["a", "b"]
    assert ds.label_of("b") == "Non-HIV/TB infections"
    assert ds.get("b").cause_level1 == "Sepsis"


def test_invalid_records_are_all_reported():
    taxonomy = load_taxonomy(TAXONOMY_FILE)
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "va.jsonl"
        _write_jsonl(path, [
            _row("a"),
            {"id": "b", "narrative": "missing questions"},
            _row("c", cause="Not a cause"),
            _row("a"),
        ])
        with pytest.raises(SchemaError) as info:
            load_dataset(path, "jsonl", taxonomy)
    issues = info.value.issues
    assert [i.line for i in issues] == [2, 3, 4]
    assert [i.kind for i in issues] == ["schema", "label", "duplicate"]


def test_malformed_json_line_reports_line():
    taxonomy = CauseTaxonomy()
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "va.jsonl"
        path.write_text(json.dumps(_row("a")) + "\n{not json\n", encoding="utf-8")
        with pytest.raises(ParseError) as info:
            load_dataset(path, None, taxonomy)
    assert info.value.line == 2


def test_missing_file_and_unknown_format():
    with pytest.raises(FileNotFoundError):
        load_dataset("/nonexistent/va.jsonl", None, CauseTaxonomy())
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "va.txt"
        path.write_text("", encoding="utf-8")
        with pytest.raises(SchemaError):
            load_dataset(path, None, CauseTaxonomy())


def test_jsonl_round_trip():
    ds = make_synthetic_dataset(n_per_class=3, seed=1)
    with tempfile.TemporaryDirectory() as tmp:
        path = write_dataset(ds, Path(tmp) / "out.jsonl")
        loaded = load_dataset(path, None, ds.taxonomy)
    assert loaded.records == ds.records


def test_csv_round_trip_keeps_labels_and_responses():
    ds = make_synthetic_dataset(n_per_class=3, seed=2)
    with tempfile.TemporaryDirectory() as tmp:
        path = write_dataset(ds, Path(tmp) / "out.csv")
        loaded = load_dataset(path, None, ds.taxonomy)
    assert loaded.ids == ds.ids
    assert loaded.labels() == ds.labels()
    for rec in ds.records:
        other = loaded.get(rec.id)
        assert other.narrative == rec.narrative
        assert other.sufficiency_score == rec.sufficiency_score
        for ind, response in rec.questions.items():
            assert other.questions[ind] is response


def test_dataset_rejects_duplicate_ids_and_foreign_labels():
    taxonomy = CauseTaxonomy()
    rec = VARecord(id="a", cause_level3="Injuries")
    with pytest.raises(DuplicateIdError):
        Dataset((rec, rec), taxonomy)
    with pytest.raises(LabelError):
        Dataset((VARecord(id="b", cause_level3="Other"),), taxonomy)
    ds = Dataset((rec,), taxonomy)
    with pytest.raises(VaForgeError):
        ds.subset(["zzz"])


def test_filter_records_adults_only():
    taxonomy = CauseTaxonomy()
    ds = Dataset((VARecord(id="a"), VARecord(id="b", age_group="other")), taxonomy)
    adults = filter_records(ds, lambda r: r.age_group.value == "adult")
    assert adults.ids == ["a"]


def test_collapse_probabilities_sums_children():
    taxonomy = CauseTaxonomy(
        level2=("Infections", "External"),
        level3=("TB", "Sepsis", "Injury"),
        icd10_map=(
            Icd10Mapping("A15", level2="Infections", level3="TB"),
            Icd10Mapping("A41", level2="Infections", level3="Sepsis"),
            Icd10Mapping("V01", level2="External", level3="Injury"),
        ),
    )
    pm = ProbMatrix(("r1",), ("Injury", "TB", "Sepsis"), np.array([[0.2, 0.5, 0.3]]))
    coarse = collapse_probabilities(pm, taxonomy, "L3", "L2")
    assert coarse.classes == ("Infections", "External")
    np.testing.assert_allclose(coarse.values, [[0.8, 0.2]])


def test_encode_questions_columns():
    recs = [VARecord(id="a", questions={"i1": "Yes"}), VARecord(id="b", questions={"i2": "DontKnow"})]
    fm = encode_questions(recs)
    assert fm.columns == ("i1", "i1:missing", "i2", "i2:missing")
    np.testing.assert_allclose(fm.values, [[1, 0, 0.5, 1], [0.5, 1, 0.5, 0]])


def test_stratified_split_is_deterministic_and_stratified():
    ds = make_synthetic_dataset(n_per_class=10, seed=3)
    plan = stratified_split(ds, 0.2, seed=7)
    again = stratified_split(ds, 0.2, seed=7)
    assert plan == again
    assert not set(plan.train_ids) & set(plan.test_ids)
    assert len(plan.train_ids) + len(plan.test_ids) == len(ds)
    test_labels = [ds.label_of(rid) for rid in plan.test_ids]
    for cause in ds.classes:
        assert test_labels.count(cause) == 2


def test_split_counts_within_one_record_of_proportion():
    taxonomy = CauseTaxonomy(level3=("A", "B"))
    recs = [VARecord(id=f"a{i}", cause_level3="A") for i in range(7)]
    recs += [VARecord(id=f"b{i}", cause_level3="B") for i in range(3)]
    ds = Dataset(tuple(recs), taxonomy)
    for seed in range(100):
        plan = stratified_split(ds, 0.2, seed=seed)
        n_a = sum(rid.startswith("a") for rid in plan.test_ids)
        n_b = sum(rid.startswith("b") for rid in plan.test_ids)
        assert abs(n_a - 1.4) <= 1 and abs(n_b - 0.6) <= 1


def test_split_rejects_empty_classes_unless_allowed():
    taxonomy = CauseTaxonomy(level3=("A", "B"))
    ds = Dataset(tuple(VARecord(id=f"a{i}", cause_level3="A") for i in range(4)), taxonomy)
    with pytest.raises(EmptyClassError):
        stratified_split(ds, 0.25, seed=0)
    plan = stratified_split(ds, 0.25, seed=0, allow_empty_classes=True)
    assert len(plan.test_ids) == 1
    with pytest.raises(VaForgeError):
        stratified_split(ds, 1.0, seed=0, allow_empty_classes=True)


def test_unlabeled_records_stay_out_of_split():
    taxonomy = CauseTaxonomy(level3=("A",))
    recs = [VARecord(id=f"a{i}", cause_level3="A") for i in range(4)] + [VARecord(id="u")]
    plan = stratified_split(Dataset(tuple(recs), taxonomy), 0.25, seed=0, allow_empty_classes=True)
    assert plan.unlabeled_ids == ("u",)


def test_kfold_partitions_without_leakage():
    ds = make_synthetic_dataset(n_per_class=7, seed=4)
    folds = stratified_kfold(ds, k=3, seed=11)
    assert len(folds) == 3
    seen = []
    for fold in folds:
        assert not set(fold.train_ids) & set(fold.val_ids)
        assert len(fold.train_ids) + len(fold.val_ids) == len(ds)
        seen.extend(fold.val_ids)
    assert sorted(seen) == sorted(ds.ids)
    sizes = [len(f.val_ids) for f in folds]
    assert max(sizes) - min(sizes) <= 1


def test_kfold_errors():
    ds = make_synthetic_dataset(n_per_class=2, seed=4)
    with pytest.raises(FoldError):
        stratified_kfold(ds, k=1)
    with pytest.raises(FoldError):
        stratified_kfold(ds, k=3)


def test_subsample_training():
    ds = make_synthetic_dataset(n_per_class=10, seed=5)
    assert subsample_training(ds, 1.0) is ds
    half = subsample_training(ds, 0.5, seed=1)
    assert len(half) == 5 * len(ds.classes)
    assert set(half.ids) <= set(ds.ids)
    assert subsample_training(ds, 0.5, seed=1).ids == half.ids
    with pytest.raises(VaForgeError):
        subsample_training(ds, 0.0)


def test_subsample_training_empty_classes():
    taxonomy = CauseTaxonomy(level3=("A", "B"))
    ds = Dataset(tuple(VARecord(id=f"a{i}", cause_level3="A") for i in range(6)), taxonomy)
    with pytest.raises(EmptyClassError):
        subsample_training(ds, 0.5, seed=0)
    with pytest.raises(EmptyClassError):
        subsample_training(ds, 1.0, seed=0)
    assert len(subsample_training(ds, 0.5, seed=0, allow_empty_classes=True)) == 3


def test_invalid_utf8_is_a_parse_error():
    taxonomy = CauseTaxonomy()
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "va.jsonl"
        _write_jsonl(path, [_row("a"), _row("b")])
        with open(path, "ab") as f:
            f.write(b'{"id": "bad", "narrative": "\xff\xfe"}\n')
        with pytest.raises(ParseError) as info:
            load_dataset(path, None, taxonomy)
        assert info.value.line == 3

        csv_path = Path(tmp) / "va.csv"
        csv_path.write_bytes(b"id,narrative,i147o\nx1,caiu do telhado,No\nx2,\xe9bito,Yes\n")
        with pytest.raises(ParseError) as info:
            load_dataset(csv_path, None, taxonomy)
        assert info.value.line == 3

        taxonomy_path = Path(tmp) / "taxonomy.csv"
        taxonomy_path.write_bytes(b"icd10,level1,level2,level3\nA00,\xc0,x,Injuries\n")
        with pytest.raises(ParseError):
            load_taxonomy(taxonomy_path)


def test_unreadable_taxonomy_csv_is_a_parse_error():
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "taxonomy.csv"
        path.write_text('icd10,level1,level2,level3\n"A00,a,b,c\n', encoding="utf-8")
        with pytest.raises(ParseError):
            load_taxonomy(path)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
