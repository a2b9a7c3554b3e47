#!/usr/bin/env python3
"""
Testes da conversão de respostas em frases e do documento fundido.
"""
import os
import sys
import tempfile
from pathlib import Path

import pytest

root_dir = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, root_dir)

from core.dataset import Response, VARecord
from core.errors import SchemaError, UnknownIndicatorError
from core.tabular_text import (
    SEPARATOR, build_fused_document, build_fused_documents, load_template_table, render_question,
    render_sentences,
)

EXAMPLE_QUESTIONS = {
    "i019a": "No", "i019b": "Yes", "i022c": "Yes", "i147o": "Yes", "i148a": "No", "i174o": "No",
}
EXAMPLE_TEXT = (
    "The deceased was a female. The deceased had fever. "
    "The deceased had fever less than one week before death. "
    "The deceased did not have chest pain."
)


def _record(questions, narrative="she was sick for two weeks"):
    return VARecord(id="r1", narrative=narrative, questions=questions)


def test_example_record_renders_expected_text():
    table = load_template_table()
    rec = _record(EXAMPLE_QUESTIONS)
    assert " ".join(render_sentences(rec.questions, table)) == EXAMPLE_TEXT
    assert build_fused_document(rec, table) == rec.narrative + SEPARATOR + EXAMPLE_TEXT


def test_single_question_rendering():
    table = load_template_table()
    assert render_question("i019b", Response.YES, table) == "The deceased was a female."
    assert render_question("i174o", "No", table) == "The deceased did not have chest pain."
    assert render_question("i147o", Response.MISSING, table) is None
    assert render_question("i147o", Response.DONT_KNOW, table) is None
    # i022c nunca gera frase
    for response in Response:
        assert render_question("i022c", response, table) is None


def test_unknown_indicator_raises():
    table = load_template_table()
    with pytest.raises(UnknownIndicatorError):
        render_question("i999z", Response.YES, table)


def test_extra_indicators_are_ignored_in_document():
    table = load_template_table()
    base = _record(EXAMPLE_QUESTIONS)
    extra = _record({**EXAMPLE_QUESTIONS, "i999z": "Yes"})
    assert build_fused_document(base, table) == build_fused_document(extra, table)


def test_question_insertion_order_does_not_matter():
    table = load_template_table()
    forward = _record(EXAMPLE_QUESTIONS)
    backward = _record(dict(reversed(list(EXAMPLE_QUESTIONS.items()))))
    assert build_fused_document(forward, table) == build_fused_document(backward, table)


def test_document_length_is_narrative_plus_sentences():
    table = load_template_table()
    rec = _record(EXAMPLE_QUESTIONS)
    sentences = render_sentences(rec.questions, table)
    expected = len(rec.narrative) + len(SEPARATOR) + sum(len(s) for s in sentences) + len(sentences) - 1
    assert len(build_fused_document(rec, table)) == expected


def test_all_missing_keeps_only_narrative():
    table = load_template_table()
    rec = _record({ind: "Missing" for ind in EXAMPLE_QUESTIONS})
    assert render_sentences(rec.questions, table) == []
    assert build_fused_document(rec, table) == rec.narrative + SEPARATOR


def test_sex_pair_renders_one_sentence():
    table = load_template_table()
    both = render_sentences({"i019a": Response.YES, "i019b": Response.YES}, table)
    assert both == ["The deceased was a male."]
    neither = render_sentences({"i019a": Response.NO, "i019b": Response.NO}, table)
    assert neither == []


def test_build_fused_documents_keyed_by_id():
    table = load_template_table()
    records = [VARecord(id=f"r{i}", narrative="text", questions=EXAMPLE_QUESTIONS) for i in range(3)]
    documents = build_fused_documents(records, table)
    assert list(documents) == ["r0", "r1", "r2"]


def test_template_table_validation():
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "templates.csv"
        path.write_text("indicator,yes_text,no_text,skip_on\ni001,Sem ponto final,,\n", encoding="utf-8")
        with pytest.raises(SchemaError):
            load_template_table(path)

        path.write_text("indicator,yes_text\ni001,Frase.\n", encoding="utf-8")
        with pytest.raises(SchemaError):
            load_template_table(path)

        path.write_text(
            "indicator,yes_text,no_text,skip_on\ni001,Frase.,,\ni001,Outra.,,\n", encoding="utf-8"
        )
        with pytest.raises(SchemaError):
            load_template_table(path)


def test_custom_table_order_follows_file():
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "templates.csv"
        path.write_text(
            "indicator,yes_text,no_text,skip_on\n"
            "i002,Second.,,\n"
            "i001,First.,Not first.,Missing\n",
            encoding="utf-8",
        )
        table = load_template_table(path)
        assert table.render_order == ("i002", "i001")
        sentences = render_sentences({"i001": Response.NO, "i002": Response.YES}, table)
        assert sentences == ["Second.", "Not first."]


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
