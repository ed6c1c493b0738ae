import json
import os

import pytest
from conftest import data_dir
from hypothesis import given, settings
from hypothesis import strategies as st

from reportkg.corpus import ReportRecord, load_corpus
from reportkg.kg import canonicalize, load_kg, tokenize
from reportkg.labeler import (
    Labeler,
    ReportClass,
    SentenceLabel,
    label_corpus,
    label_report,
    label_sentence,
    sentence_spans,
    split_sentences,
)


def test_split_sentences_golden():
    with open(os.path.join(data_dir, "split5.json")) as f:
        golden = json.load(f)
    assert split_sentences(golden["text"]) == golden["sentences"]


@pytest.mark.parametrize(
    "text, expected",
    [
        ("", []),
        ("...", []),
        ("No effusion", ["No effusion"]),
        ("A. ; B!", ["A", "B"]),
    ],
)
def test_split_sentences(text, expected):
    assert split_sentences(text) == expected


def test_sentence_spans_point_into_text():
    text = " Heart is normal.   Small effusion;no pneumothorax "
    spans = sentence_spans(text)
    assert [text[s:e] for s, e in spans] == [
        "Heart is normal",
        "Small effusion",
        "no pneumothorax",
    ]


def test_label_sentence_golden(seed_kg):
    label = label_sentence(seed_kg, "There are low lung volumes with broncho-vascular crowding")
    assert str(label) == "bronchovascular crowding-lung-low volume-lung"
    assert label.pairs == (
        ("bronchovascular crowding", "lung"),
        ("low volume", "lung"),
    )


@pytest.mark.parametrize(
    "sentence, expected",
    [
        ("The lungs are clear", "normal"),
        ("", "normal"),
        ("Heart size is normal", "normal"),
        ("Cardiac silhouette is enlarged", "cardiomegaly-heart"),
        # both triggers belong to the same entry
        ("Cardiomegaly, the heart is enlarged", "cardiomegaly-heart"),
        ("Effusion and more effusion", "effusion-pleural"),
        # the contained generic trigger is dropped
        ("Nodular opacity in the lung", "nodular opacity-lung"),
        ("Lobe opacity", "lobe opacity-lung"),
        ("Patchy air-space opacity", "opacity-airspace"),
        ("Aortic calcification", "calcification-mediastinum"),
        ("Calcification", "calcification-lung"),
    ],
)
def test_label_sentence(seed_kg, sentence, expected):
    assert str(label_sentence(seed_kg, sentence)) == expected


@pytest.mark.parametrize(
    "sentence, expected",
    [
        ("Opacity in the lung", "opacity-lung"),
        ("Opacity at the diaphragm", "opacity-diaphragm"),
        ("Opacity", "opacity-lung"),
        ("Opacities", "opacity-lung"),
        ("Opacity of the lung and diaphragm", "opacity-diaphragm-opacity-lung"),
        ("Nothing to see", "normal"),
    ],
)
def test_shared_trigger_organ_cues(toy_kg, sentence, expected):
    assert str(label_sentence(toy_kg, sentence)) == expected


def test_label_ignores_clause_order(seed_kg):
    a = label_sentence(seed_kg, "Small effusion and mild cardiomegaly")
    b = label_sentence(seed_kg, "Mild cardiomegaly and small effusion")
    assert a == b
    assert str(a) == "cardiomegaly-heart-effusion-pleural"


def _canonical_rendering(kg, sentence):
    return " ".join(canonicalize(kg, tokenize(sentence)))


@pytest.mark.parametrize(
    "sentence",
    [
        "Cardiac silhouette is enlarged",
        "broncho vascular crowding with opacities",
        "Broncho-vascular crowding and low lung volumes",
        "Bilateral pleural effusions",
        "Patchy air space opacities at the hemidiaphragms",
        "The lungs are clear",
    ],
)
def test_label_invariant_under_synonym_substitution(seed_kg, sentence):
    expected = label_sentence(seed_kg, sentence)
    assert label_sentence(seed_kg, _canonical_rendering(seed_kg, sentence)) == expected


def _sentence_words():
    kg = load_kg()
    words = set()
    for key, value in kg.synonyms.items():
        words.update(key.split(" "))
        words.update(value.split(" "))
    for entry in kg.entries:
        for trigger in entry.triggers:
            words.update(trigger.split(" "))
    words.update(["the", "is", "with", "and", "small", "left"])
    return sorted(words)


@settings(max_examples=300, deadline=None)
@given(st.lists(st.sampled_from(_sentence_words()), max_size=10).map(" ".join))
def test_label_invariant_under_synonym_substitution_property(sentence):
    kg = load_kg()
    assert label_sentence(kg, _canonical_rendering(kg, sentence)) == label_sentence(kg, sentence)


def test_sentence_label_from_pairs():
    label = SentenceLabel.from_pairs([("b", "x"), ("a", "y"), ("b", "x")])
    assert label.pairs == (("a", "y"), ("b", "x"))
    assert not label.is_normal
    assert SentenceLabel().is_normal
    assert str(SentenceLabel()) == "normal"


def test_report_class_inverted():
    assert ReportClass.DISEASE_FREE.inverted() is ReportClass.DISEASE_SPECIFIC
    assert ReportClass.DISEASE_SPECIFIC.inverted() is ReportClass.DISEASE_FREE
    assert str(ReportClass.DISEASE_FREE) == "disease-free"


def test_label_report(seed_kg):
    record = ReportRecord(id="x", text="Heart size is normal. Small left effusion.")
    labeled = label_report(seed_kg, record)
    assert labeled.id == "x"
    assert labeled.sentences == ("Heart size is normal", "Small left effusion")
    assert labeled.report_class is ReportClass.DISEASE_SPECIFIC
    assert labeled.disease_set == {("effusion", "pleural")}
    assert labeled.to_dict() == {
        "id": "x",
        "report_class": "disease-specific",
        "sentences": [
            {"text": "Heart size is normal", "label": "normal"},
            {"text": "Small left effusion", "label": "effusion-pleural"},
        ],
        "disease_set": [["effusion", "pleural"]],
    }


def test_empty_report_is_disease_free(seed_kg):
    labeled = label_report(seed_kg, ReportRecord(id="x", text=""))
    assert labeled.sentences == ()
    assert labeled.report_class is ReportClass.DISEASE_FREE
    assert labeled.disease_set == frozenset()


def _golden_labels():
    with open(os.path.join(data_dir, "reports10_labels.jsonl")) as f:
        return [json.loads(line) for line in f if line.strip()]


@pytest.mark.parametrize("threads", [1, 4])
def test_label_corpus_golden(seed_kg, threads):
    records = load_corpus(os.path.join(data_dir, "reports10.jsonl"))
    labeled = label_corpus(seed_kg, records, threads=threads)
    got = [
        {
            "id": r.id,
            "report_class": r.report_class.value,
            "labels": [str(label) for label in r.sentence_labels],
        }
        for r in labeled
    ]
    assert got == _golden_labels()


def test_labeler_logs_summary(seed_kg, config, caplog):
    records = load_corpus(os.path.join(data_dir, "reports10.jsonl"))
    labeler = Labeler(config=config)
    assert labeler.threads == 1
    labeled = labeler.label(seed_kg, iter(records))
    assert [r.id for r in labeled] == [r.id for r in records]
    assert "Labeled 10 reports: 6 disease-specific, 4 disease-free" in caplog.text
