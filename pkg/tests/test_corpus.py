import json
import os
from collections import Counter
from fractions import Fraction

import pytest
from conftest import (
    CARDIOMEGALY_FORMAT,
    NORMAL_SENTENCE,
    PNEUMOTHORAX_FORMATS,
    data_dir,
    make_records,
    write_jsonl,
)
from hypothesis import given, settings
from hypothesis import strategies as st

from reportkg.corpus import (
    D_COM,
    D_FREE,
    D_TAIL,
    ReportRecord,
    assign_splits,
    corpus_stats,
    load_corpus,
    partition_by_class,
    render_histogram,
    write_corpus,
)
from reportkg.exceptions import InputFormatError
from reportkg.labeler import label_sentence, split_sentences

CARDIOMEGALY = ("cardiomegaly", "heart")
PNEUMOTHORAX = ("pneumothorax", "pleural")


def test_load_corpus(tmp_path):
    path = write_jsonl(
        tmp_path / "c.jsonl",
        [
            {"id": "r1", "text": "No effusion.", "split": "train"},
            {"id": "r2", "text": "Heart normal.", "split": "test", "images": ["r2.png"]},
            {"id": "r3", "text": "", "split": "validation"},
        ],
    )
    records = load_corpus(path)
    assert [r.id for r in records] == ["r1", "r2", "r3"]
    assert records[1].images == ("r2.png",)
    assert records[0].images == ()


def test_corpus_round_trip(tmp_path):
    first = load_corpus(os.path.join(data_dir, "reports10.jsonl"))
    path = str(tmp_path / "out.jsonl")
    write_corpus(first, path)
    assert load_corpus(path) == first
    # no temporary files left behind
    assert os.listdir(tmp_path) == ["out.jsonl"]


def test_duplicate_id(tmp_path):
    path = write_jsonl(
        tmp_path / "c.jsonl",
        [
            {"id": "r1", "text": "a", "split": "train"},
            {"id": "r1", "text": "b", "split": "train"},
        ],
    )
    with pytest.raises(InputFormatError, match="duplicate id 'r1'") as exc_info:
        load_corpus(path)
    assert exc_info.value.line == 2


@pytest.mark.parametrize(
    "line, message",
    [
        ('{"id": "r1", "text": "a"}', "missing key 'split'"),
        ('{"id": 1, "text": "a", "split": "train"}', "must be strings"),
        ('{"id": "r1", "text": "a", "split": "dev"}', "split must be one of"),
        ('{"id": "r1", "text": "a", "split": "train", "images": "x"}', "'images'"),
        ('["r1"]', "expected a JSON object"),
        ('{"id": "r1",', "malformed JSON"),
    ],
)
def test_malformed_line(tmp_path, line, message):
    path = tmp_path / "c.jsonl"
    path.write_text('{"id": "r0", "text": "ok", "split": "train"}\n\n' + line + "\n")
    with pytest.raises(InputFormatError) as exc_info:
        load_corpus(str(path))
    assert message in str(exc_info.value)
    assert f"{path}:3:" in str(exc_info.value)


def test_record_to_dict_omits_empty_images():
    assert ReportRecord(id="a", text="t").to_dict() == {
        "id": "a",
        "text": "t",
        "split": "train",
    }


def test_corpus_stats_common_and_tail(seed_kg):
    records = make_records([f"{CARDIOMEGALY_FORMAT}." for _ in range(30)], prefix="a")
    records += make_records([f"{PNEUMOTHORAX_FORMATS[0]}." for _ in range(5)], prefix="b")
    stats = corpus_stats(seed_kg, records, threads=1)
    assert stats.disease_counts == {CARDIOMEGALY: 30, PNEUMOTHORAX: 5}
    assert stats.common_diseases == [CARDIOMEGALY]
    assert stats.tail_diseases == [PNEUMOTHORAX]
    assert stats.common_share == Fraction(30, 35)
    assert stats.common_share + stats.tail_share == 1
    assert stats.sentence_class_counts == {D_FREE: 0, D_COM: 30, D_TAIL: 5}
    assert stats.total_sentences == 35
    assert stats.total_occurrences == 35
    assert stats.rare_fraction == Fraction(1, 2)
    assert stats.frequent_diseases == []

    d = stats.to_dict()
    assert d["disease_counts"][0] == {"disease": "cardiomegaly", "organ": "heart", "count": 30}
    assert d["common_share"] == 0.8571
    assert d["tail_share"] == 0.1429


def test_corpus_stats_all_normal(seed_kg):
    records = make_records(["The lungs are clear. Heart size is normal.", "Normal chest."])
    stats = corpus_stats(seed_kg, records, threads=1)
    assert stats.disease_counts == {}
    assert stats.sentence_class_counts == {D_FREE: 3, D_COM: 0, D_TAIL: 0}
    assert stats.common_share is None
    assert stats.tail_share is None
    d = stats.to_dict()
    assert d["common_share"] == "0/0"
    assert d["tail_share"] == "0/0"
    assert d["rare_fraction"] == "0/0"


def test_corpus_stats_one_sentence_two_pairs(seed_kg):
    records = make_records(["There are low lung volumes with broncho-vascular crowding."])
    stats = corpus_stats(seed_kg, records, threads=1)
    assert stats.disease_counts == {
        ("bronchovascular crowding", "lung"): 1,
        ("low volume", "lung"): 1,
    }


def test_corpus_stats_counts_once_per_sentence(seed_kg):
    records = make_records(["Effusion, effusion and effusions. Effusion."])
    stats = corpus_stats(seed_kg, records, threads=1)
    assert stats.disease_counts == {("effusion", "pleural"): 2}


def test_corpus_stats_bad_threshold(seed_kg):
    with pytest.raises(ValueError):
        corpus_stats(seed_kg, [], common_threshold=0)


def test_stats_conservation(seed_kg):
    records = load_corpus(os.path.join(data_dir, "reports10.jsonl"))
    stats = corpus_stats(seed_kg, records, threads=1)
    recount = Counter()
    for record in records:
        for sentence in split_sentences(record.text):
            recount.update(label_sentence(seed_kg, sentence).pairs)
    assert stats.disease_counts == dict(recount)
    assert stats.total_occurrences == sum(recount.values())
    assert sum(stats.sentence_class_counts.values()) == 17


def test_threshold_monotonicity(seed_kg):
    records = make_records([f"{CARDIOMEGALY_FORMAT}." for _ in range(30)], prefix="a")
    records += make_records([f"{PNEUMOTHORAX_FORMATS[0]}." for _ in range(5)], prefix="b")
    records += make_records(["Small effusion." for _ in range(12)], prefix="c")
    shares = [
        corpus_stats(seed_kg, records, common_threshold=t, threads=1).common_share
        for t in range(1, 40)
    ]
    assert all(a >= b for a, b in zip(shares, shares[1:]))
    assert shares[0] == 1
    assert shares[-1] == 0


def test_partition_by_class(seed_kg):
    records = make_records(
        [
            "The lungs are clear.",
            "Small effusion.",
            "Normal chest.",
            "Cardiomegaly is present.",
            "Heart normal. Mild kyphosis.",
        ]
    )
    free, specific = partition_by_class(seed_kg, records, threads=1)
    assert [r.id for r in free] == ["r1", "r3"]
    assert [r.id for r in specific] == ["r2", "r4", "r5"]
    assert partition_by_class(seed_kg, [], threads=1) == ([], [])


_sentences = [
    NORMAL_SENTENCE,
    CARDIOMEGALY_FORMAT,
    "Heart size is normal",
    "Small effusion",
    "No acute findings",
    "Mild kyphosis",
]


@settings(max_examples=100, deadline=None)
@given(st.lists(st.lists(st.sampled_from(_sentences), max_size=3), max_size=12))
def test_partition_property(seed_kg, texts):
    records = make_records([". ".join(sentences) for sentences in texts])
    free, specific = partition_by_class(seed_kg, records, threads=1)
    assert not {r.id for r in free} & {r.id for r in specific}
    position = {r.id: i for i, r in enumerate(records)}
    assert sorted(free + specific, key=lambda r: position[r.id]) == records
    for part in (free, specific):
        assert [position[r.id] for r in part] == sorted(position[r.id] for r in part)


def test_assign_splits():
    records = make_records([f"report {i}" for i in range(10)], split="test")
    assigned = assign_splits(records, seed=3)
    assert [r.id for r in assigned] == [r.id for r in records]
    assert Counter(r.split for r in assigned) == {"train": 7, "validation": 1, "test": 2}
    assert assign_splits(records, seed=3) == assigned
    assert [r.text for r in assigned] == [r.text for r in records]


def test_assign_splits_remainder_goes_to_test():
    records = make_records([f"report {i}" for i in range(3)])
    assigned = assign_splits(records, ratios=(1, 1, 1), seed=0)
    assert sorted(r.split for r in assigned) == ["test", "train", "validation"]


@pytest.mark.parametrize("ratios", [(7, 1), (1, -1, 1), (0, 0, 0)])
def test_assign_splits_bad_ratios(ratios):
    with pytest.raises(ValueError):
        assign_splits([], ratios=ratios)


def test_render_histogram():
    counts = {("effusion", "pleural"): 8, CARDIOMEGALY: 50}
    assert render_histogram(counts, width=10) == (
        "cardiomegaly-heart |########## 50\n"
        "effusion-pleural   |## 8\n"
    )


def test_render_histogram_before_after():
    before = {CARDIOMEGALY: 50, PNEUMOTHORAX: 5}
    after = {CARDIOMEGALY: 50, PNEUMOTHORAX: 25}
    lines = render_histogram(before, after, width=10).splitlines()
    assert lines == [
        "cardiomegaly-heart   |########## 50 -> 50",
        "pneumothorax-pleural |##### 5 -> 25",
    ]


def test_render_histogram_empty():
    assert render_histogram({}) == "(no disease occurrences)\n"


def test_stats_json_is_serializable(seed_kg):
    records = load_corpus(os.path.join(data_dir, "reports10.jsonl"))
    stats = corpus_stats(seed_kg, records, threads=1)
    json.dumps(stats.to_dict())
