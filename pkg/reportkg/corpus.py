"""
Report corpora: reading and writing them, long-tail disease statistics, and
the split into disease-free / disease-specific training pools.

A corpus file holds one JSON object per line::

    {"id": "r1", "text": "No pneumothorax. Heart size normal.", "split": "train", "images": ["r1_0.png"]}
"""

import random
from collections import Counter
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Dict, List, Optional, Tuple

from .exceptions import InputFormatError
from .labeler import ReportClass, label_corpus
from .utils import atomic_write, dumps_jsonl, read_jsonl, render_template, round_fraction

SPLITS = ("train", "validation", "test")

# sentence classes of the long-tail statistics
D_FREE = "d_free"
D_COM = "d_com"
D_TAIL = "d_tail"


@dataclass(frozen=True)
class ReportRecord:
    id: str
    text: str
    split: str = "train"
    images: Tuple[str, ...] = ()

    def to_dict(self):
        d = {"id": self.id, "text": self.text, "split": self.split}
        if self.images:
            d["images"] = list(self.images)
        return d

    @classmethod
    def from_dict(cls, d, path=None, line=None):
        for key in ("id", "text", "split"):
            if key not in d:
                raise InputFormatError(f"missing key {key!r}", path=path, line=line)
        if not isinstance(d["id"], str) or not isinstance(d["text"], str):
            raise InputFormatError("'id' and 'text' must be strings", path=path, line=line)
        if d["split"] not in SPLITS:
            raise InputFormatError(
                f"split must be one of {', '.join(SPLITS)}, got {d['split']!r}",
                path=path,
                line=line,
            )
        images = d.get("images", [])
        if not isinstance(images, list) or not all(isinstance(i, str) for i in images):
            raise InputFormatError(
                "'images' must be an array of strings", path=path, line=line
            )
        return cls(id=d["id"], text=d["text"], split=d["split"], images=tuple(images))


def load_corpus(path):
    """
    Read a corpus file.

    Raises InputFormatError naming the line of a malformed record, or the id
    that occurs twice.
    """
    records = []
    seen = {}
    for lineno, obj in read_jsonl(path):
        record = ReportRecord.from_dict(obj, path=path, line=lineno)
        if record.id in seen:
            raise InputFormatError(
                f"duplicate id {record.id!r} (first seen on line {seen[record.id]})",
                path=path,
                line=lineno,
            )
        seen[record.id] = lineno
        records.append(record)
    return records


def write_corpus(records, path):
    """Write records in the corpus file format, atomically."""
    atomic_write(path, dumps_jsonl(record.to_dict() for record in records))


def assign_splits(records, ratios=(7, 1, 2), seed=0):
    """
    Reassign train / validation / test splits in the given proportions.

    A seeded shuffle picks which records go where; the number of records per
    split is rounded from the ratios with the remainder going to test. The
    input order is preserved in the output.
    """
    if len(ratios) != 3 or any(r < 0 for r in ratios) or sum(ratios) <= 0:
        raise ValueError(f"ratios must be three non-negative numbers, got {ratios!r}")
    records = list(records)
    n = len(records)
    total = sum(ratios)
    n_train = round(n * ratios[0] / total)
    n_validation = min(round(n * ratios[1] / total), n - n_train)
    order = list(range(n))
    random.Random(seed).shuffle(order)
    split_of = {}
    for rank, index in enumerate(order):
        if rank < n_train:
            split_of[index] = "train"
        elif rank < n_train + n_validation:
            split_of[index] = "validation"
        else:
            split_of[index] = "test"
    return [replace(record, split=split_of[i]) for i, record in enumerate(records)]


def partition_by_class(kg, records, threads=None):
    """
    Split records into (disease_free, disease_specific) lists by the class of
    their labeled report, preserving input order in both.
    """
    disease_free, disease_specific = [], []
    for labeled in label_corpus(kg, records, threads):
        if labeled.report_class is ReportClass.DISEASE_FREE:
            disease_free.append(labeled.record)
        else:
            disease_specific.append(labeled.record)
    return disease_free, disease_specific


def count_pairs(labeled_reports):
    """
    Sentence level (disease, organ) occurrence counts: a pair counts once per
    sentence whose label contains it.
    """
    counts = Counter()
    for labeled in labeled_reports:
        for label in labeled.sentence_labels:
            counts.update(label.pairs)
    return counts


def _sorted_counts(counts):
    return dict(sorted(counts.items(), key=lambda item: (-item[1], item[0])))


def share_of(counts, pairs):
    """Fraction of all occurrences in `counts` that belong to `pairs`.

    None when there are no occurrences at all.
    """
    total = sum(counts.values())
    if total == 0:
        return None
    return Fraction(sum(counts[p] for p in pairs if p in counts), total)


@dataclass(frozen=True)
class DiseaseStats:
    disease_counts: Dict[Tuple[str, str], int]
    sentence_class_counts: Dict[str, int]
    common_threshold: int
    # None stands for the undefined 0/0 share of a corpus without diseases
    common_share: Optional[Fraction]
    tail_share: Optional[Fraction]
    total_sentences: int = 0
    total_occurrences: int = 0
    rare_threshold: int = 10
    rare_fraction: Optional[Fraction] = None
    frequent_threshold: int = 100
    frequent_diseases: List[Tuple[str, str]] = field(default_factory=list)

    @property
    def common_diseases(self):
        return [p for p, c in self.disease_counts.items() if c >= self.common_threshold]

    @property
    def tail_diseases(self):
        return [p for p, c in self.disease_counts.items() if c < self.common_threshold]

    def to_dict(self):
        return {
            "disease_counts": [
                {"disease": d, "organ": o, "count": c}
                for (d, o), c in self.disease_counts.items()
            ],
            "sentence_class_counts": dict(self.sentence_class_counts),
            "total_sentences": self.total_sentences,
            "total_occurrences": self.total_occurrences,
            "common_threshold": self.common_threshold,
            "common_share": round_fraction(self.common_share),
            "tail_share": round_fraction(self.tail_share),
            "rare_threshold": self.rare_threshold,
            "rare_fraction": round_fraction(self.rare_fraction),
            "frequent_threshold": self.frequent_threshold,
            "frequent_diseases": [list(p) for p in self.frequent_diseases],
        }


def stats_from_labeled(
    labeled_reports, common_threshold=20, rare_threshold=10, frequent_threshold=100
):
    """corpus_stats over reports that are already labeled."""
    if common_threshold < 1:
        raise ValueError(f"common_threshold must be at least 1, got {common_threshold}")
    labeled_reports = list(labeled_reports)
    counts = count_pairs(labeled_reports)

    sentence_classes = Counter({D_FREE: 0, D_COM: 0, D_TAIL: 0})
    for labeled in labeled_reports:
        for label in labeled.sentence_labels:
            if label.is_normal:
                sentence_classes[D_FREE] += 1
            elif any(counts[p] >= common_threshold for p in label.pairs):
                sentence_classes[D_COM] += 1
            else:
                sentence_classes[D_TAIL] += 1

    common = [p for p, c in counts.items() if c >= common_threshold]
    common_share = share_of(counts, common)
    tail_share = None if common_share is None else 1 - common_share
    rare_fraction = None
    if counts:
        rare_fraction = Fraction(
            sum(1 for c in counts.values() if c < rare_threshold), len(counts)
        )
    ordered = _sorted_counts(counts)
    return DiseaseStats(
        disease_counts=ordered,
        sentence_class_counts=dict(sentence_classes),
        common_threshold=common_threshold,
        common_share=common_share,
        tail_share=tail_share,
        total_sentences=sum(sentence_classes.values()),
        total_occurrences=sum(counts.values()),
        rare_threshold=rare_threshold,
        rare_fraction=rare_fraction,
        frequent_threshold=frequent_threshold,
        frequent_diseases=[p for p, c in ordered.items() if c > frequent_threshold],
    )


def corpus_stats(
    kg,
    records,
    common_threshold=20,
    rare_threshold=10,
    frequent_threshold=100,
    threads=None,
):
    """
    Long-tail statistics of a corpus.

    A disease is common when it occurs in at least `common_threshold`
    sentences. A sentence is d_com when one of its pairs is common, d_tail
    when it has pairs but none is common, d_free otherwise.
    """
    return stats_from_labeled(
        label_corpus(kg, records, threads),
        common_threshold=common_threshold,
        rare_threshold=rare_threshold,
        frequent_threshold=frequent_threshold,
    )


def render_histogram(counts, after=None, width=50):
    """
    Render disease occurrence counts as text bars, most frequent first.

    With `after`, every bar also shows the count after augmentation, the way
    a before / after comparison is read.
    """
    ordered = _sorted_counts(after if after is not None else counts)
    peak = max(ordered.values(), default=0)
    rows = []
    for pair, count in ordered.items():
        before = counts.get(pair, 0)
        shown = count if after is not None else before
        rows.append(
            {
                "name": f"{pair[0]}-{pair[1]}",
                "bar": "#" * (round(width * shown / peak) if peak else 0),
                "before": before,
                "after_text": f" -> {count}" if after is not None else "",
            }
        )
    name_width = max((len(r["name"]) for r in rows), default=0)
    return render_template("histogram.txt.j2", rows=rows, name_width=name_width)
