"""
Rule based sentence and report labeling against a knowledge graph.

A sentence is labeled with the sorted (disease, organ) pairs whose KG
triggers occur in it after synonym canonicalization, or as normal when no
trigger occurs. A report is disease-free when all of its sentences are
normal, and disease-specific otherwise.
"""

import enum
import re
from dataclasses import dataclass
from typing import TYPE_CHECKING, FrozenSet, Tuple

from traitlets import Integer
from traitlets.config import LoggingConfigurable

from .kg import NORMAL, canonicalize, tokenize
from .utils import parallel_map

if TYPE_CHECKING:
    from .corpus import ReportRecord

_sentence_pattern = re.compile(r"[^.!?;]+")


class ReportClass(str, enum.Enum):
    DISEASE_FREE = "disease-free"
    DISEASE_SPECIFIC = "disease-specific"

    def inverted(self):
        if self is ReportClass.DISEASE_FREE:
            return ReportClass.DISEASE_SPECIFIC
        return ReportClass.DISEASE_FREE

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class SentenceLabel:
    """
    Canonical label of one sentence: (disease, organ) pairs sorted by disease
    keyword then organ, without duplicates. No pairs means normal.
    """

    pairs: Tuple[Tuple[str, str], ...] = ()

    @classmethod
    def from_pairs(cls, pairs):
        return cls(tuple(sorted(set(pairs))))

    @property
    def is_normal(self):
        return not self.pairs

    def __str__(self):
        if not self.pairs:
            return NORMAL
        return "-".join(f"{disease}-{organ}" for disease, organ in self.pairs)


NORMAL_LABEL = SentenceLabel()


@dataclass(frozen=True)
class LabeledReport:
    record: "ReportRecord"
    sentences: Tuple[str, ...]
    sentence_labels: Tuple[SentenceLabel, ...]
    report_class: ReportClass
    disease_set: FrozenSet[Tuple[str, str]]

    @property
    def id(self):
        return self.record.id

    def to_dict(self):
        return {
            "id": self.record.id,
            "report_class": self.report_class.value,
            "sentences": [
                {"text": text, "label": str(label)}
                for text, label in zip(self.sentences, self.sentence_labels)
            ],
            "disease_set": [list(pair) for pair in sorted(self.disease_set)],
        }


def sentence_spans(text):
    """
    (start, end) character offsets of every non-empty sentence of `text`,
    trimmed of surrounding whitespace.
    """
    spans = []
    for match in _sentence_pattern.finditer(text):
        segment = match.group()
        stripped = segment.strip()
        if not stripped:
            continue
        start = match.start() + (len(segment) - len(segment.lstrip()))
        spans.append((start, start + len(stripped)))
    return spans


def split_sentences(text):
    """Split report text on '.', '!', '?' and ';', dropping empty segments."""
    return [text[start:end] for start, end in sentence_spans(text)]


def _find_phrase(tokens, phrase_tokens):
    """Start offsets of every contiguous occurrence of phrase_tokens."""
    n, m = len(tokens), len(phrase_tokens)
    return [
        i for i in range(n - m + 1) if tuple(tokens[i : i + m]) == phrase_tokens
    ]


def _contains(tokens, phrase):
    return bool(_find_phrase(tokens, tuple(phrase.split(" "))))


def label_sentence(kg, sentence):
    """
    Label one sentence.

    Every trigger occurrence is located in the canonicalized tokens; an
    occurrence lying inside a longer trigger occurrence is dropped. A trigger
    owned by a single entry fires it. A trigger shared by several entries
    fires those whose organ cues occur in the sentence, else the entry marked
    default_organ.
    """
    tokens = canonicalize(kg, tokenize(sentence))
    occurrences = []
    for trigger in kg._entries_by_trigger:
        phrase = tuple(trigger.split(" "))
        for start in _find_phrase(tokens, phrase):
            occurrences.append((start, start + len(phrase), trigger))

    surviving = set()
    for start, end, trigger in occurrences:
        contained = any(
            s <= start and end <= e and (e - s) > (end - start)
            for s, e, _ in occurrences
        )
        if not contained:
            surviving.add(trigger)

    pairs = set()
    for trigger in surviving:
        entries = kg.entries_for_trigger(trigger)
        if len(entries) == 1:
            pairs.add(entries[0].pair)
            continue
        cued = [
            e for e in entries if any(_contains(tokens, cue) for cue in e.organ_cues)
        ]
        if cued:
            pairs.update(e.pair for e in cued)
        else:
            pairs.update(e.pair for e in entries if e.default_organ)
    return SentenceLabel.from_pairs(pairs)


def label_report(kg, record):
    """Split a record's text into sentences and label each of them."""
    sentences = tuple(split_sentences(record.text))
    labels = tuple(label_sentence(kg, s) for s in sentences)
    disease_set = frozenset(pair for label in labels for pair in label.pairs)
    report_class = (
        ReportClass.DISEASE_SPECIFIC if disease_set else ReportClass.DISEASE_FREE
    )
    return LabeledReport(
        record=record,
        sentences=sentences,
        sentence_labels=labels,
        report_class=report_class,
        disease_set=disease_set,
    )


def label_corpus(kg, records, threads=None):
    """Label every record, in input order, fanned out over `threads`."""
    return parallel_map(lambda record: label_report(kg, record), records, threads)


class Labeler(LoggingConfigurable):
    """
    Labels corpora with a knowledge graph.

    Labeling is pure per report, so it is spread over a thread pool; results
    always come back in input order.
    """

    threads = Integer(
        0,
        config=True,
        help="""
        Number of worker threads used to label reports.

        0 uses the machine's parallelism, 1 labels inline.
        """,
    )

    def label(self, kg, records):
        records = list(records)
        labeled = label_corpus(kg, records, threads=self.threads)
        n_specific = sum(
            1 for r in labeled if r.report_class is ReportClass.DISEASE_SPECIFIC
        )
        self.log.info(
            "Labeled %i reports: %i disease-specific, %i disease-free",
            len(labeled),
            n_specific,
            len(labeled) - n_specific,
        )
        return labeled
