"""
Disease-specific augmentation of a training corpus.

Every distinct wording of a disease sentence found in the training reports
is kept in a sentence pool, bucketed by its rendered sentence label. Rounds
then pick the scarcest bucket and emit new reports in which one sentence of
that bucket is swapped for each of its other wordings.
"""

import random
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Tuple

from traitlets import Integer, TraitError, validate
from traitlets.config import LoggingConfigurable

from .corpus import ReportRecord, count_pairs, render_histogram, share_of
from .exceptions import UsageError
from .labeler import SentenceLabel, label_corpus, sentence_spans
from .utils import round_fraction


def _normalize_format(sentence):
    return " ".join(sentence.lower().split())


@dataclass
class SentencePool:
    """
    Unique sentence formats per non-normal sentence label.

    `buckets` maps the rendered label to its formats in first-appearance
    order; `labels` keeps the parsed label of every bucket.
    """

    buckets: Dict[str, List[str]] = field(default_factory=dict)
    labels: Dict[str, SentenceLabel] = field(default_factory=dict)
    _seen: Dict[str, set] = field(default_factory=dict, init=False, repr=False)

    def add(self, label, sentence):
        """Insert `sentence` under `label`; returns False for a duplicate."""
        if label.is_normal:
            return False
        key = str(label)
        seen = self._seen.setdefault(key, set())
        normalized = _normalize_format(sentence)
        if normalized in seen:
            return False
        seen.add(normalized)
        self.buckets.setdefault(key, []).append(sentence)
        self.labels[key] = label
        return True

    def label_count(self, key):
        return len(self.buckets[key])

    def __contains__(self, key):
        return key in self.buckets

    def __len__(self):
        return len(self.buckets)


def pool_from_labeled(labeled_reports):
    pool = SentencePool()
    for labeled in labeled_reports:
        for sentence, label in zip(labeled.sentences, labeled.sentence_labels):
            pool.add(label, sentence)
    return pool


def build_sentence_pool(kg, records, threads=None):
    """Label `records` and collect their disease sentences into a pool."""
    return pool_from_labeled(label_corpus(kg, records, threads))


def eligible_buckets(pool, min_count=5, max_count=100):
    """
    Keys of the buckets whose label count lies in [min_count, max_count],
    fewest formats first, ties by key.
    """
    if min_count > max_count:
        raise ValueError(
            f"min_count ({min_count}) must not exceed max_count ({max_count})"
        )
    keys = [
        key
        for key in pool.buckets
        if min_count <= pool.label_count(key) <= max_count
    ]
    return sorted(keys, key=lambda key: (pool.label_count(key), key))


class _SyntheticIds:
    """Hands out `<source>#aug<n>` ids that collide with nothing taken so far."""

    def __init__(self, taken):
        self.taken = set(taken)
        self._next = Counter()

    def next(self, source_id):
        while True:
            self._next[source_id] += 1
            candidate = f"{source_id}#aug{self._next[source_id]}"
            if candidate not in self.taken:
                self.taken.add(candidate)
                return candidate


def _variants(labeled_reports, pool, bucket_key):
    """
    Every (source record, new text) substitution for `bucket_key`, ordered by
    source, then occurrence, then alternate; and the occurrence count.
    """
    formats = pool.buckets.get(bucket_key, [])
    variants = []
    occurrences = 0
    if len(formats) < 2:
        return variants, occurrences
    for labeled in labeled_reports:
        text = labeled.record.text
        spans = sentence_spans(text)
        for (start, end), label in zip(spans, labeled.sentence_labels):
            if str(label) != bucket_key:
                continue
            occurrences += 1
            source = _normalize_format(text[start:end])
            for alternate in formats:
                if _normalize_format(alternate) == source:
                    continue
                variants.append((labeled.record, text[:start] + alternate + text[end:]))
    return variants, occurrences


def _emit(labeled_reports, pool, bucket_key, ids, max_variants=None, rng=None):
    variants, occurrences = _variants(labeled_reports, pool, bucket_key)
    candidates = len(variants)
    if max_variants is not None and candidates > max_variants:
        if rng is None:
            raise ValueError("sampling variants requires a seeded random generator")
        keep = sorted(rng.sample(range(candidates), max_variants))
        variants = [variants[i] for i in keep]
    synthetic = [
        ReportRecord(id=ids.next(record.id), text=text, split="train", images=record.images)
        for record, text in variants
    ]
    return synthetic, occurrences, candidates


def augment_round(
    kg, records, pool, bucket_key, max_variants=None, rng=None, threads=None
):
    """
    Synthetic reports for one bucket.

    For each occurrence of a sentence labeled `bucket_key` in `records`, one
    report is emitted per other format of the bucket, with only that
    sentence replaced. A bucket with fewer than two formats yields nothing.
    """
    records = list(records)
    ids = _SyntheticIds(record.id for record in records)
    labeled = label_corpus(kg, records, threads)
    synthetic, _, _ = _emit(labeled, pool, bucket_key, ids, max_variants, rng)
    return synthetic


@dataclass(frozen=True)
class AugmentationRound:
    bucket: str
    occurrences: int
    formats: int
    emitted: int
    diseases: Tuple[Tuple[str, str], ...] = ()

    def to_dict(self):
        return {
            "bucket": self.bucket,
            "occurrences": self.occurrences,
            "formats": self.formats,
            "emitted": self.emitted,
            "diseases": [list(pair) for pair in self.diseases],
        }


@dataclass(frozen=True)
class AugmentationReport:
    rounds: Tuple[AugmentationRound, ...]
    diseases_covered: Tuple[Tuple[str, str], ...]
    counts_before: Dict[Tuple[str, str], int]
    counts_after: Dict[Tuple[str, str], int]
    common_threshold: int = 20
    tail_share_before: Optional[Fraction] = None
    tail_share_after: Optional[Fraction] = None

    @property
    def emitted(self):
        return sum(r.emitted for r in self.rounds)

    def histogram(self, width=50):
        """Before / after occurrence bars of every disease."""
        return render_histogram(self.counts_before, after=self.counts_after, width=width)

    def to_dict(self):
        def counts(c):
            return [
                {"disease": d, "organ": o, "count": n}
                for (d, o), n in sorted(c.items(), key=lambda item: (-item[1], item[0]))
            ]

        return {
            "rounds": [r.to_dict() for r in self.rounds],
            "emitted": self.emitted,
            "diseases_covered": [list(pair) for pair in self.diseases_covered],
            "counts_before": counts(self.counts_before),
            "counts_after": counts(self.counts_after),
            "common_threshold": self.common_threshold,
            "tail_share_before": round_fraction(self.tail_share_before),
            "tail_share_after": round_fraction(self.tail_share_after),
        }


def run_augmentation(
    kg,
    records,
    min_count=5,
    max_count=100,
    max_rounds=None,
    max_variants=None,
    seed=None,
    common_threshold=20,
    threads=None,
    log=None,
):
    """
    Augment the train split of `records` round by round.

    Each round processes the eligible bucket with the smallest priority
    (lowest current occurrence count among its diseases, then label count,
    then key), adds the emitted reports to the counts and marks the bucket's
    diseases augmented. Buckets whose diseases are all augmented already are
    skipped. Sources are always the original train reports.

    Returns the original records followed by every synthetic report, and an
    AugmentationReport.
    """
    if max_variants is not None and seed is None:
        raise UsageError("a seed is required when max_variants is set")
    records = list(records)
    train = [record for record in records if record.split == "train"]
    skipped = len(records) - len(train)
    if skipped and log:
        log.warning("%i non-train records are not used for augmentation", skipped)

    labeled_train = label_corpus(kg, train, threads)
    pool = pool_from_labeled(labeled_train)
    counts_before = count_pairs(labeled_train)
    counts = Counter(counts_before)
    eligible = eligible_buckets(pool, min_count, max_count)
    if log:
        log.info(
            "Sentence pool: %i buckets, %i eligible in [%i, %i]",
            len(pool),
            len(eligible),
            min_count,
            max_count,
        )

    ids = _SyntheticIds(record.id for record in records)
    rng = random.Random(seed) if seed is not None else None
    augmented = set()
    covered = []
    processed = set()
    rounds = []
    synthetic = []
    while max_rounds is None or len(rounds) < max_rounds:
        candidates = [
            key
            for key in eligible
            if key not in processed
            and not all(p in augmented for p in pool.labels[key].pairs)
        ]
        if not candidates:
            break

        def priority(key):
            pairs = pool.labels[key].pairs
            return (min(counts[p] for p in pairs), pool.label_count(key), key)

        if log:
            for key in candidates:
                log.debug("Bucket %s priority %s", key, priority(key)[:2])
        key = min(candidates, key=priority)
        processed.add(key)

        emitted, occurrences, _ = _emit(labeled_train, pool, key, ids, max_variants, rng)
        new = tuple(p for p in pool.labels[key].pairs if p not in augmented)
        augmented.update(new)
        covered.extend(new)
        counts.update(count_pairs(label_corpus(kg, emitted, threads)))
        synthetic.extend(emitted)
        rounds.append(
            AugmentationRound(
                bucket=key,
                occurrences=occurrences,
                formats=pool.label_count(key),
                emitted=len(emitted),
                diseases=new,
            )
        )
        if log:
            log.info(
                "Round %i: %s, %i occurrences x %i formats, %i new reports",
                len(rounds),
                key,
                occurrences,
                pool.label_count(key),
                len(emitted),
            )

    tail = [p for p, c in counts_before.items() if c < common_threshold]
    report = AugmentationReport(
        rounds=tuple(rounds),
        diseases_covered=tuple(covered),
        counts_before=dict(counts_before),
        counts_after=dict(counts),
        common_threshold=common_threshold,
        tail_share_before=share_of(counts_before, tail),
        tail_share_after=share_of(counts, tail),
    )
    return records + synthetic, report


class Augmenter(LoggingConfigurable):
    """
    Rebalances the long tail of a training corpus by sentence substitution.
    """

    min_count = Integer(
        5,
        config=True,
        help="""
        Smallest number of unique sentence formats a bucket needs to be
        augmented.
        """,
    )

    max_count = Integer(
        100,
        config=True,
        help="""
        Largest number of unique sentence formats a bucket may have to be
        augmented. Buckets with more formats are common enough already.
        """,
    )

    max_rounds = Integer(
        None,
        allow_none=True,
        config=True,
        help="""
        Stop after this many rounds. None runs until no eligible bucket is
        left.
        """,
    )

    max_variants = Integer(
        None,
        allow_none=True,
        config=True,
        help="""
        Cap on the number of reports emitted per round.

        When a round would emit more, a uniform sample of this size is kept.
        Requires `seed`.
        """,
    )

    seed = Integer(
        None,
        allow_none=True,
        config=True,
        help="""
        Seed of the random stream used when sampling variants.
        """,
    )

    common_threshold = Integer(
        20,
        config=True,
        help="""
        Occurrence count from which a disease counts as common. The tail
        share in the augmentation report is measured over the diseases below
        it in the original corpus.
        """,
    )

    threads = Integer(
        0,
        config=True,
        help="""
        Number of worker threads used to label reports. 0 uses the machine's
        parallelism.
        """,
    )

    @validate("min_count", "max_count", "common_threshold")
    def _validate_positive(self, proposal):
        if proposal.value < 1:
            raise TraitError(f"{proposal.trait.name} must be at least 1")
        return proposal.value

    @validate("max_rounds", "max_variants")
    def _validate_non_negative(self, proposal):
        if proposal.value is not None and proposal.value < 0:
            raise TraitError(f"{proposal.trait.name} must not be negative")
        return proposal.value

    def augment(self, kg, records):
        if self.min_count > self.max_count:
            raise UsageError(
                f"min_count ({self.min_count}) must not exceed max_count ({self.max_count})"
            )
        return run_augmentation(
            kg,
            records,
            min_count=self.min_count,
            max_count=self.max_count,
            max_rounds=self.max_rounds,
            max_variants=self.max_variants,
            seed=self.seed,
            common_threshold=self.common_threshold,
            threads=self.threads,
            log=self.log,
        )
