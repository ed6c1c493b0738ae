"""
Two-stage generation harness.

A classifier decides per case whether the report should be disease-free or
disease-specific, and the output of the matching generator is taken. Both
the classifier and the generators are file backed here: decisions come from
a decisions file (or the oracle classifier below) and generator outputs are
corpus files.

A decisions file holds one JSON object per line::

    {"id": "r1", "decision": "disease-specific"}
"""

import random
from dataclasses import dataclass

from traitlets import Float, Integer, TraitError, validate
from traitlets.config import LoggingConfigurable

from .exceptions import IdMismatchError, InputFormatError, UsageError
from .labeler import ReportClass, label_corpus
from .metrics import evaluate
from .utils import atomic_write, dumps_jsonl, read_jsonl


@dataclass(frozen=True)
class RoutingCase:
    id: str
    classifier_decision: ReportClass
    chosen_output: str
    # generator channel the output was taken from
    source: str

    def to_dict(self):
        return {
            "id": self.id,
            "classifier_decision": self.classifier_decision.value,
            "chosen_output": self.chosen_output,
            "source": self.source,
        }


def oracle_classifier(kg, gt_records, flip_rate=0.0, seed=0, threads=None):
    """
    Decisions equal to the ground-truth report class, each flipped
    independently with probability `flip_rate`.

    One draw of a `random.Random(seed)` stream is used per case, in input
    order, so the decisions only depend on the seed and the corpus.
    """
    return _flip(label_corpus(kg, gt_records, threads), flip_rate, seed)


def _flip(labeled_reports, flip_rate, seed):
    if not 0 <= flip_rate <= 1:
        raise ValueError(f"flip_rate must be within [0, 1], got {flip_rate}")
    rng = random.Random(seed)
    decisions = {}
    for labeled in labeled_reports:
        decision = labeled.report_class
        if rng.random() < flip_rate:
            decision = decision.inverted()
        decisions[labeled.id] = decision
    return decisions


def load_decisions(path):
    """Read a decisions file into an id -> ReportClass map, in file order."""
    decisions = {}
    for lineno, obj in read_jsonl(path):
        if "id" not in obj or "decision" not in obj:
            raise InputFormatError("expected keys 'id' and 'decision'", path=path, line=lineno)
        try:
            decision = ReportClass(obj["decision"])
        except ValueError:
            raise InputFormatError(
                f"decision must be one of {', '.join(c.value for c in ReportClass)}, "
                f"got {obj['decision']!r}",
                path=path,
                line=lineno,
            )
        if obj["id"] in decisions:
            raise InputFormatError(f"duplicate id {obj['id']!r}", path=path, line=lineno)
        decisions[obj["id"]] = decision
    return decisions


def write_decisions(decisions, path):
    atomic_write(
        path,
        dumps_jsonl(
            {"id": id_, "decision": ReportClass(decision).value}
            for id_, decision in decisions.items()
        ),
    )


def _by_id(records, ids, what):
    by_id = {record.id: record for record in records}
    missing = ids - by_id.keys()
    extra = by_id.keys() - ids
    if missing or extra:
        raise IdMismatchError(missing, extra, what=what)
    return by_id


def route(decisions, free_outputs, specific_outputs, log=None):
    """
    Pick every case's report from the generator its decision names.

    Returns the routed corpus and the RoutingCase log, both in the order of
    `decisions`. Cases a classifier wrongly sends to the disease-free
    generator are routed as decided.
    """
    ids = set(decisions)
    free = _by_id(free_outputs, ids, "disease-free outputs")
    specific = _by_id(specific_outputs, ids, "disease-specific outputs")
    routed = []
    cases = []
    for id_, decision in decisions.items():
        decision = ReportClass(decision)
        channel = specific if decision is ReportClass.DISEASE_SPECIFIC else free
        record = channel[id_]
        if log:
            log.debug("Routing %s to the %s generator", id_, decision.value)
        routed.append(record)
        cases.append(
            RoutingCase(
                id=id_,
                classifier_decision=decision,
                chosen_output=record.text,
                source=decision.value,
            )
        )
    return routed, cases


def write_routing_log(cases, path):
    atomic_write(path, dumps_jsonl(case.to_dict() for case in cases))


def evaluate_pipeline(
    kg, gt_records, decisions, free_outputs, specific_outputs, log=None, **evaluate_kwargs
):
    """Route the generator outputs, then evaluate the routed corpus."""
    routed, _ = route(decisions, free_outputs, specific_outputs, log=log)
    return evaluate(kg, gt_records, routed, log=log, **evaluate_kwargs)


class OracleClassifier(LoggingConfigurable):
    """
    Stand-in for an image classifier: the ground-truth class, with a
    controllable error rate.
    """

    flip_rate = Float(
        0.0,
        config=True,
        help="""
        Probability with which each decision is inverted. 0 is a perfect
        classifier.
        """,
    )

    seed = Integer(
        None,
        allow_none=True,
        config=True,
        help="""
        Seed of the random stream deciding which cases are flipped. Required
        when flip_rate is above 0.
        """,
    )

    threads = Integer(
        0,
        config=True,
        help="""
        Number of worker threads used to label the ground truth.
        """,
    )

    @validate("flip_rate")
    def _validate_flip_rate(self, proposal):
        if not 0 <= proposal.value <= 1:
            raise TraitError(f"flip_rate must be within [0, 1], got {proposal.value}")
        return proposal.value

    def classify(self, kg, gt_records):
        if self.flip_rate > 0 and self.seed is None:
            raise UsageError("a seed is required when flip_rate is above 0")
        labeled = label_corpus(kg, gt_records, self.threads)
        decisions = _flip(labeled, self.flip_rate, self.seed or 0)
        flipped = sum(1 for r in labeled if decisions[r.id] is not r.report_class)
        self.log.info(
            "Oracle classifier: %i decisions, %i flipped (flip rate %s)",
            len(decisions),
            flipped,
            self.flip_rate,
        )
        return decisions
