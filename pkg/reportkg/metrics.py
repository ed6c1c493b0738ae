"""
Clinical evaluation of generated reports against a ground truth.

Both corpora are labeled with the knowledge graph and joined by id. Every
report pair falls into one confusion cell; Sensitivity, Diversity, their
harmonic mean DS and the Diagnostic Odds Ratio are computed from the counts
in exact rational arithmetic. BLEU-N is available alongside for comparison.
"""

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import FrozenSet, Optional, Tuple, Union

from sacrebleu.metrics import BLEU
from traitlets import Bool, Enum, Integer, TraitError, validate
from traitlets.config import LoggingConfigurable

from .exceptions import IdMismatchError
from .kg import tokenize
from .labeler import ReportClass, label_corpus
from .utils import render_template, round_fraction

MATCH_MODES = ("pair", "keyword", "strict")
DIVERSITY_MODES = ("reference-set", "kg-total")


class Cell(str, enum.Enum):
    TP = "tp"
    FP = "fp"
    TN = "tn"
    FN = "fn"


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @classmethod
    def from_cells(cls, cells):
        counts = {cell.value: 0 for cell in Cell}
        for cell in cells:
            counts[Cell(cell).value] += 1
        return cls(**counts)

    @property
    def total(self):
        return self.tp + self.fp + self.tn + self.fn

    def to_dict(self):
        return {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn}


def _matches(gt_set, gen_set, match_mode):
    if match_mode == "pair":
        return bool(gt_set & gen_set)
    if match_mode == "keyword":
        return bool({d for d, _ in gt_set} & {d for d, _ in gen_set})
    if match_mode == "strict":
        return gt_set == gen_set
    raise ValueError(f"unknown match mode {match_mode!r}, expected one of {MATCH_MODES}")


def classify_pair(gt, gen, match_mode="pair"):
    """
    Confusion cell of one generated report against its ground truth.

    A disease-specific ground truth is a true positive when the generated
    report matches at least one of its diseases (by (disease, organ) pair,
    by disease keyword alone, or by the whole disease set in strict mode).
    """
    if gt.id != gen.id:
        raise IdMismatchError(missing=[gt.id], extra=[gen.id])
    if gt.report_class is ReportClass.DISEASE_FREE:
        return Cell.TN if not gen.disease_set else Cell.FP
    if _matches(gt.disease_set, gen.disease_set, match_mode):
        return Cell.TP
    return Cell.FN


def sensitivity(cc):
    """TP / (TP + FN), or 0 without any disease-specific ground truth."""
    positives = cc.tp + cc.fn
    if positives == 0:
        return Fraction(0)
    return Fraction(cc.tp, positives)


@dataclass(frozen=True)
class Diversity:
    value: Fraction
    types: FrozenSet[Tuple[str, str]]
    denominator: int
    mode: str
    # the denominator was zero and `value` is the 0 sentinel
    undefined: bool = False


def diversity(gen_reports, mode="reference-set", kg=None, reference=None):
    """
    Share of the disease types a set of generated reports covers.

    In reference-set mode the types are counted against `reference`, the
    distinct (disease, organ) pairs of the ground truth; in kg-total mode
    against every pair of `kg`. Types outside the denominator set are not
    counted, so the value stays within [0, 1].
    """
    types = frozenset(pair for report in gen_reports for pair in report.disease_set)
    if mode == "reference-set":
        if reference is None:
            raise ValueError("reference-set diversity needs the reference disease types")
        universe = frozenset(reference)
    elif mode == "kg-total":
        if kg is None:
            raise ValueError("kg-total diversity needs a knowledge graph")
        universe = kg.disease_types()
    else:
        raise ValueError(
            f"unknown diversity mode {mode!r}, expected one of {DIVERSITY_MODES}"
        )
    if not universe:
        return Diversity(Fraction(0), types, 0, mode, undefined=True)
    return Diversity(Fraction(len(types & universe), len(universe)), types, len(universe), mode)


def ds(sen, div):
    """Harmonic mean of sensitivity and diversity; 0 when both are 0."""
    if sen + div == 0:
        return type(sen + div)(0)
    return 2 * sen * div / (sen + div)


def dor(cc, correction=False):
    """
    Diagnostic odds ratio TP*TN / (FP*FN).

    0 when TP*TN is 0, math.inf when only FP*FN is 0. With `correction`, 0.5
    is added to every cell first and the ratio is always finite and positive.
    """
    if correction:
        half = Fraction(1, 2)
        return ((cc.tp + half) * (cc.tn + half)) / ((cc.fp + half) * (cc.fn + half))
    numerator = cc.tp * cc.tn
    if numerator == 0:
        return Fraction(0)
    denominator = cc.fp * cc.fn
    if denominator == 0:
        return math.inf
    return Fraction(numerator, denominator)


def _aligned(gt_records, gen_records, what="generated corpus"):
    gt_by_id = {record.id: record for record in gt_records}
    gen_by_id = {record.id: record for record in gen_records}
    missing = gt_by_id.keys() - gen_by_id.keys()
    extra = gen_by_id.keys() - gt_by_id.keys()
    if missing or extra:
        raise IdMismatchError(missing, extra, what=what)
    ids = sorted(gt_by_id)
    return [gt_by_id[i] for i in ids], [gen_by_id[i] for i in ids]


def bleu_n(gen_records, gt_records, n=4):
    """
    Corpus BLEU-N of generated reports against the ground truth, in [0, 1].

    Texts are lowercased and tokenized the way the labeler tokenizes them.
    Precisions of order 2 and up are add-one smoothed.
    """
    if not 1 <= n <= 4:
        raise ValueError(f"BLEU order must be between 1 and 4, got {n}")
    gt_records, gen_records = _aligned(gt_records, gen_records)
    hypotheses = [" ".join(tokenize(record.text)) for record in gen_records]
    references = [" ".join(tokenize(record.text)) for record in gt_records]
    bleu = BLEU(
        max_ngram_order=n,
        smooth_method="add-k",
        smooth_value=1,
        tokenize="none",
        effective_order=False,
    )
    return bleu.corpus_score(hypotheses, [references]).score / 100


@dataclass(frozen=True)
class MetricsSummary:
    confusion: ConfusionCounts
    sensitivity: Fraction
    diversity: Fraction
    ds: Fraction
    dor: Union[Fraction, float]
    generated_disease_types: FrozenSet[Tuple[str, str]]
    diversity_mode: str = "reference-set"
    diversity_denominator: int = 0
    diversity_undefined: bool = False
    match_mode: str = "pair"
    dor_correction: bool = False
    bleu: Optional[float] = None
    bleu_order: Optional[int] = None
    name: Optional[str] = None

    def to_dict(self):
        d = {}
        if self.name is not None:
            d["name"] = self.name
        d.update(
            {
                "confusion": self.confusion.to_dict(),
                "sensitivity": round_fraction(self.sensitivity),
                "diversity": round_fraction(self.diversity),
                "ds": round_fraction(self.ds),
                "dor": round_fraction(self.dor),
                "dor_correction": self.dor_correction,
                "match_mode": self.match_mode,
                "diversity_mode": self.diversity_mode,
                "diversity_denominator": self.diversity_denominator,
                "diversity_undefined": self.diversity_undefined,
                "generated_disease_types": [
                    list(pair) for pair in sorted(self.generated_disease_types)
                ],
            }
        )
        if self.bleu_order is not None:
            d[f"bleu_{self.bleu_order}"] = round(self.bleu, 4)
        return d


def evaluate(
    kg,
    gt_records,
    gen_records,
    diversity_mode="reference-set",
    match_mode="pair",
    dor_correction=False,
    bleu_order=None,
    threads=None,
    name=None,
    log=None,
):
    """
    Evaluate a generated corpus against its ground truth.

    Both corpora must hold the same ids; the join is by id so record order
    does not matter.
    """
    if match_mode not in MATCH_MODES:
        raise ValueError(f"unknown match mode {match_mode!r}, expected one of {MATCH_MODES}")
    gt_records, gen_records = _aligned(gt_records, gen_records)
    gt_labeled = label_corpus(kg, gt_records, threads)
    gen_labeled = label_corpus(kg, gen_records, threads)

    confusion = ConfusionCounts.from_cells(
        classify_pair(gt, gen, match_mode) for gt, gen in zip(gt_labeled, gen_labeled)
    )
    reference = frozenset(pair for report in gt_labeled for pair in report.disease_set)
    div = diversity(gen_labeled, mode=diversity_mode, kg=kg, reference=reference)
    sen = sensitivity(confusion)
    odds = dor(confusion, correction=dor_correction)
    if log:
        if div.undefined:
            log.warning("Diversity denominator is 0 in %s mode, reporting 0", diversity_mode)
        if odds == math.inf:
            log.warning("No false positives or no false negatives: DOR is infinite")

    bleu = None
    if bleu_order is not None:
        bleu = bleu_n(gen_records, gt_records, bleu_order)

    return MetricsSummary(
        confusion=confusion,
        sensitivity=sen,
        diversity=div.value,
        ds=ds(sen, div.value),
        dor=odds,
        generated_disease_types=div.types,
        diversity_mode=diversity_mode,
        diversity_denominator=div.denominator,
        diversity_undefined=div.undefined,
        match_mode=match_mode,
        dor_correction=dor_correction,
        bleu=bleu,
        bleu_order=bleu_order,
        name=name,
    )


def _format_value(value):
    rendered = round_fraction(value)
    if isinstance(rendered, str):
        return rendered
    return f"{rendered:.4f}"


def render_table(summaries):
    """
    One row per evaluated system with the columns Method, DOR, DS, Sen.,
    Div. and, when every summary has one, BLEU-N.
    """
    summaries = list(summaries)
    bleu_orders = {s.bleu_order for s in summaries}
    bleu_order = bleu_orders.pop() if len(bleu_orders) == 1 else None
    header = ["Method", "DOR", "DS", "Sen.", "Div."]
    if bleu_order is not None:
        header.append(f"BLEU-{bleu_order}")
    rows = []
    for i, s in enumerate(summaries):
        row = [
            s.name or f"system-{i + 1}",
            _format_value(s.dor),
            _format_value(s.ds),
            _format_value(s.sensitivity),
            _format_value(s.diversity),
        ]
        if bleu_order is not None:
            row.append(_format_value(s.bleu))
        rows.append(row)
    widths = [max(len(r[c]) for r in [header] + rows) for c in range(len(header))]
    return render_template("metrics_table.txt.j2", header=header, rows=rows, widths=widths)


class Evaluator(LoggingConfigurable):
    """Scores generated corpora against a ground truth."""

    diversity_mode = Enum(
        list(DIVERSITY_MODES),
        default_value="reference-set",
        config=True,
        help="""
        Denominator of Diversity.

        - `reference-set`: the distinct disease types of the ground truth
        - `kg-total`: every (disease, organ) pair of the knowledge graph
        """,
    )

    match_mode = Enum(
        list(MATCH_MODES),
        default_value="pair",
        config=True,
        help="""
        When a generated report counts as a true positive.

        - `pair`: it shares a (disease, organ) pair with the ground truth
        - `keyword`: it shares a disease keyword, whatever the organ
        - `strict`: its disease set equals the ground truth's
        """,
    )

    dor_correction = Bool(
        False,
        config=True,
        help="""
        Add 0.5 to every confusion cell before computing the DOR, so it stays
        finite and non-zero.
        """,
    )

    bleu_order = Integer(
        None,
        allow_none=True,
        config=True,
        help="""
        Also report corpus BLEU up to this n-gram order (1 to 4).
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

    @validate("bleu_order")
    def _validate_bleu_order(self, proposal):
        if proposal.value is not None and not 1 <= proposal.value <= 4:
            raise TraitError(f"bleu_order must be between 1 and 4, got {proposal.value}")
        return proposal.value

    def evaluate(self, kg, gt_records, gen_records, name=None):
        summary = evaluate(
            kg,
            gt_records,
            gen_records,
            diversity_mode=self.diversity_mode,
            match_mode=self.match_mode,
            dor_correction=self.dor_correction,
            bleu_order=self.bleu_order,
            threads=self.threads,
            name=name,
            log=self.log,
        )
        self.log.info(
            "Evaluated %s: %i reports, Sen. %.4f, Div. %.4f",
            name or "generated corpus",
            summary.confusion.total,
            summary.sensitivity,
            summary.diversity,
        )
        return summary

    def evaluate_many(self, kg, gt_records, systems):
        """Evaluate every (name, records) system against one ground truth."""
        gt_records = list(gt_records)
        return [
            self.evaluate(kg, gt_records, records, name=name) for name, records in systems
        ]
