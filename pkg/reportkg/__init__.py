"""
Knowledge graph based labeling, long-tail augmentation and clinical
evaluation of radiology reports.

The command line entry point is ``reportkg``; the library can be used
directly::

    from reportkg import load_kg, load_corpus, label_corpus

    kg = load_kg()
    labeled = label_corpus(kg, load_corpus("reports.jsonl"))
"""

# The main entry points are exported here, so users can import
# reportkg.load_kg instead of reportkg.kg.load_kg.
from ._version import __version__, version_info
from .augment import Augmenter, build_sentence_pool, eligible_buckets, run_augmentation
from .corpus import ReportRecord, corpus_stats, load_corpus, write_corpus
from .kg import load_kg, save_kg, validate_kg
from .labeler import Labeler, label_corpus, label_report, label_sentence
from .metrics import Evaluator, bleu_n, evaluate
from .pipeline import OracleClassifier, evaluate_pipeline, oracle_classifier, route
