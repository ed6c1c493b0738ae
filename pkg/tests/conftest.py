"""pytest fixtures for reportkg"""

import json
import logging
import os

import pytest
from traitlets.config import Config

from reportkg.corpus import ReportRecord
from reportkg.kg import BASE_CATEGORIES, kg_from_dict, load_kg

here = os.path.abspath(os.path.dirname(__file__))
data_dir = os.path.join(here, "data")

# one format per line, each labeled with exactly one (disease, organ) pair
# by the seed knowledge graph
EFFUSION_FORMATS = [
    "There is a small left effusion",
    "Small right effusion is present",
    "Bilateral effusions are noted",
    "A trace effusion persists",
    "Moderate effusion on the left",
]
PNEUMOTHORAX_FORMATS = [
    "There is a small pneumothorax",
    "Tiny apical pneumothorax is seen",
    "Right pneumothorax is unchanged",
    "A left pneumothorax is present",
    "Pneumothorax at the right apex",
]
CARDIOMEGALY_FORMAT = "Cardiomegaly is present"
NORMAL_SENTENCE = "The lungs are clear"


def make_records(texts, prefix="r", split="train"):
    """ReportRecords r1, r2, ... for a list of texts"""
    return [
        ReportRecord(id=f"{prefix}{i}", text=text, split=split)
        for i, text in enumerate(texts, start=1)
    ]


def long_tail_records():
    """
    Three diseases with 50 / 8 / 5 occurrences.

    Cardiomegaly only ever uses one wording, effusion and pneumothorax use
    five each, so only the two tail diseases have eligible buckets.
    """
    records = make_records(
        [f"{CARDIOMEGALY_FORMAT}. {NORMAL_SENTENCE}." for _ in range(50)], prefix="a"
    )
    records += make_records(
        [f"{EFFUSION_FORMATS[i % 5]}." for i in range(8)], prefix="b"
    )
    records += make_records([f"{text}." for text in PNEUMOTHORAX_FORMATS], prefix="c")
    return records


def write_jsonl(path, objs):
    with open(path, "w", encoding="utf-8") as f:
        for obj in objs:
            f.write(json.dumps(obj) + "\n")
    return str(path)


@pytest.fixture(autouse=True)
def traitlets_logging():
    """Ensure traitlets default logging is enabled

    so logs of the configurable components are captured by pytest.
    By default, there is a "NullHandler" so no logs are produced.
    """
    logger = logging.getLogger('traitlets')
    logger.setLevel(logging.DEBUG)
    logger.handlers = []


@pytest.fixture(scope="session")
def seed_kg():
    """The knowledge graph shipped with reportkg"""
    return load_kg()


@pytest.fixture
def toy_kg_doc():
    """A knowledge graph document with one generic trigger shared by two organs"""
    return {
        "version": "toy",
        "categories": list(BASE_CATEGORIES),
        "synonyms": {"opacities": "opacity"},
        "entries": [
            {
                "disease": "opacity",
                "organ": "lung",
                "triggers": ["opacity"],
                "organ_cues": ["lung"],
                "default_organ": True,
            },
            {
                "disease": "opacity",
                "organ": "diaphragm",
                "triggers": ["opacity"],
                "organ_cues": ["diaphragm"],
            },
        ],
    }


@pytest.fixture
def toy_kg(toy_kg_doc):
    return kg_from_dict(toy_kg_doc)


@pytest.fixture
def config():
    """Return a traitlets Config object

    The base configuration for testing.
    Use when constructing components for tests
    """
    cfg = Config()
    cfg.Labeler.threads = 1
    cfg.Augmenter.threads = 1
    cfg.Evaluator.threads = 1
    cfg.OracleClassifier.threads = 1
    return cfg


@pytest.fixture
def corpus_file(tmp_path):
    """Factory writing records to a corpus file in tmp_path"""

    def _write(records, name="corpus.jsonl"):
        return write_jsonl(tmp_path / name, (r.to_dict() for r in records))

    return _write
