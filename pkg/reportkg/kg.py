"""
The chest disease knowledge graph that drives labeling, augmentation and
evaluation.

A knowledge graph is a JSON document::

    {
      "version": "...",
      "categories": ["lung", "heart", ..., "other", "normal"],
      "synonyms": {"broncho-vascular": "bronchovascular", ...},
      "entries": [
        {"disease": "opacity", "organ": "lung", "triggers": ["opacity"],
         "organ_cues": ["lung"], "default_organ": true},
        ...
      ]
    }

All phrases are stored lowercase with single spaces between tokens.
"""

import os
import re
from collections import defaultdict
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Tuple

from .exceptions import InputFormatError, KnowledgeGraphValidationError
from .utils import atomic_write, dumps_json, read_json

SEED_KG_PATH = os.path.join(os.path.dirname(__file__), "data", "seed_kg.json")

NORMAL = "normal"
OTHER = "other"

# "spine" is folded under "bone"
BASE_CATEGORIES = (
    "lung",
    "heart",
    "pleural",
    "mediastinum",
    "bone",
    "airspace",
    "diaphragm",
    OTHER,
    NORMAL,
)

# words, with hyphens inside a word kept so "broncho-vascular" survives
_token_pattern = re.compile(r"\w+(?:-\w+)*")


def tokenize(text):
    """Lowercase `text` and split it on whitespace and punctuation.

    Hyphens inside a word are preserved, so that hyphenated spellings can be
    mapped by the synonym table.
    """
    return _token_pattern.findall(text.lower())


def normalize_phrase(phrase):
    """Lowercase a phrase and join its tokens with single spaces."""
    return " ".join(tokenize(phrase))


@dataclass(frozen=True)
class KgEntry:
    """One disease under one organ category, and the phrases that fire it."""

    disease: str
    organ: str
    triggers: Tuple[str, ...]
    organ_cues: Tuple[str, ...] = ()
    default_organ: bool = False

    @property
    def pair(self):
        return (self.disease, self.organ)

    def to_dict(self):
        d = {
            "disease": self.disease,
            "organ": self.organ,
            "triggers": list(self.triggers),
        }
        if self.organ_cues:
            d["organ_cues"] = list(self.organ_cues)
        if self.default_organ:
            d["default_organ"] = True
        return d


@dataclass(frozen=True)
class Violation:
    """A broken knowledge graph rule, identified by what broke it."""

    entry: str
    rule: str
    detail: str = ""

    def __str__(self):
        s = f"{self.entry}: {self.rule}"
        if self.detail:
            s += f" ({self.detail})"
        return s


@dataclass(frozen=True)
class KnowledgeGraph:
    """
    Categories, disease entries and the synonym map.

    Instances are immutable once loaded and can be shared between threads.
    """

    version: str
    categories: Tuple[str, ...]
    entries: Tuple[KgEntry, ...]
    synonyms: Dict[str, str] = field(default_factory=dict)

    @cached_property
    def _synonym_table(self):
        # token tuple -> replacement tokens; the first declaration wins when
        # two keys normalize to the same tokens
        table = {}
        for key, value in self.synonyms.items():
            key_tokens = tuple(tokenize(key))
            if key_tokens and key_tokens not in table:
                table[key_tokens] = tuple(tokenize(value))
        return table

    @cached_property
    def _max_synonym_length(self):
        return max((len(k) for k in self._synonym_table), default=0)

    @cached_property
    def _entries_by_trigger(self):
        by_trigger = defaultdict(list)
        for entry in self.entries:
            for trigger in entry.triggers:
                if entry not in by_trigger[trigger]:
                    by_trigger[trigger].append(entry)
        return dict(by_trigger)

    def entries_for_trigger(self, trigger):
        """Entries fired by `trigger`, in declaration order."""
        return self._entries_by_trigger.get(trigger, [])

    def disease_types(self):
        """The distinct (disease, organ) pairs of the graph."""
        return frozenset(entry.pair for entry in self.entries)

    def entries_by_category(self):
        """Map of every declared category to its entries, in declaration order."""
        grouped = {category: [] for category in self.categories}
        for entry in self.entries:
            grouped.setdefault(entry.organ, []).append(entry)
        return grouped

    def to_dict(self):
        return {
            "version": self.version,
            "categories": list(self.categories),
            "synonyms": dict(self.synonyms),
            "entries": [entry.to_dict() for entry in self.entries],
        }


def canonicalize(kg, tokens):
    """
    Replace synonym phrases in a token sequence by their canonical phrases.

    Scans left to right; at every position the longest synonym key matching
    there is replaced. Tokens are expected to be lowercase already.
    """
    table = kg._synonym_table
    max_length = kg._max_synonym_length
    tokens = list(tokens)
    out = []
    i = 0
    n = len(tokens)
    while i < n:
        for length in range(min(max_length, n - i), 0, -1):
            replacement = table.get(tuple(tokens[i : i + length]))
            if replacement is not None:
                out.extend(replacement)
                i += length
                break
        else:
            out.append(tokens[i])
            i += 1
    return out


def _is_canonical(kg, phrase):
    tokens = tokenize(phrase)
    return bool(tokens) and canonicalize(kg, tokens) == tokens


def _overlaps(key, value):
    """
    True if a synonym key could match again across the boundary of a
    substituted value: the value sits strictly inside the key, or a proper
    suffix/prefix of one equals a prefix/suffix of the other.
    """
    k, v = len(key), len(value)
    if v < k:
        for start in range(0, k - v + 1):
            if key[start : start + v] == value:
                return True
    for size in range(1, min(k - 1, v) + 1):
        if value[v - size :] == key[:size] or value[:size] == key[k - size :]:
            return True
    return False


def validate_kg(kg):
    """
    Check every knowledge graph rule and return the list of violations.

    An empty list means the graph is valid. Violations are data: nothing is
    raised here.
    """
    violations = []
    declared = set()
    for category in kg.categories:
        if category in declared:
            violations.append(Violation(f"categories[{category!r}]", "duplicate category"))
        declared.add(category)
    for category in BASE_CATEGORIES:
        if category not in declared:
            violations.append(Violation(f"categories[{category!r}]", "missing category"))

    for key, value in kg.synonyms.items():
        value_tokens = tokenize(value)
        if not value_tokens or canonicalize(kg, value_tokens) != value_tokens:
            violations.append(
                Violation(
                    f"synonyms[{key!r}]",
                    "synonym value not a fixed point",
                    f"{value!r} is rewritten again",
                )
            )
    table = kg._synonym_table
    values = {tuple(tokenize(v)) for v in kg.synonyms.values()}
    for key, value in kg.synonyms.items():
        key_tokens = tuple(tokenize(key))
        if key_tokens not in table:
            continue
        for other in sorted(values):
            if other and _overlaps(key_tokens, other):
                violations.append(
                    Violation(
                        f"synonyms[{key!r}]",
                        "synonym key overlaps canonical value",
                        f"{' '.join(other)!r}",
                    )
                )
                break

    seen_pairs = set()
    for i, entry in enumerate(kg.entries):
        name = f"entries[{i}] ({entry.disease}, {entry.organ})"
        if entry.organ == NORMAL:
            violations.append(Violation(name, "reserved category"))
        elif entry.organ not in declared:
            violations.append(
                Violation(name, "undeclared organ", f"{entry.organ!r} is not a category")
            )
        if entry.pair in seen_pairs:
            violations.append(Violation(name, "duplicate pair"))
        seen_pairs.add(entry.pair)
        if not entry.triggers:
            violations.append(Violation(name, "empty triggers"))
        for trigger in entry.triggers:
            if not _is_canonical(kg, trigger):
                violations.append(Violation(name, "non-canonical trigger", repr(trigger)))
        for cue in entry.organ_cues:
            if not _is_canonical(kg, cue):
                violations.append(Violation(name, "non-canonical organ cue", repr(cue)))

    for trigger, entries in kg._entries_by_trigger.items():
        if len(entries) < 2:
            continue
        defaults = [e for e in entries if e.default_organ]
        if len(defaults) == 0:
            violations.append(Violation(f"trigger {trigger!r}", "missing default"))
        elif len(defaults) > 1:
            violations.append(
                Violation(
                    f"trigger {trigger!r}",
                    "ambiguous default",
                    ", ".join(e.organ for e in defaults),
                )
            )
    return violations


def _phrases(value, what, path):
    if isinstance(value, str) or not isinstance(value, list):
        raise InputFormatError(f"{what} must be an array of strings", path=path)
    phrases = []
    for phrase in value:
        if not isinstance(phrase, str):
            raise InputFormatError(f"{what} must be an array of strings", path=path)
        phrases.append(normalize_phrase(phrase))
    return tuple(phrases)


def kg_from_dict(doc, path=None):
    """Build an unvalidated KnowledgeGraph from a parsed KG document."""
    if not isinstance(doc, dict):
        raise InputFormatError("a knowledge graph must be a JSON object", path=path)
    for key in ("categories", "entries"):
        if key not in doc:
            raise InputFormatError(f"missing top-level key {key!r}", path=path)
    synonyms = doc.get("synonyms", {})
    if not isinstance(synonyms, dict):
        raise InputFormatError("'synonyms' must be an object", path=path)
    if not isinstance(doc["entries"], list):
        raise InputFormatError("'entries' must be an array", path=path)

    entries = []
    for i, raw in enumerate(doc["entries"]):
        if not isinstance(raw, dict) or "disease" not in raw or "organ" not in raw:
            raise InputFormatError(
                f"entries[{i}] must be an object with 'disease' and 'organ'", path=path
            )
        entries.append(
            KgEntry(
                disease=normalize_phrase(str(raw["disease"])),
                organ=normalize_phrase(str(raw["organ"])),
                triggers=_phrases(raw.get("triggers", []), f"entries[{i}].triggers", path),
                organ_cues=_phrases(
                    raw.get("organ_cues", []), f"entries[{i}].organ_cues", path
                ),
                default_organ=bool(raw.get("default_organ", False)),
            )
        )

    normalized_synonyms = {}
    for key, value in synonyms.items():
        if not isinstance(value, str):
            raise InputFormatError(f"synonyms[{key!r}] must be a string", path=path)
        normalized_synonyms.setdefault(normalize_phrase(key), normalize_phrase(value))

    return KnowledgeGraph(
        version=str(doc.get("version", "")),
        categories=_phrases(doc["categories"], "categories", path),
        entries=tuple(entries),
        synonyms=normalized_synonyms,
    )


def load_kg(path=SEED_KG_PATH, validate=True):
    """
    Load a knowledge graph file and, by default, validate it.

    Raises InputFormatError for a missing or malformed file and
    KnowledgeGraphValidationError listing every violation.
    """
    kg = kg_from_dict(read_json(path), path=path)
    if validate:
        violations = validate_kg(kg)
        if violations:
            raise KnowledgeGraphValidationError(violations, path=path)
    return kg


def save_kg(kg, path):
    """Write `kg` in the file format read by load_kg."""
    atomic_write(path, dumps_json(kg.to_dict()))
