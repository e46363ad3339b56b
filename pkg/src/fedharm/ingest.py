"""Corpus loading, label binarisation and tweet preprocessing."""

from __future__ import annotations

import csv
import re
import string
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable

HARMFUL = 1
NORMAL = 0


class CorpusError(ValueError):
    """Raised for malformed corpora, unknown labels or bad column mappings."""


@dataclass(frozen=True)
class RawRecord:
    id: str
    text: str
    original_label: str


@dataclass(frozen=True)
class LabelSchema:
    harmful_labels: frozenset[str]
    normal_labels: frozenset[str]
    dropped_labels: frozenset[str] = frozenset()

    def __post_init__(self):
        for name in ("harmful_labels", "normal_labels", "dropped_labels"):
            object.__setattr__(self, name, frozenset(getattr(self, name)))
        if not self.harmful_labels or not self.normal_labels:
            raise CorpusError("harmful_labels and normal_labels must be non-empty")
        overlap = (
            (self.harmful_labels & self.normal_labels)
            | (self.harmful_labels & self.dropped_labels)
            | (self.normal_labels & self.dropped_labels)
        )
        if overlap:
            raise CorpusError(f"label sets overlap on {sorted(overlap)}")

    def classify(self, label: str) -> int | None:
        """1 for harmful, 0 for normal, None for dropped; unknown labels raise."""
        if label in self.harmful_labels:
            return HARMFUL
        if label in self.normal_labels:
            return NORMAL
        if label in self.dropped_labels:
            return None
        raise CorpusError(f"unknown label {label!r} (not in any schema set)")


# Label mappings for the public harmful-tweet corpora the harness was designed around.
PRESET_SCHEMAS: dict[str, LabelSchema] = {
    "abusive": LabelSchema({"abusive", "hateful", "Abusive", "Hate"}, {"normal", "Normal"}, {"spam", "Spam"}),
    "sarcastic": LabelSchema({"Sarcastic", "sarcastic"}, {"None", "none"}),
    "hateful": LabelSchema({"Racism", "Sexism", "racism", "sexism"}, {"Normal", "normal", "none"}),
    "offensive": LabelSchema({"Hate", "Offensive", "hate", "offensive"}, {"Normal", "normal", "neither"}),
    "cyberbully": LabelSchema({"Bully", "Aggressive", "bully", "aggressive"}, {"Normal", "normal"}),
    "binary": LabelSchema({"harmful", "1"}, {"normal", "0"}),
}


@dataclass(frozen=True)
class ExampleRecord:
    id: str
    tokens: tuple[str, ...]
    label: int


@dataclass
class Corpus:
    examples: list[ExampleRecord]
    class_counts: dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        counts = Counter(ex.label for ex in self.examples)
        self.class_counts = {NORMAL: counts.get(NORMAL, 0), HARMFUL: counts.get(HARMFUL, 0)}

    def __len__(self) -> int:
        return len(self.examples)

    @property
    def harmful_fraction(self) -> float:
        return self.class_counts[HARMFUL] / len(self.examples) if self.examples else 0.0

    def check_unique_ids(self) -> None:
        seen = set()
        for ex in self.examples:
            if ex.id in seen:
                raise CorpusError(f"duplicate example id {ex.id!r}")
            seen.add(ex.id)


# --------------------------------------------------------------------------
# loading

def load_corpus(
    path: str | Path,
    schema: LabelSchema,
    text_column: str = "text",
    label_column: str = "label",
    id_column: str | None = None,
    delimiter: str = ",",
    strict: bool = True,
) -> list[RawRecord]:
    """Read a delimited file with a header row into raw records.

    Rows whose label is in ``schema.dropped_labels`` are skipped.  With
    ``strict`` an unknown label raises; otherwise the row is skipped.  When
    ``id_column`` is None the 0-based data-row index is used as the id.
    """
    path = Path(path)
    if not path.is_file():
        raise CorpusError(f"corpus file not found: {path}")
    records: list[RawRecord] = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh, delimiter=delimiter)
        header = reader.fieldnames or []
        wanted = [text_column, label_column] + ([id_column] if id_column else [])
        missing = [c for c in wanted if c not in header]
        if missing:
            raise CorpusError(f"{path}: missing column(s) {missing}; header is {header}")
        seen_ids = set()
        for row_no, row in enumerate(reader):
            label = (row[label_column] or "").strip()
            try:
                cls = schema.classify(label)
            except CorpusError:
                if strict:
                    raise CorpusError(f"{path}: row {row_no}: unknown label {label!r}") from None
                continue
            if cls is None:
                continue
            rid = row[id_column] if id_column else str(row_no)
            if rid in seen_ids:
                raise CorpusError(f"{path}: duplicate id {rid!r}")
            seen_ids.add(rid)
            records.append(RawRecord(rid, row[text_column] or "", label))
    return records


def load_stopwords(path: str | Path | None = None) -> frozenset[str]:
    """One word per line; ``None`` loads the bundled English list."""
    if path is None:
        text = resources.files("fedharm").joinpath("data/stopwords_en.txt").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    return frozenset(w.strip().lower() for w in text.splitlines() if w.strip())


# --------------------------------------------------------------------------
# preprocessing

_MENTION = re.compile(r"@\w+")
_URL = re.compile(r"(?:https?://|www\.)\S+", re.IGNORECASE)
_DIGITS = re.compile(r"\d+")
# Everything ASCII that is not a letter or whitespace becomes a separator.
_NON_WORD = re.compile("[" + re.escape(string.punctuation) + r"\x00-\x08\x0e-\x1f\x7f" + "]")
_SPACES = re.compile(r"\s+")


def preprocess(text: str, stopwords: Iterable[str] = frozenset()) -> list[str]:
    """Clean one tweet into a token list.

    Order: @-mentions, URLs, '#' markers (hashtag word kept), digit runs,
    punctuation, non-ASCII characters; then lowercase, whitespace collapse,
    split, stop-word removal.  Non-ASCII characters are deleted in place, so
    "Ωmega" becomes "mega"; punctuation is replaced by a space.
    """
    text = _MENTION.sub(" ", text)
    text = _URL.sub(" ", text)
    text = text.replace("#", " ")
    text = _DIGITS.sub(" ", text)
    text = text.replace("'", "")
    text = _NON_WORD.sub(" ", text)
    text = text.encode("ascii", "ignore").decode("ascii")
    text = _SPACES.sub(" ", text.lower()).strip()
    if not text:
        return []
    stop = stopwords if isinstance(stopwords, (set, frozenset)) else frozenset(stopwords)
    return [tok for tok in text.split(" ") if tok not in stop]


def binarize(record: RawRecord, schema: LabelSchema, stopwords: Iterable[str] = frozenset()) -> ExampleRecord:
    """Preprocess the text and map the original label to harmful (1) / normal (0)."""
    cls = schema.classify(record.original_label)
    if cls is None:
        raise CorpusError(f"record {record.id!r} has dropped label {record.original_label!r}")
    return ExampleRecord(record.id, tuple(preprocess(record.text, stopwords)), cls)


def remove_hapax(corpus: Corpus) -> Corpus:
    """Drop every token whose corpus-wide frequency is exactly one (single pass)."""
    freq = Counter(tok for ex in corpus.examples for tok in ex.tokens)
    hapax = {tok for tok, n in freq.items() if n == 1}
    if not hapax:
        return Corpus(list(corpus.examples))
    return Corpus([
        ExampleRecord(ex.id, tuple(t for t in ex.tokens if t not in hapax), ex.label)
        for ex in corpus.examples
    ])


def build_corpus(
    records: Iterable[RawRecord],
    schema: LabelSchema,
    stopwords: Iterable[str] = frozenset(),
    drop_hapax: bool = True,
) -> Corpus:
    """Preprocess and binarise raw records; optionally strip hapax tokens."""
    stop = frozenset(stopwords)
    corpus = Corpus([binarize(r, schema, stop) for r in records])
    corpus.check_unique_ids()
    return remove_hapax(corpus) if drop_hapax else corpus


def schema_from_lists(
    harmful: Iterable[str], normal: Iterable[str], dropped: Iterable[str] = ()
) -> LabelSchema:
    return LabelSchema(frozenset(harmful), frozenset(normal), frozenset(dropped))

