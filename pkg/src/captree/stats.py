"""Corpus statistics over annotation and tree artifacts.

Streams JSONL annotation shards and tree JSON files without holding the
corpus in memory, producing word/character length distributions per
field, top n-grams excluding stop words, segment duration buckets, and
the fraction of segments whose action is the N/A sentinel. Shard partials
merge associatively, so sharded and whole-corpus reports agree exactly.
"""

from __future__ import annotations

import json
import string
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .storage import read_json

NA_SENTINEL = "N/A"

FIELD_KEYS = (
    "summary.brief",
    "summary.detailed",
    "action.brief",
    "action.detailed",
    "action.actor",
)

DURATION_BUCKETS = (
    ("0-3", 0.0, 3.0),
    ("3-10", 3.0, 10.0),
    ("10-60", 10.0, 60.0),
    ("60+", 60.0, float("inf")),
)

_PUNCT = string.punctuation


def load_stopwords() -> frozenset[str]:
    text = resources.files("captree.resources").joinpath("stopwords.txt").read_text("utf-8")
    return frozenset(
        line.strip() for line in text.splitlines() if line.strip() and not line.startswith("#")
    )


def tokenize(text: str) -> list[str]:
    """Whitespace runs with leading/trailing punctuation stripped; runs
    that are pure punctuation vanish."""
    tokens = []
    for run in text.split():
        run = run.strip(_PUNCT)
        if run:
            tokens.append(run)
    return tokens


def word_count(text: str | None) -> int:
    if not text or text.strip() == NA_SENTINEL:
        return 0
    return len(tokenize(text))


def char_count(text: str | None) -> int:
    if not text or text.strip() == NA_SENTINEL:
        return 0
    return len(text)


def ngrams(corpus, n: int, stoplist: frozenset[str] = frozenset()) -> Counter:
    """Exact n-gram counts over lowercased tokens; an n-gram containing
    any stoplisted token is excluded."""
    if n not in (1, 2, 3):
        raise ValueError(f"n must be 1, 2 or 3, got {n}")
    counts: Counter = Counter()
    for doc in corpus:
        tokens = [t.lower() for t in tokenize(doc)]
        for i in range(len(tokens) - n + 1):
            gram = tokens[i : i + n]
            if any(t in stoplist for t in gram):
                continue
            counts[" ".join(gram)] += 1
    return counts


def top_ngrams(counts: Counter, limit: int) -> list[tuple[str, int]]:
    """Highest counts first, ties in lexicographic order."""
    return sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:limit]


@dataclass
class FieldAccumulator:
    word_hist: Counter = field(default_factory=Counter)
    char_hist: Counter = field(default_factory=Counter)
    total_words: int = 0
    total_chars: int = 0
    nonzero_records: int = 0
    records: int = 0
    grams: dict[int, Counter] = field(default_factory=lambda: {1: Counter(), 2: Counter(), 3: Counter()})

    def add(self, text: str | None, stoplist: frozenset[str]) -> None:
        self.records += 1
        words = word_count(text)
        chars = char_count(text)
        self.word_hist[words] += 1
        self.char_hist[chars] += 1
        if words > 0:
            self.total_words += words
            self.total_chars += chars
            self.nonzero_records += 1
            for n in (1, 2, 3):
                self.grams[n].update(ngrams([text], n, stoplist))

    def merge(self, other: "FieldAccumulator") -> None:
        self.word_hist.update(other.word_hist)
        self.char_hist.update(other.char_hist)
        self.total_words += other.total_words
        self.total_chars += other.total_chars
        self.nonzero_records += other.nonzero_records
        self.records += other.records
        for n in (1, 2, 3):
            self.grams[n].update(other.grams[n])

    def summary(self, top_n: int) -> dict:
        nz = self.nonzero_records
        return {
            "records": self.records,
            "nonzero_records": nz,
            "total_words": self.total_words,
            "total_chars": self.total_chars,
            "mean_words": self.total_words / nz if nz else None,
            "mean_chars": self.total_chars / nz if nz else None,
            "word_hist": {str(k): v for k, v in sorted(self.word_hist.items())},
            "char_hist": {str(k): v for k, v in sorted(self.char_hist.items())},
            "top_unigrams": top_ngrams(self.grams[1], top_n),
            "top_bigrams": top_ngrams(self.grams[2], top_n),
            "top_trigrams": top_ngrams(self.grams[3], top_n),
        }


class StatsAccumulator:
    """Associative, commutative partial report; safe to merge across shards."""

    def __init__(self, stoplist: frozenset[str] | None = None):
        self.stoplist = load_stopwords() if stoplist is None else stoplist
        self.fields = {key: FieldAccumulator() for key in FIELD_KEYS}
        self.total_segments = 0
        self.na_segments = 0
        self.duration_counts = Counter()
        self.tree_segments = 0
        self.skipped_lines = 0

    def add_annotation(self, record: dict) -> None:
        try:
            summary = record["summary"]
            action = record["action"]
            texts = {
                "summary.brief": summary["brief"],
                "summary.detailed": summary["detailed"],
                "action.brief": action["brief"],
                "action.detailed": action["detailed"],
                "action.actor": action["actor"],
            }
        except (KeyError, TypeError):
            self.skipped_lines += 1
            return
        self.total_segments += 1
        na = record.get("na_action")
        if na is None:
            na = texts["action.brief"] == NA_SENTINEL and texts["action.detailed"] == NA_SENTINEL
        if na:
            self.na_segments += 1
        for key, text in texts.items():
            self.fields[key].add(text, self.stoplist)

    def add_tree(self, tree: dict) -> None:
        """Bucket the duration of every caption-eligible node."""
        for node in tree.get("nodes", ()):
            if not node.get("caption_eligible"):
                continue
            duration = node["end_s"] - node["start_s"]
            for label, lo, hi in DURATION_BUCKETS:
                if lo <= duration < hi:
                    self.duration_counts[label] += 1
                    break
            self.tree_segments += 1

    def merge(self, other: "StatsAccumulator") -> None:
        for key in FIELD_KEYS:
            self.fields[key].merge(other.fields[key])
        self.total_segments += other.total_segments
        self.na_segments += other.na_segments
        self.duration_counts.update(other.duration_counts)
        self.tree_segments += other.tree_segments
        self.skipped_lines += other.skipped_lines

    def finalize(self, top_n: int = 20) -> dict:
        buckets: dict = {label: None for label, _, _ in DURATION_BUCKETS}
        if self.tree_segments:
            for label, _, _ in DURATION_BUCKETS:
                buckets[label] = self.duration_counts[label] / self.tree_segments
        return {
            "total_segments": self.total_segments,
            "total_words": sum(f.total_words for f in self.fields.values()),
            "na_fraction": (self.na_segments / self.total_segments) if self.total_segments else None,
            "na_segments": self.na_segments,
            "skipped_lines": self.skipped_lines,
            "duration_buckets": {
                "segments": self.tree_segments,
                "empty": self.tree_segments == 0,
                "shares": buckets,
            },
            "fields": {key: acc.summary(top_n) for key, acc in self.fields.items()},
        }


def report(
    annotation_paths: list[Path],
    tree_paths: list[Path],
    top_n: int = 20,
    stoplist: frozenset[str] | None = None,
) -> dict:
    acc = StatsAccumulator(stoplist)
    for path in sorted(annotation_paths):
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                try:
                    row = json.loads(line)
                except json.JSONDecodeError:
                    acc.skipped_lines += 1
                    continue
                acc.add_annotation(row)
    for path in sorted(tree_paths):
        acc.add_tree(read_json(path))
    return acc.finalize(top_n)


def histogram_rows(report_dict: dict) -> list[tuple[str, str, int, int]]:
    """Flatten per-field histograms into (field, kind, value, count) rows
    for CSV export."""
    rows = []
    for key, stats in report_dict["fields"].items():
        for kind, hist in (("words", stats["word_hist"]), ("chars", stats["char_hist"])):
            for value, count in hist.items():
                rows.append((key, kind, int(value), count))
    return rows
