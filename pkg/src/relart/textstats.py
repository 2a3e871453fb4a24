"""Tokenization, corpus statistics and n-gram keyphrase extraction.

Everything in this module is a pure function over immutable inputs:
corpus statistics are rebuilt, never mutated, so concurrent readers
need no locking.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from importlib import resources


class Language(Enum):
    """Document language as far as this service distinguishes it."""

    EN = "en"
    DE = "de"
    UNKNOWN = "unknown"


class NgramOrder(IntEnum):
    UNIGRAM = 1
    BIGRAM = 2
    TRIGRAM = 3


# Runs of unicode letters/digits; underscore is treated as a separator.
_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

_MIN_TOKEN_LEN = 2


def load_stopwords(name: str) -> frozenset[str]:
    """Load a one-word-per-line stopword list shipped with the package."""
    text = resources.files("relart.data").joinpath(name).read_text(encoding="utf-8")
    return frozenset(w for w in (line.strip() for line in text.splitlines()) if w)


STOPWORDS_EN = load_stopwords("stopwords_en.txt")
STOPWORDS_DE = load_stopwords("stopwords_de.txt")
_STOPWORDS_UNION = STOPWORDS_EN | STOPWORDS_DE


def stopwords_for(language: Language) -> frozenset[str]:
    """Active stopword list for a language; unknown gets the union of both."""
    if language is Language.EN:
        return STOPWORDS_EN
    if language is Language.DE:
        return STOPWORDS_DE
    return _STOPWORDS_UNION


def split_words(text: str) -> list[str]:
    """Lowercase and split on non-alphanumeric runs; no further filtering."""
    return _TOKEN_RE.findall(text.lower())


def tokenize(text: str, language: Language = Language.UNKNOWN) -> list[str]:
    """Produce the token stream used for indexing and similarity.

    Lowercases, splits on any non-alphanumeric character, drops tokens
    shorter than two characters and stopwords of the given language
    (union of both built-in lists when the language is unknown).
    """
    stop = stopwords_for(language)
    return [
        t for t in split_words(text) if len(t) >= _MIN_TOKEN_LEN and t not in stop
    ]


def tokenize_segments(text: str, language: Language = Language.UNKNOWN) -> list[list[str]]:
    """Token stream broken into runs not interrupted by a removed stopword.

    N-gram candidates may not span a position where a stopword was
    dropped; dropped short tokens and punctuation do not break a run.
    """
    stop = stopwords_for(language)
    segments: list[list[str]] = []
    current: list[str] = []
    for raw in split_words(text):
        if raw in stop:
            if current:
                segments.append(current)
                current = []
            continue
        if len(raw) < _MIN_TOKEN_LEN:
            continue
        current.append(raw)
    if current:
        segments.append(current)
    return segments


@dataclass(frozen=True)
class CorpusStats:
    """Document-frequency view of one indexed field (or field combination)."""

    n_docs: int
    doc_freq: dict[str, int] = field(default_factory=dict)
    doc_len: dict[int, int] = field(default_factory=dict)

    def df(self, term: str) -> int:
        return self.doc_freq.get(term, 0)


def idf(term: str, stats: CorpusStats) -> float:
    """Smoothed inverse document frequency: 1 + ln(N / (df + 1)).

    Unseen terms have df 0; the +1 keeps the value finite and positive
    for every df in [0, N].
    """
    return 1.0 + math.log(stats.n_docs / (stats.df(term) + 1))


@dataclass(frozen=True)
class Keyphrase:
    """A scored contiguous n-gram taken from one metadata field."""

    text: str
    order: NgramOrder
    score: float

    @property
    def tokens(self) -> list[str]:
        return self.text.split(" ")


def extract_keyphrases(
    field_text: str,
    order: NgramOrder,
    k: int,
    stats: CorpusStats,
    language: Language = Language.UNKNOWN,
) -> list[Keyphrase]:
    """Top-k keyphrases of the requested n-gram order for one field.

    Candidates are contiguous n-grams that do not span a removed-stopword
    gap. score(ngram) = frequency(ngram in field) * sum of idf(t) over its
    tokens; ranked by score descending, ties broken lexicographically.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    n = int(order)
    counts: Counter[tuple[str, ...]] = Counter()
    for segment in tokenize_segments(field_text, language):
        for i in range(len(segment) - n + 1):
            counts[tuple(segment[i : i + n])] += 1
    scored = [
        Keyphrase(
            text=" ".join(gram),
            order=order,
            score=freq * sum(idf(t, stats) for t in gram),
        )
        for gram, freq in counts.items()
    ]
    scored.sort(key=lambda p: (-p.score, p.text))
    return scored[:k]
