"""In-process inverted index: more-like-this queries and free-text search.

The index is immutable after build; a corpus refresh builds a new index
and swaps it in whole. Scoring is pinned to a classic practical formula
(sqrt-tf, squared smoothed idf, inverse-sqrt length norm, coordination
factor) so results can be checked against a brute-force oracle.
"""

from __future__ import annotations

import logging
import math
from array import array
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator

import numpy as np

from .corpus import DocumentRecord
from .textstats import CorpusStats, Language, NgramOrder, extract_keyphrases, idf, tokenize

logger = logging.getLogger(__name__)

EDISMAX_TIEBREAK = 0.1


class SourceField(Enum):
    TITLE = "title"
    ABSTRACT = "abstract"


class Representation(Enum):
    TERMS = "terms"
    KEYPHRASES = "keyphrases"


class QueryParser(Enum):
    STANDARD = "standardQP"
    EDISMAX = "edismaxQP"


class EmptyCorpusError(ValueError):
    """Building an index over no documents is a misconfiguration."""


@dataclass(frozen=True)
class QueryTerm:
    field: SourceField
    term: str
    weight: float


@dataclass
class Query:
    terms: list[QueryTerm]
    parser: QueryParser
    fallback_applied: bool = False


@dataclass(frozen=True)
class ScoredCandidate:
    internal_id: int
    relevance_score: float


class PostingList:
    """Parallel arrays of (internal_id, term_frequency), sorted by id."""

    __slots__ = ("ids", "tfs", "sqrt_tf")

    def __init__(self) -> None:
        self.ids = array("q")
        self.tfs = array("q")
        self.sqrt_tf: np.ndarray | None = None

    def add(self, internal_id: int, tf: int) -> None:
        self.ids.append(internal_id)
        self.tfs.append(tf)

    def finalize(self) -> None:
        """Freeze into numpy arrays so scoring can gather in bulk."""
        self.ids = np.asarray(self.ids, dtype=np.int64)
        self.tfs = np.asarray(self.tfs, dtype=np.int64)
        self.sqrt_tf = np.sqrt(self.tfs.astype(np.float64))

    def __len__(self) -> int:
        return len(self.ids)


@dataclass
class FieldIndex:
    postings: dict[str, PostingList] = field(default_factory=dict)
    stats: CorpusStats = field(default_factory=lambda: CorpusStats(n_docs=0))
    # 1/sqrt(field length) indexed densely by internal_id (0 where empty)
    inv_sqrt_len: np.ndarray | None = None


def field_text(doc: DocumentRecord, source_field: SourceField) -> str:
    if source_field is SourceField.TITLE:
        return doc.title
    return doc.abstract or ""


class InvertedIndex:
    """Per-field postings plus the corpus statistics they imply."""

    def __init__(
        self,
        fields: dict[SourceField, FieldIndex],
        n_docs: int,
        dense_size: int | None = None,
    ) -> None:
        self.fields = fields
        self.n_docs = n_docs
        if dense_size is None:
            dense_size = 1 + max(
                (max(fi.stats.doc_len, default=0) for fi in fields.values()),
                default=0,
            )
        self.dense_size = dense_size

    @classmethod
    def build(
        cls,
        docs: Iterable[DocumentRecord],
        fields: Iterable[SourceField] = (SourceField.TITLE, SourceField.ABSTRACT),
    ) -> "InvertedIndex":
        doc_list = sorted(docs, key=lambda d: d.internal_id)
        if not doc_list:
            raise EmptyCorpusError("cannot build an index over an empty corpus")
        field_list = list(fields)
        postings: dict[SourceField, dict[str, PostingList]] = {f: {} for f in field_list}
        doc_lens: dict[SourceField, dict[int, int]] = {f: {} for f in field_list}
        for doc in doc_list:
            for f in field_list:
                tokens = tokenize(field_text(doc, f), doc.language)
                doc_lens[f][doc.internal_id] = len(tokens)
                for term, tf in Counter(tokens).items():
                    plist = postings[f].get(term)
                    if plist is None:
                        plist = postings[f][term] = PostingList()
                    plist.add(doc.internal_id, tf)
        n_docs = len(doc_list)
        dense_size = doc_list[-1].internal_id + 1
        built = {}
        for f in field_list:
            for plist in postings[f].values():
                plist.finalize()
            inv_sqrt_len = np.zeros(dense_size, dtype=np.float64)
            for doc_id, length in doc_lens[f].items():
                if length > 0:
                    inv_sqrt_len[doc_id] = 1.0 / math.sqrt(length)
            built[f] = FieldIndex(
                postings=postings[f],
                stats=CorpusStats(
                    n_docs=n_docs,
                    doc_freq={term: len(pl) for term, pl in postings[f].items()},
                    doc_len=doc_lens[f],
                ),
                inv_sqrt_len=inv_sqrt_len,
            )
        return cls(built, n_docs, dense_size)

    def stats_for(self, source_field: SourceField) -> CorpusStats:
        return self.fields[source_field].stats


def build_query(
    input_doc: DocumentRecord,
    index: InvertedIndex,
    representation: Representation,
    source_field: SourceField,
    max_query_terms: int = 25,
    parser: QueryParser = QueryParser.STANDARD,
    ngram_order: NgramOrder = NgramOrder.BIGRAM,
) -> Query:
    """Turn a document into a weighted more-like-this query.

    terms: the source field's tokens ranked by tf*idf, top max_query_terms,
    each weighted by its tf*idf. keyphrases: the top max_query_terms
    keyphrases of the given order, each contributing its constituent
    tokens weighted by the keyphrase score.

    A request for the abstract of a document that has none falls back to
    the title; the returned query carries the fallback flag.
    """
    fallback = False
    used_field = source_field
    if source_field is SourceField.ABSTRACT and not (input_doc.abstract or "").strip():
        used_field = SourceField.TITLE
        fallback = True
        logger.info(
            "document %d has no abstract; falling back to title", input_doc.internal_id
        )
    text = field_text(input_doc, used_field)
    stats = index.stats_for(used_field)
    terms: list[QueryTerm] = []
    if representation is Representation.TERMS:
        counts = Counter(tokenize(text, input_doc.language))
        ranked = sorted(
            ((tf * idf(term, stats), term) for term, tf in counts.items()),
            key=lambda pair: (-pair[0], pair[1]),
        )
        for weight, term in ranked[:max_query_terms]:
            terms.append(QueryTerm(used_field, term, weight))
    else:
        phrases = extract_keyphrases(
            text, ngram_order, max_query_terms, stats, input_doc.language
        )
        for phrase in phrases:
            for token in phrase.tokens:
                terms.append(QueryTerm(used_field, token, phrase.score))
    return Query(terms=terms, parser=parser, fallback_applied=fallback)


def _term_contribution(
    qt: QueryTerm, index: InvertedIndex
) -> tuple[np.ndarray, np.ndarray] | None:
    """Per-document contribution of one query entry, or None if unmatched."""
    field_index = index.fields.get(qt.field)
    if field_index is None:
        return None
    plist = field_index.postings.get(qt.term)
    if plist is None or len(plist) == 0:
        return None
    term_idf = idf(qt.term, field_index.stats)
    base = qt.weight * term_idf * term_idf
    ids = plist.ids
    return ids, base * plist.sqrt_tf * field_index.inv_sqrt_len[ids]


def _score_standard(query: Query, index: InvertedIndex) -> tuple[np.ndarray, np.ndarray]:
    acc = np.zeros(index.dense_size, dtype=np.float64)
    hits = np.zeros(index.dense_size, dtype=np.int64)
    for qt in query.terms:
        matched = _term_contribution(qt, index)
        if matched is None:
            continue
        ids, contrib = matched
        acc[ids] += contrib
        hits[ids] += 1
    doc_ids = np.nonzero(hits)[0]
    values = acc[doc_ids] * (hits[doc_ids] / len(query.terms))
    return doc_ids, values


def _score_edismax(query: Query, index: InvertedIndex) -> tuple[np.ndarray, np.ndarray]:
    per_field: dict[SourceField, np.ndarray] = {}
    for qt in query.terms:
        matched = _term_contribution(qt, index)
        if matched is None:
            continue
        ids, contrib = matched
        if qt.field not in per_field:
            per_field[qt.field] = np.zeros(index.dense_size, dtype=np.float64)
        per_field[qt.field][ids] += contrib
    if not per_field:
        return np.empty(0, dtype=np.int64), np.empty(0)
    total = np.zeros(index.dense_size, dtype=np.float64)
    best = np.zeros(index.dense_size, dtype=np.float64)
    for acc in per_field.values():
        total += acc
        np.maximum(best, acc, out=best)
    doc_ids = np.nonzero(total)[0]
    values = best[doc_ids] + EDISMAX_TIEBREAK * (total[doc_ids] - best[doc_ids])
    return doc_ids, values


def rank_candidates(
    query: Query, index: InvertedIndex, exclude: int | None = None
) -> Iterator[ScoredCandidate]:
    """Stream matches in rank order; cheap when the consumer stops early.

    standardQP sums per-term contributions across fields and applies the
    coordination factor |q intersect d| / |q|. edismaxQP scores each field
    separately (no coordination) and combines max + 0.1 * the rest.
    Ties are broken by ascending internal_id; the stream is fully
    deterministic for a fixed index.
    """
    if not query.terms:
        return
    if query.parser is QueryParser.STANDARD:
        doc_ids, values = _score_standard(query, index)
    else:
        doc_ids, values = _score_edismax(query, index)
    order = np.lexsort((doc_ids, -values))
    doc_ids, values = doc_ids[order], values[order]
    for start in range(0, len(doc_ids), 1024):
        chunk_ids = doc_ids[start : start + 1024].tolist()
        chunk_values = values[start : start + 1024].tolist()
        for doc_id, value in zip(chunk_ids, chunk_values):
            if doc_id == exclude:
                continue
            yield ScoredCandidate(doc_id, value)


def score(
    query: Query,
    index: InvertedIndex,
    exclude: int | None = None,
    top_n: int | None = None,
) -> list[ScoredCandidate]:
    """Rank all matching documents for a query (see rank_candidates)."""
    if top_n is not None and top_n <= 0:
        return []
    out = []
    for candidate in rank_candidates(query, index, exclude):
        out.append(candidate)
        if top_n is not None and len(out) == top_n:
            break
    return out


def search(free_text: str, index: InvertedIndex, top_n: int | None = None) -> list[ScoredCandidate]:
    """Free-text search: the fallback path when the input document is
    unknown. Uniform weights, standardQP scoring over title and abstract."""
    seen: dict[str, None] = {}
    for token in tokenize(free_text, Language.UNKNOWN):
        seen.setdefault(token)
    terms = []
    for token in seen:
        for f in (SourceField.TITLE, SourceField.ABSTRACT):
            if f in index.fields:
                terms.append(QueryTerm(f, token, 1.0))
    return score(Query(terms=terms, parser=QueryParser.STANDARD), index, None, top_n)
