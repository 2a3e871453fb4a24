"""Hashed tf-idf document embeddings and exhaustive cosine search.

The embedding is deterministic across runs and platforms: token features
come from FNV-1a 64-bit hashes with pinned seeds, so no trained model is
involved. The strategy is deliberately swappable; anything producing a
fixed-dimension vector per document fits the same index.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterable

import numpy as np

from .corpus import DocumentRecord
from .index import ScoredCandidate
from .textstats import CorpusStats, idf, tokenize

EMBEDDING_DIM = 256

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF

# Pinned seeds: component hash and sign hash must stay distinct and stable,
# otherwise stored vectors are invalidated.
COMPONENT_SEED = 0x5BD1E9955BD1E995
SIGN_SEED = 0x27D4EB2F165667C5


def fnv1a64(data: bytes, seed: int = 0) -> int:
    """FNV-1a 64-bit over bytes, with the seed folded into the offset."""
    h = _FNV_OFFSET ^ seed
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h


@lru_cache(maxsize=1 << 20)
def token_feature(token: str) -> tuple[int, int]:
    """(component index, sign) for a token under the pinned hash pair."""
    data = token.encode("utf-8")
    component = fnv1a64(data, COMPONENT_SEED) % EMBEDDING_DIM
    sign = 1 if fnv1a64(data, SIGN_SEED) & 1 == 0 else -1
    return component, sign


@dataclass(frozen=True)
class DenseVector:
    values: np.ndarray

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))


def combined_stats(docs: Iterable[DocumentRecord]) -> CorpusStats:
    """Corpus statistics over title and abstract treated as one stream."""
    doc_freq: dict[str, int] = {}
    doc_len: dict[int, int] = {}
    n_docs = 0
    for doc in docs:
        n_docs += 1
        tokens = _content_tokens(doc)
        doc_len[doc.internal_id] = len(tokens)
        for term in set(tokens):
            doc_freq[term] = doc_freq.get(term, 0) + 1
    return CorpusStats(n_docs=max(n_docs, 1), doc_freq=doc_freq, doc_len=doc_len)


def _content_tokens(doc: DocumentRecord) -> list[str]:
    tokens = tokenize(doc.title, doc.language)
    if doc.abstract:
        tokens += tokenize(doc.abstract, doc.language)
    return tokens


def embed(doc: DocumentRecord, stats: CorpusStats) -> DenseVector:
    """Feature-hashed tf-idf vector over the document's title and abstract.

    Each token adds sign(h2(t)) * tf(t) * idf(t) to component h1(t) mod 256.
    Empty token streams give the zero vector.
    """
    values = np.zeros(EMBEDDING_DIM, dtype=np.float64)
    for term, tf in Counter(_content_tokens(doc)).items():
        component, sign = token_feature(term)
        values[component] += sign * tf * idf(term, stats)
    return DenseVector(values)


class VectorIndex:
    """Dense vectors for the whole corpus; exhaustive cosine scan.

    Corpus sizes at desk scale do not justify approximate structures, so
    nearest() scores every document and sorts.
    """

    def __init__(self, ids: np.ndarray, matrix: np.ndarray, stats: CorpusStats) -> None:
        self.ids = ids
        self.matrix = matrix
        self.stats = stats
        self.norms = np.linalg.norm(matrix, axis=1)
        self._row_of = {int(doc_id): row for row, doc_id in enumerate(ids)}

    @classmethod
    def build(cls, docs: Iterable[DocumentRecord], stats: CorpusStats | None = None) -> "VectorIndex":
        doc_list = sorted(docs, key=lambda d: d.internal_id)
        if stats is None:
            stats = combined_stats(doc_list)
        matrix = np.zeros((len(doc_list), EMBEDDING_DIM), dtype=np.float64)
        ids = np.empty(len(doc_list), dtype=np.int64)
        for row, doc in enumerate(doc_list):
            ids[row] = doc.internal_id
            matrix[row] = embed(doc, stats).values
        return cls(ids, matrix, stats)

    def vector_for(self, internal_id: int) -> DenseVector | None:
        row = self._row_of.get(internal_id)
        if row is None:
            return None
        return DenseVector(self.matrix[row])

    def nearest(
        self,
        vector: DenseVector,
        k: int,
        exclude: int | None = None,
        allowed: Callable[[int], bool] | None = None,
    ) -> list[ScoredCandidate]:
        """Top-k documents by cosine similarity, ties by ascending id.

        A zero query vector has no defined direction and returns nothing.
        Reported scores are (1 + cosine) / 2: the same ranking, mapped
        into [0, 1] so relevance stays non-negative. Identical vectors
        therefore score exactly 1. An `allowed` predicate filters before
        the cut-off, so callers get k survivors rather than k candidates.
        """
        if k <= 0:
            return []
        query_norm = vector.norm()
        if query_norm == 0.0:
            return []
        dots = self.matrix @ vector.values
        denom = self.norms * query_norm
        cosines = np.divide(dots, denom, out=np.zeros_like(dots), where=denom > 0)
        order = np.lexsort((self.ids, -cosines))
        out: list[ScoredCandidate] = []
        for row in order:
            doc_id = int(self.ids[row])
            if doc_id == exclude:
                continue
            if allowed is not None and not allowed(doc_id):
                continue
            out.append(ScoredCandidate(doc_id, (1.0 + float(cosines[row])) / 2.0))
            if len(out) == k:
                break
        return out
