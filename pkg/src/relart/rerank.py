"""Scientometric re-ranking of relevance-ranked candidates."""

from __future__ import annotations

from .corpus import CorpusStore
from .index import ScoredCandidate


def rerank(candidates: list[ScoredCandidate], store: CorpusStore) -> list[ScoredCandidate]:
    """Reorder candidates by readership count, descending.

    A pure reordering: the stable sort keeps the incoming relevance order
    among documents with equal readership, and relevance scores are left
    untouched. Applying it twice changes nothing.
    """

    def readership(candidate: ScoredCandidate) -> int:
        doc = store.get_by_internal_id(candidate.internal_id)
        return doc.readership_count if doc else 0

    return sorted(candidates, key=lambda c: -readership(c))
