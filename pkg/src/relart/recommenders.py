"""Uniform recommendation interface over every algorithm family.

A fully parameterized arm plus an input document (or a query title for
the fallback search) maps to a ranked candidate list. All randomness
lives in the A/B engine: given a fixed store, index and stub state,
recommend() is a pure function of its arguments.
"""

from __future__ import annotations

import heapq
import json
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import CorpusStore, DocumentRecord
from .embedding import VectorIndex, combined_stats, embed
from .index import (
    InvertedIndex,
    QueryParser,
    Representation,
    ScoredCandidate,
    SourceField,
    build_query,
    rank_candidates,
    search,
)
from .textstats import NgramOrder

EXTERNAL_TIMEOUT_S = 2.0
DEFAULT_MAX_QUERY_TERMS = 25


class Family(Enum):
    CBF_TERMS = "cbf_terms"
    CBF_KEYPHRASES = "cbf_keyphrases"
    CBF_EMBEDDINGS = "cbf_embeddings"
    STEREOTYPE = "stereotype"
    MOST_POPULAR = "most_popular"
    EXTERNAL_API = "external_api"
    FALLBACK_SEARCH = "fallback_search"


class PopularityMetric(Enum):
    VIEWS = "views"
    EXPORTS = "exports"


def _load_param_schema() -> tuple[int, dict["Family", tuple[str, ...]]]:
    raw = json.loads(
        resources.files("relart.data").joinpath("param_schema.json").read_text("utf-8")
    )
    schema = {Family(name): tuple(params) for name, params in raw["families"].items()}
    if set(schema) != set(Family):
        raise RuntimeError("param_schema.json does not cover every family")
    return raw["version"], schema


# Versioned parameter schema, shipped as package data: exactly these keys
# must be present on an arm of the given family, nothing else.
PARAM_SCHEMA_VERSION, PARAM_SCHEMA = _load_param_schema()


def _check_param(name: str, value: object) -> None:
    ok = True
    if name == "source_field":
        ok = value in ("title", "abstract")
    elif name == "ngram_order":
        ok = value in (1, 2, 3)
    elif name == "keyphrase_count":
        ok = isinstance(value, int) and not isinstance(value, bool) and value >= 1
    elif name == "query_parser":
        ok = value in ("standardQP", "edismaxQP")
    elif name == "rerank_readership":
        ok = isinstance(value, bool)
    elif name == "result_count":
        ok = isinstance(value, int) and not isinstance(value, bool) and value >= 1
    elif name == "popularity_metric":
        ok = value in ("views", "exports")
    if not ok:
        raise ValueError(f"invalid value for parameter {name}: {value!r}")


@dataclass(frozen=True)
class AlgorithmArm:
    """One fully parameterized recommendation algorithm instance."""

    arm_id: str
    family: Family
    params: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        schema = PARAM_SCHEMA[self.family]
        extra = set(self.params) - set(schema)
        missing = set(schema) - set(self.params)
        if extra or missing:
            raise ValueError(
                f"arm {self.arm_id!r} ({self.family.value}) parameter mismatch: "
                f"missing {sorted(missing)}, unexpected {sorted(extra)}"
            )
        for name in schema:
            _check_param(name, self.params[name])

    @property
    def result_count(self) -> int:
        return self.params["result_count"]

    @property
    def wants_rerank(self) -> bool:
        return bool(self.params.get("rerank_readership", False))


@dataclass(frozen=True)
class StereotypeList:
    """Operator-curated persona list for one collection."""

    collection_id: str
    doc_ids: tuple[int, ...]


def load_stereotype_file(path: str | Path, collection_id: str) -> StereotypeList:
    """Read a stereotype list: one internal_id per line, blank lines ignored."""
    ids = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line:
            ids.append(int(line))
    return StereotypeList(collection_id=collection_id, doc_ids=tuple(ids))


class ArmFailure(RuntimeError):
    """A family generator could not produce recommendations; the caller
    retries with the configured safe arm."""


class ExternalClientError(RuntimeError):
    """Transport-level failure (including timeout) of an external API."""


class ExternalRecommenderClient(ABC):
    """External recommendation API; implementations must be safe for
    concurrent calls and honor the timeout they are given."""

    @abstractmethod
    def related_ids(
        self, title: str, abstract: str, limit: int, timeout_s: float
    ) -> list[str]:
        """Partner-scoped original document ids, best first."""


class StaticExternalClient(ExternalRecommenderClient):
    """Stub returning a fixed id list regardless of the input document."""

    def __init__(self, ids: Sequence[str]) -> None:
        self._ids = list(ids)

    def related_ids(self, title, abstract, limit, timeout_s):
        return list(self._ids)


class RecommenderContext:
    """Immutable bundle of everything the generators read.

    Built once from a store snapshot; a corpus refresh builds a new
    context and the service swaps it atomically.
    """

    def __init__(
        self,
        store: CorpusStore,
        index: InvertedIndex,
        vectors: VectorIndex,
        collection_of: dict[int, str],
        popular: dict[PopularityMetric, dict[str, list[tuple[int, int]]]],
        stereotypes: dict[str, StereotypeList] | None = None,
        external_client: ExternalRecommenderClient | None = None,
    ) -> None:
        self.store = store
        self.index = index
        self.vectors = vectors
        self._collection_of = collection_of
        self._popular = popular
        self.stereotypes = stereotypes or {}
        self.external_client = external_client

    @classmethod
    def build(
        cls,
        store: CorpusStore,
        stereotypes: dict[str, StereotypeList] | None = None,
        external_client: ExternalRecommenderClient | None = None,
    ) -> "RecommenderContext":
        docs = sorted(store.documents(), key=lambda d: d.internal_id)
        index = InvertedIndex.build(docs)
        vectors = VectorIndex.build(docs, combined_stats(docs))
        collection_of = {d.internal_id: d.collection_id for d in docs}
        popular: dict[PopularityMetric, dict[str, list[tuple[int, int]]]] = {
            PopularityMetric.VIEWS: {},
            PopularityMetric.EXPORTS: {},
        }
        for doc in docs:
            for metric, count in (
                (PopularityMetric.VIEWS, doc.view_count),
                (PopularityMetric.EXPORTS, doc.export_count),
            ):
                popular[metric].setdefault(doc.collection_id, []).append(
                    (-count, doc.internal_id)
                )
        for by_collection in popular.values():
            for entries in by_collection.values():
                entries.sort()
        for persona in (stereotypes or {}).values():
            for doc_id in persona.doc_ids:
                if doc_id not in collection_of:
                    raise ValueError(
                        f"stereotype list for {persona.collection_id!r} references "
                        f"unknown internal_id {doc_id}"
                    )
        return cls(store, index, vectors, collection_of, popular, stereotypes, external_client)

    # -- family generators --------------------------------------------------

    def _in_scope(self, internal_id: int, scope: frozenset[str]) -> bool:
        return self._collection_of.get(internal_id) in scope

    def _scope_filter(
        self,
        candidates: Iterable[ScoredCandidate],
        scope: frozenset[str],
        exclude: int | None,
        k: int,
    ) -> list[ScoredCandidate]:
        out: list[ScoredCandidate] = []
        for cand in candidates:
            if cand.internal_id == exclude:
                continue
            if not self._in_scope(cand.internal_id, scope):
                continue
            out.append(cand)
            if len(out) == k:
                break
        return out

    def most_popular(
        self, metric: PopularityMetric, scope: Iterable[str], k: int
    ) -> list[ScoredCandidate]:
        """Documents in scope ranked by the chosen counter, ties by id."""
        lists = [self._popular[metric].get(cid, []) for cid in sorted(set(scope))]
        merged = heapq.merge(*lists)
        out = []
        for neg_count, doc_id in merged:
            out.append(ScoredCandidate(doc_id, float(-neg_count)))
            if len(out) == k:
                break
        return out

    def external_recommend(
        self,
        client: ExternalRecommenderClient,
        input_doc: DocumentRecord,
        k: int,
        scope: Iterable[str] | None = None,
    ) -> list[ScoredCandidate]:
        """Forward the document to an external API and map results home.

        Ids the store does not know within scope are dropped; failures
        become a typed error so the pipeline can fall back.
        """
        scope_list = sorted(set(scope)) if scope is not None else sorted(
            c.collection_id for c in self.store.collections()
        )
        try:
            ids = client.related_ids(
                input_doc.title, input_doc.abstract or "", k, EXTERNAL_TIMEOUT_S
            )
        except Exception as exc:
            raise ArmFailure(f"external recommendation API failed: {exc}") from exc
        out: list[ScoredCandidate] = []
        seen: set[int] = set()
        for rank, original_id in enumerate(ids):
            doc = self.store.lookup(scope_list, original_id)
            if doc is None or doc.internal_id == input_doc.internal_id:
                continue
            if doc.internal_id in seen:
                continue
            seen.add(doc.internal_id)
            out.append(ScoredCandidate(doc.internal_id, float(len(ids) - rank)))
            if len(out) == k:
                break
        return out

    def recommend(
        self,
        arm: AlgorithmArm,
        input_doc: DocumentRecord | None = None,
        query_title: str | None = None,
        scope: Iterable[str] = (),
        k: int | None = None,
    ) -> list[ScoredCandidate]:
        """Dispatch an arm to its family generator.

        Output never exceeds the arm's result count, never contains the
        input document and never leaves the given collection scope.
        """
        if (input_doc is None) == (query_title is None):
            raise ValueError("exactly one of input_doc / query_title must be given")
        if query_title is not None and arm.family is not Family.FALLBACK_SEARCH:
            raise ValueError("query_title is only valid for the fallback_search family")
        if arm.family is Family.FALLBACK_SEARCH and input_doc is not None:
            raise ValueError("fallback_search takes a query title, not a document")
        if k is None:
            k = arm.result_count
        elif k != arm.result_count:
            raise ValueError("k must equal the arm's result_count")
        scope_set = frozenset(scope)
        exclude = input_doc.internal_id if input_doc is not None else None

        if arm.family in (Family.CBF_TERMS, Family.CBF_KEYPHRASES):
            representation = (
                Representation.TERMS
                if arm.family is Family.CBF_TERMS
                else Representation.KEYPHRASES
            )
            max_terms = (
                arm.params.get("keyphrase_count", DEFAULT_MAX_QUERY_TERMS)
                if representation is Representation.KEYPHRASES
                else DEFAULT_MAX_QUERY_TERMS
            )
            query = build_query(
                input_doc,
                self.index,
                representation,
                SourceField(arm.params["source_field"]),
                max_query_terms=max_terms,
                parser=QueryParser(arm.params["query_parser"]),
                ngram_order=NgramOrder(arm.params.get("ngram_order", 2)),
            )
            ranked = rank_candidates(query, self.index, exclude=exclude)
            return self._scope_filter(ranked, scope_set, exclude, k)

        if arm.family is Family.CBF_EMBEDDINGS:
            vector = self.vectors.vector_for(input_doc.internal_id)
            if vector is None:
                vector = embed(input_doc, self.vectors.stats)
            return self.vectors.nearest(
                vector,
                k,
                exclude=exclude,
                allowed=lambda doc_id: self._collection_of.get(doc_id) in scope_set,
            )

        if arm.family is Family.STEREOTYPE:
            persona = self.stereotypes.get(input_doc.collection_id)
            if persona is None or not persona.doc_ids:
                raise ArmFailure(
                    f"no stereotype list for collection {input_doc.collection_id!r}"
                )
            total = len(persona.doc_ids)
            ranked = [
                ScoredCandidate(doc_id, float(total - pos))
                for pos, doc_id in enumerate(persona.doc_ids)
            ]
            return self._scope_filter(ranked, scope_set, exclude, k)

        if arm.family is Family.MOST_POPULAR:
            metric = PopularityMetric(arm.params["popularity_metric"])
            # fetch one extra so dropping the anchor still fills k
            ranked = self.most_popular(metric, scope_set, k + 1)
            return [c for c in ranked if c.internal_id != exclude][:k]

        if arm.family is Family.EXTERNAL_API:
            if self.external_client is None:
                raise ArmFailure("no external recommendation client configured")
            return self.external_recommend(self.external_client, input_doc, k, scope_set)

        ranked = search(query_title, self.index)
        return self._scope_filter(ranked, scope_set, None, k)
