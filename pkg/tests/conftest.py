"""Shared fixtures: synthetic documents and a fully wired test service."""

from __future__ import annotations

import random

import pytest

from relart.abtest import default_config
from relart.corpus import (
    Collection,
    CollectionKind,
    CorpusStore,
    DocumentRecord,
    Partner,
)
from relart.events import EventLog
from relart.persistence import InMemoryStore
from relart.recommenders import RecommenderContext
from relart.service import ServiceState, create_app
from relart.textstats import Language

# Vocabulary of plausible content words; none of them are stopwords and
# all survive the minimum-length rule.
VOCABULARY = [
    "migration", "policy", "refugee", "integration", "housing", "labor",
    "market", "education", "school", "language", "social", "welfare",
    "survey", "panel", "analysis", "model", "regression", "network",
    "city", "region", "income", "poverty", "health", "family",
    "youth", "employment", "training", "program", "evaluation", "reform",
    "citizenship", "asylum", "border", "identity", "culture", "religion",
    "gender", "age", "cohort", "attitude", "opinion", "media",
    "discourse", "participation", "election", "party", "trust", "capital",
    "mobility", "segregation", "neighborhood", "community", "volunteer", "care",
]


def make_doc(internal_id: int, **overrides) -> DocumentRecord:
    """A valid document with boring defaults, overridable per test."""
    defaults = dict(
        internal_id=internal_id,
        original_document_id=f"doc-{internal_id}",
        collection_id="main",
        title=f"title {internal_id}",
        landing_url=f"http://example.org/doc-{internal_id}",
        language=Language.EN,
    )
    defaults.update(overrides)
    return DocumentRecord(**defaults)


def random_corpus(
    rng: random.Random,
    n_docs: int,
    collection_id: str = "main",
    first_id: int = 1,
) -> list[DocumentRecord]:
    docs = []
    for i in range(n_docs):
        title = " ".join(rng.choices(VOCABULARY, k=rng.randint(3, 8)))
        abstract = (
            " ".join(rng.choices(VOCABULARY, k=rng.randint(15, 40)))
            if rng.random() > 0.15
            else None
        )
        docs.append(
            make_doc(
                first_id + i,
                original_document_id=f"{collection_id}-doc-{first_id + i}",
                collection_id=collection_id,
                title=title,
                abstract=abstract,
                view_count=rng.randint(0, 500),
                export_count=rng.randint(0, 100),
                readership_count=rng.randint(0, 50),
            )
        )
    return docs


class SequentialIds:
    """Deterministic replacement for the uuid id factory."""

    def __init__(self) -> None:
        self.counts: dict[str, int] = {}

    def __call__(self, kind: str) -> str:
        self.counts[kind] = self.counts.get(kind, 0) + 1
        return f"{kind}-{self.counts[kind]:04d}"


class ServiceEnv:
    def __init__(
        self,
        docs: list[DocumentRecord] | None = None,
        stereotypes: dict | None = None,
        external_client=None,
    ) -> None:
        self.backend = InMemoryStore()
        self.store = CorpusStore(self.backend)
        self.store.add_partner(Partner("sowiport", "Sowiport", "test-key"))
        self.store.add_collection(Collection("main", "sowiport", CollectionKind.PUBLIC))
        if docs is None:
            docs = random_corpus(random.Random(7), 12)
        for doc in docs:
            stored = self.store.add_document(
                doc.collection_id,
                doc.original_document_id,
                title=doc.title,
                landing_url=doc.landing_url,
                abstract=doc.abstract,
                authors=doc.authors,
                journal=doc.journal,
                volume_and_number=doc.volume_and_number,
                year=doc.year,
                language=doc.language,
                view_count=doc.view_count,
                export_count=doc.export_count,
                readership_count=doc.readership_count,
            )
            assert stored is not None
        self.ids = SequentialIds()
        self.events = EventLog(self.backend)
        context = RecommenderContext.build(
            self.store, stereotypes=stereotypes, external_client=external_client
        )
        self.state = ServiceState(
            store=self.store,
            events=self.events,
            config=default_config(),
            context=context,
            id_factory=self.ids,
            clock=lambda: 1724400000.0,
        )
        self.app = create_app(self.state)

    def client(self):
        from fastapi.testclient import TestClient

        return TestClient(self.app)

    def get(self, client, path, **kwargs):
        headers = {"X-Api-Key": "test-key"}
        headers.update(kwargs.pop("headers", {}))
        return client.get(path, headers=headers, **kwargs)


@pytest.fixture
def service_env() -> ServiceEnv:
    return ServiceEnv()
