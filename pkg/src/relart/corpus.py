"""Partners, collections and the document catalog.

Owns ingestion of partner XML exports, deterministic language detection,
best-effort readership enrichment and scoped lookups. All writes go
through a single lock; reads see immutable records and never a
half-written one.
"""

from __future__ import annotations

import logging
import threading
import xml.etree.ElementTree as ET
from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import BinaryIO, Iterator
from urllib.parse import urlsplit

from .persistence import InMemoryStore, KeyValueStore
from .textstats import STOPWORDS_DE, STOPWORDS_EN, Language, split_words

logger = logging.getLogger(__name__)

_NS_PARTNERS = "partners"
_NS_COLLECTIONS = "collections"
_NS_DOCUMENTS = "documents"
_NS_DOC_INDEX = "documents_by_internal_id"
_NS_META = "meta"

_KNOWN_FIELDS = {
    "original_id",
    "title",
    "abstract",
    "authors",
    "journal",
    "volume_and_number",
    "year",
    "language",
    "landing_url",
    "views",
    "exports",
}

YEAR_MIN = 1450
YEAR_MAX = 2100


class CollectionKind(Enum):
    PUBLIC = "public"
    PRIVATE = "private"
    USER = "user"


class IngestError(RuntimeError):
    """Top-level ingest failure (unknown collection, malformed XML)."""


@dataclass(frozen=True)
class Partner:
    partner_id: str
    name: str
    api_key: str

    def __post_init__(self) -> None:
        if not self.partner_id:
            raise ValueError("partner_id must be non-empty")
        if not self.api_key:
            raise ValueError("api_key must be non-empty")


@dataclass(frozen=True)
class Collection:
    collection_id: str
    owner: str
    kind: CollectionKind


@dataclass(frozen=True)
class DocumentRecord:
    """One catalog entry: metadata plus popularity and enrichment counters."""

    internal_id: int
    original_document_id: str
    collection_id: str
    title: str
    landing_url: str
    abstract: str | None = None
    authors: tuple[str, ...] = ()
    journal: str | None = None
    volume_and_number: str | None = None
    year: int | None = None
    language: Language = Language.UNKNOWN
    language_flagged: bool = False
    readership_count: int = 0
    view_count: int = 0
    export_count: int = 0

    def to_dict(self) -> dict:
        return {
            "internal_id": self.internal_id,
            "original_document_id": self.original_document_id,
            "collection_id": self.collection_id,
            "title": self.title,
            "landing_url": self.landing_url,
            "abstract": self.abstract,
            "authors": list(self.authors),
            "journal": self.journal,
            "volume_and_number": self.volume_and_number,
            "year": self.year,
            "language": self.language.value,
            "language_flagged": self.language_flagged,
            "readership_count": self.readership_count,
            "view_count": self.view_count,
            "export_count": self.export_count,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DocumentRecord":
        return cls(
            internal_id=data["internal_id"],
            original_document_id=data["original_document_id"],
            collection_id=data["collection_id"],
            title=data["title"],
            landing_url=data["landing_url"],
            abstract=data.get("abstract"),
            authors=tuple(data.get("authors", ())),
            journal=data.get("journal"),
            volume_and_number=data.get("volume_and_number"),
            year=data.get("year"),
            language=Language(data.get("language", "unknown")),
            language_flagged=data.get("language_flagged", False),
            readership_count=data.get("readership_count", 0),
            view_count=data.get("view_count", 0),
            export_count=data.get("export_count", 0),
        )


@dataclass
class IngestReport:
    documents_seen: int = 0
    documents_stored: int = 0
    duplicates_skipped: int = 0
    parse_errors: int = 0
    unknown_field_warnings: int = 0


def detect_language(text: str) -> Language:
    """Classify text by counting hits against the built-in stopword lists.

    The list with more hits wins; ties (including zero hits on both)
    give unknown. Deterministic by construction.
    """
    hits_en = 0
    hits_de = 0
    for word in split_words(text):
        if word in STOPWORDS_EN:
            hits_en += 1
        if word in STOPWORDS_DE:
            hits_de += 1
    if hits_en == hits_de:
        return Language.UNKNOWN
    return Language.EN if hits_en > hits_de else Language.DE


class ReadershipClient(ABC):
    """External readership source; production and stub clients look alike."""

    @abstractmethod
    def readership(self, doc: DocumentRecord) -> int | None:
        """Reader count for a document, or None when the source has none."""


class StaticReadershipClient(ReadershipClient):
    """Stub backed by a plain mapping of original_document_id -> count."""

    def __init__(self, counts: dict[str, int]) -> None:
        self._counts = dict(counts)

    def readership(self, doc: DocumentRecord) -> int | None:
        return self._counts.get(doc.original_document_id)


class _DocFieldError(ValueError):
    """A single <doc> element failed validation; ingest continues."""


def _is_absolute_url(url: str) -> bool:
    parts = urlsplit(url)
    return parts.scheme in ("http", "https") and bool(parts.netloc)


class CorpusStore:
    """Document catalog over a pluggable key/value backend."""

    def __init__(self, backend: KeyValueStore | None = None) -> None:
        self._backend = backend if backend is not None else InMemoryStore()
        self._write_lock = threading.RLock()

    @property
    def backend(self) -> KeyValueStore:
        return self._backend

    # -- partners and collections ------------------------------------------

    def add_partner(self, partner: Partner) -> None:
        with self._write_lock:
            if self._backend.get(_NS_PARTNERS, partner.partner_id) is not None:
                raise ValueError(f"partner_id already registered: {partner.partner_id}")
            self._backend.put(
                _NS_PARTNERS,
                partner.partner_id,
                {"partner_id": partner.partner_id, "name": partner.name, "api_key": partner.api_key},
            )

    def get_partner(self, partner_id: str) -> Partner | None:
        data = self._backend.get(_NS_PARTNERS, partner_id)
        return Partner(**data) if data else None

    def partner_by_api_key(self, api_key: str) -> Partner | None:
        for _, data in self._backend.items(_NS_PARTNERS):
            if data["api_key"] == api_key:
                return Partner(**data)
        return None

    def partners(self) -> list[Partner]:
        return [Partner(**data) for _, data in self._backend.items(_NS_PARTNERS)]

    def add_collection(self, collection: Collection) -> None:
        with self._write_lock:
            if self._backend.get(_NS_PARTNERS, collection.owner) is None:
                raise ValueError(f"unknown owner partner: {collection.owner}")
            if self._backend.get(_NS_COLLECTIONS, collection.collection_id) is not None:
                raise ValueError(f"collection already registered: {collection.collection_id}")
            self._backend.put(
                _NS_COLLECTIONS,
                collection.collection_id,
                {
                    "collection_id": collection.collection_id,
                    "owner": collection.owner,
                    "kind": collection.kind.value,
                },
            )

    def get_collection(self, collection_id: str) -> Collection | None:
        data = self._backend.get(_NS_COLLECTIONS, collection_id)
        if data is None:
            return None
        return Collection(data["collection_id"], data["owner"], CollectionKind(data["kind"]))

    def collections(self) -> list[Collection]:
        return [
            Collection(d["collection_id"], d["owner"], CollectionKind(d["kind"]))
            for _, d in self._backend.items(_NS_COLLECTIONS)
        ]

    def visible_collections(self, partner_id: str) -> list[str]:
        """Collections whose content may be recommended to this partner.

        Public collections are visible to everyone; private and user
        collections only to their owner.
        """
        visible = []
        for coll in self.collections():
            if coll.kind is CollectionKind.PUBLIC or coll.owner == partner_id:
                visible.append(coll.collection_id)
        return sorted(visible)

    # -- documents ----------------------------------------------------------

    @staticmethod
    def _doc_key(collection_id: str, original_document_id: str) -> str:
        return f"{collection_id}\x1f{original_document_id}"

    def lookup(self, collection_scope: list[str], original_document_id: str) -> DocumentRecord | None:
        """Find a document by partner-scoped id within the given collections.

        Absence is a normal result; the caller decides whether to fall
        back to free-text search.
        """
        for collection_id in collection_scope:
            data = self._backend.get(_NS_DOCUMENTS, self._doc_key(collection_id, original_document_id))
            if data is not None:
                return DocumentRecord.from_dict(data)
        return None

    def get_by_internal_id(self, internal_id: int) -> DocumentRecord | None:
        key = self._backend.get(_NS_DOC_INDEX, str(internal_id))
        if key is None:
            return None
        data = self._backend.get(_NS_DOCUMENTS, key)
        return DocumentRecord.from_dict(data) if data else None

    def documents(self) -> Iterator[DocumentRecord]:
        for _, data in self._backend.items(_NS_DOCUMENTS):
            yield DocumentRecord.from_dict(data)

    def documents_in(self, collection_id: str) -> Iterator[DocumentRecord]:
        for doc in self.documents():
            if doc.collection_id == collection_id:
                yield doc

    def document_count(self) -> int:
        return len(self._backend.keys(_NS_DOCUMENTS))

    def _next_internal_id(self) -> int:
        current = self._backend.get(_NS_META, "next_internal_id") or 1
        self._backend.put(_NS_META, "next_internal_id", current + 1)
        return current

    def add_document(
        self,
        collection_id: str,
        original_document_id: str,
        title: str,
        landing_url: str,
        **fields,
    ) -> DocumentRecord | None:
        """Store a new document; returns None when the id is already taken
        in the collection (first write wins)."""
        with self._write_lock:
            key = self._doc_key(collection_id, original_document_id)
            if self._backend.get(_NS_DOCUMENTS, key) is not None:
                return None
            doc = DocumentRecord(
                internal_id=self._next_internal_id(),
                original_document_id=original_document_id,
                collection_id=collection_id,
                title=title,
                landing_url=landing_url,
                **fields,
            )
            self._backend.put(_NS_DOCUMENTS, key, doc.to_dict())
            self._backend.put(_NS_DOC_INDEX, str(doc.internal_id), key)
            return doc

    def _update_document(self, doc: DocumentRecord) -> None:
        key = self._doc_key(doc.collection_id, doc.original_document_id)
        self._backend.put(_NS_DOCUMENTS, key, doc.to_dict())

    # -- ingest -------------------------------------------------------------

    def ingest_xml(self, source: BinaryIO, collection_id: str) -> IngestReport:
        """Stream an ingest XML export into a collection.

        Memory stays bounded regardless of file size: document elements
        are processed and discarded one at a time. A syntax error at the
        XML level aborts with position info; a single invalid <doc> is
        counted as a parse error and ingestion continues.
        """
        if self.get_collection(collection_id) is None:
            raise IngestError(f"unknown collection: {collection_id}")
        report = IngestReport()
        root = None
        try:
            for event, elem in ET.iterparse(source, events=("start", "end")):
                if event == "start":
                    if root is None:
                        root = elem
                        if elem.tag != "corpus":
                            raise IngestError(
                                f"unexpected root element <{elem.tag}>; expected <corpus>"
                            )
                    continue
                if elem.tag != "doc" or elem is root:
                    continue
                report.documents_seen += 1
                try:
                    parsed, unknown = _parse_doc_element(elem)
                except _DocFieldError as exc:
                    logger.warning("skipping document %d: %s", report.documents_seen, exc)
                    report.parse_errors += 1
                else:
                    report.unknown_field_warnings += unknown
                    with self._write_lock:
                        stored = self.add_document(collection_id, **parsed)
                    if stored is None:
                        report.duplicates_skipped += 1
                    else:
                        report.documents_stored += 1
                if root is not None:
                    root.clear()
        except ET.ParseError as exc:
            raise IngestError(f"malformed XML at line {exc.position[0]}, column {exc.position[1]}: {exc}") from exc
        return report

    # -- enrichment ---------------------------------------------------------

    def enrich_readership(self, internal_id: int, client: ReadershipClient) -> DocumentRecord:
        """Refresh a document's readership counter from an external source.

        Best-effort: a client miss or failure leaves the record unchanged.
        Counters never decrease, so a lower value from the client is kept
        out of the record.
        """
        doc = self.get_by_internal_id(internal_id)
        if doc is None:
            raise ValueError(f"unknown internal_id: {internal_id}")
        try:
            value = client.readership(doc)
        except Exception:
            logger.error("readership lookup failed for document %d", internal_id, exc_info=True)
            return doc
        if value is None:
            return doc
        new_count = max(doc.readership_count, int(value))
        if new_count == doc.readership_count:
            return doc
        with self._write_lock:
            updated = replace(doc, readership_count=new_count)
            self._update_document(updated)
        return updated


def _text_of(elem: ET.Element) -> str:
    return (elem.text or "").strip()


def _parse_doc_element(elem: ET.Element) -> tuple[dict, int]:
    """Turn one <doc> element into add_document kwargs.

    Raises _DocFieldError for missing required fields or invalid values;
    returns the number of unknown field names alongside the parsed dict.
    """
    values: dict[str, str] = {}
    authors: list[str] = []
    unknown = 0
    for child in elem:
        name = child.get("name") if child.tag == "field" else None
        if name is None or name not in _KNOWN_FIELDS:
            unknown += 1
            logger.warning("ignoring unknown ingest field %r", name or child.tag)
            continue
        if name == "authors":
            if _text_of(child):
                authors.append(_text_of(child))
        else:
            values[name] = _text_of(child)

    original_id = values.get("original_id", "")
    title = values.get("title", "")
    if not original_id:
        raise _DocFieldError("missing required field original_id")
    if not title:
        raise _DocFieldError("missing required field title")

    year: int | None = None
    if values.get("year"):
        try:
            year = int(values["year"])
        except ValueError as exc:
            raise _DocFieldError(f"invalid year {values['year']!r}") from exc
        if not (YEAR_MIN <= year <= YEAR_MAX):
            raise _DocFieldError(f"year {year} outside [{YEAR_MIN}, {YEAR_MAX}]")

    counters = {}
    for field_name, attr in (("views", "view_count"), ("exports", "export_count")):
        raw = values.get(field_name)
        if raw:
            try:
                count = int(raw)
            except ValueError as exc:
                raise _DocFieldError(f"invalid {field_name} {raw!r}") from exc
            if count < 0:
                raise _DocFieldError(f"negative {field_name}: {count}")
            counters[attr] = count

    landing_url = values.get("landing_url", "")
    if landing_url:
        if not _is_absolute_url(landing_url):
            raise _DocFieldError(f"landing_url is not absolute: {landing_url!r}")
    else:
        landing_url = f"https://docs.invalid/{original_id}"

    abstract = values.get("abstract") or None

    meta_language: Language | None = None
    raw_language = values.get("language", "").lower()
    if raw_language in ("en", "de"):
        meta_language = Language(raw_language)
    elif raw_language:
        logger.warning("unrecognized language metadata %r; treating as absent", raw_language)

    detected = detect_language(title + " " + (abstract or ""))
    if meta_language is None:
        language = detected
        flagged = False
    else:
        language = meta_language
        flagged = detected is not Language.UNKNOWN and detected is not meta_language

    return (
        {
            "original_document_id": original_id,
            "title": title,
            "landing_url": landing_url,
            "abstract": abstract,
            "authors": tuple(authors),
            "journal": values.get("journal") or None,
            "volume_and_number": values.get("volume_and_number") or None,
            "year": year,
            "language": language,
            "language_flagged": flagged,
            **counters,
        },
        unknown,
    )
