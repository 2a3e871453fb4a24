"""Response model and canonical XML serialization.

The wire format is pinned byte-for-byte: declaration, two-space indent,
attribute order, inline element text. Snippets are HTML (span markup)
carried inside XML text, so the serializer escapes them; consumers
un-escape by reading the text content back.
"""

from __future__ import annotations

from dataclasses import dataclass

from .abtest import ChoiceRecord
from .corpus import DocumentRecord
from .recommenders import AlgorithmArm, Family

XML_DECLARATION = '<?xml version="1.0" encoding="UTF-8" standalone="no"?>'
SUGGESTED_LABEL = "Related Articles"
SNIPPET_FORMAT = "html_and_css"


def escape_text(value: str) -> str:
    return value.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def escape_attr(value: str) -> str:
    return escape_text(value).replace('"', "&quot;")


def build_snippet(doc: DocumentRecord) -> str:
    """Pre-styled HTML snippet: title, authors, journal, volume, year.

    Spans for absent fields are omitted; present ones keep the fixed
    order and are joined with ". ".
    """
    spans: list[tuple[str, str]] = [("mdl-title", doc.title)]
    if doc.authors:
        spans.append(("authors", ", ".join(doc.authors)))
    if doc.journal:
        spans.append(("journal", doc.journal))
    if doc.volume_and_number:
        spans.append(("volume_and_number", doc.volume_and_number))
    if doc.year is not None:
        spans.append(("year", str(doc.year)))
    # values are HTML-escaped here; the XML serializer escapes the markup
    # itself a second time on the way out
    return ". ".join(
        f'<span class="{cls}">{escape_text(text)}</span>' for cls, text in spans
    )


@dataclass(frozen=True)
class DeliveredItem:
    recommendation_id: str
    internal_id: int
    original_document_id: str
    suggested_rank: int
    click_url: str
    fallback_url: str
    snippet_html: str

    def __post_init__(self) -> None:
        if self.suggested_rank < 1:
            raise ValueError("suggested_rank must be >= 1")

    def to_dict(self) -> dict:
        return {
            "recommendation_id": self.recommendation_id,
            "internal_id": self.internal_id,
            "original_document_id": self.original_document_id,
            "suggested_rank": self.suggested_rank,
            "click_url": self.click_url,
            "fallback_url": self.fallback_url,
            "snippet_html": self.snippet_html,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DeliveredItem":
        return cls(**data)


@dataclass(frozen=True)
class RecommendationSet:
    """Everything one 200 response delivered, ready for replay."""

    set_id: str
    request_id: str
    partner_id: str
    input_document_id: str | None
    query_title: str | None
    arm: AlgorithmArm
    choice: ChoiceRecord
    items: tuple[DeliveredItem, ...]
    processing_time_ms: int
    delivered_at: float

    def __post_init__(self) -> None:
        ranks = [item.suggested_rank for item in self.items]
        if ranks != list(range(1, len(ranks) + 1)):
            raise ValueError(f"suggested_rank must be contiguous from 1, got {ranks}")
        if self.processing_time_ms < 0:
            raise ValueError("processing_time_ms must be non-negative")

    def to_dict(self) -> dict:
        return {
            "set_id": self.set_id,
            "request_id": self.request_id,
            "partner_id": self.partner_id,
            "input_document_id": self.input_document_id,
            "query_title": self.query_title,
            "arm": {
                "arm_id": self.arm.arm_id,
                "family": self.arm.family.value,
                "params": dict(self.arm.params),
            },
            "choice": self.choice.to_dict(),
            "items": [item.to_dict() for item in self.items],
            "processing_time_ms": self.processing_time_ms,
            "delivered_at": self.delivered_at,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RecommendationSet":
        arm = AlgorithmArm(
            arm_id=data["arm"]["arm_id"],
            family=Family(data["arm"]["family"]),
            params=dict(data["arm"]["params"]),
        )
        choice = ChoiceRecord(**data["choice"])
        return cls(
            set_id=data["set_id"],
            request_id=data["request_id"],
            partner_id=data["partner_id"],
            input_document_id=data["input_document_id"],
            query_title=data["query_title"],
            arm=arm,
            choice=choice,
            items=tuple(DeliveredItem.from_dict(d) for d in data["items"]),
            processing_time_ms=data["processing_time_ms"],
            delivered_at=data["delivered_at"],
        )


def serialize_response(rset: RecommendationSet) -> bytes:
    """Canonical bytes for one response; valid sets cannot fail."""
    lines = [XML_DECLARATION]
    if not rset.items:
        lines.append(f'<related_articles suggested_label="{escape_attr(SUGGESTED_LABEL)}"/>')
    else:
        lines.append(f'<related_articles suggested_label="{escape_attr(SUGGESTED_LABEL)}">')
        for item in rset.items:
            lines.append(
                f'  <related_article document_id="{item.internal_id}" '
                f'original_document_id="{escape_attr(item.original_document_id)}">'
            )
            lines.append(f"    <click_url>{escape_text(item.click_url)}</click_url>")
            lines.append(f"    <fallback_url>{escape_text(item.fallback_url)}</fallback_url>")
            lines.append(
                f'    <snippet format="{SNIPPET_FORMAT}">{escape_text(item.snippet_html)}</snippet>'
            )
            lines.append(f"    <suggested_rank>{item.suggested_rank}</suggested_rank>")
            lines.append("  </related_article>")
        lines.append("</related_articles>")
    return ("\n".join(lines) + "\n").encode("utf-8")
