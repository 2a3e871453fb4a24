"""Append-only delivery/click accounting and reporting.

Counting rule: repeat clicks on the same recommendation each count, so
click-through rate (CTR) is clicks over deliveries and is not capped at
1. A click always counts toward the grouping keys (partner, family,
calendar month) of the delivery it references, not of its own
timestamp. Months are UTC calendar months.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterator

from .persistence import KeyValueStore
from .xmlout import RecommendationSet

_NS_SETS = "recommendation_sets"
_NS_RECS = "recommendations"
_LOG_DELIVERIES = "deliveries"
_LOG_CLICKS = "clicks"

# Union of every arm schema, in the draw order; absent parameters export
# as empty fields, never as dropped columns.
_PARAM_COLUMNS = (
    "source_field",
    "ngram_order",
    "keyphrase_count",
    "query_parser",
    "rerank_readership",
    "result_count",
    "popularity_metric",
)
RARD_COLUMNS = (
    "recommendation_id",
    "set_id",
    "partner_id",
    "family",
    *_PARAM_COLUMNS,
    "suggested_rank",
    "delivered_at",
    "processing_time_ms",
    "clicked",
    "first_click_at",
)


class UnknownRecommendationError(KeyError):
    """Click against a recommendation id that was never delivered."""


def iso_utc(epoch: float) -> str:
    return datetime.fromtimestamp(epoch, tz=timezone.utc).isoformat()


def month_of(epoch: float) -> str:
    return datetime.fromtimestamp(epoch, tz=timezone.utc).strftime("%Y-%m")


@dataclass(frozen=True)
class DeliveryEvent:
    recommendation_id: str
    set_id: str
    arm_id: str
    partner_id: str
    rank: int
    timestamp: float
    processing_time_ms: int

    def to_dict(self) -> dict:
        return {
            "recommendation_id": self.recommendation_id,
            "set_id": self.set_id,
            "arm_id": self.arm_id,
            "partner_id": self.partner_id,
            "rank": self.rank,
            "timestamp": self.timestamp,
            "processing_time_ms": self.processing_time_ms,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DeliveryEvent":
        return cls(**data)


@dataclass(frozen=True)
class ClickEvent:
    recommendation_id: str
    timestamp: float

    def to_dict(self) -> dict:
        return {"recommendation_id": self.recommendation_id, "timestamp": self.timestamp}

    @classmethod
    def from_dict(cls, data: dict) -> "ClickEvent":
        return cls(**data)


@dataclass(frozen=True)
class CtrReport:
    deliveries: int
    clicks: int
    ctr: float | None
    partner_id: str | None = None
    family: str | None = None
    month: str | None = None

    def display(self) -> str:
        """Percentage with two decimals, e.g. 0.0012122 → '0.12%'."""
        if self.ctr is None:
            return "n/a"
        return f"{self.ctr * 100:.2f}%"


@dataclass(frozen=True)
class LatencyReport:
    bucket_width_ms: int
    buckets: tuple[tuple[int, int], ...]
    total: int
    fraction_under_150ms: float | None
    fraction_under_250ms: float | None


class EventLog:
    """Delivery/click records plus the persisted sets they reference."""

    def __init__(self, backend: KeyValueStore) -> None:
        self._backend = backend

    # -- writes -------------------------------------------------------------

    def record_set(self, rset: RecommendationSet) -> None:
        """Persist a delivered set and append one delivery event per item."""
        self._backend.put(_NS_SETS, rset.set_id, rset.to_dict())
        for item in rset.items:
            self._backend.put(
                _NS_RECS,
                item.recommendation_id,
                {
                    "set_id": rset.set_id,
                    "fallback_url": item.fallback_url,
                    "partner_id": rset.partner_id,
                },
            )
            event = DeliveryEvent(
                recommendation_id=item.recommendation_id,
                set_id=rset.set_id,
                arm_id=rset.arm.arm_id,
                partner_id=rset.partner_id,
                rank=item.suggested_rank,
                timestamp=rset.delivered_at,
                processing_time_ms=rset.processing_time_ms,
            )
            self._backend.append(_LOG_DELIVERIES, event.to_dict())

    def record_click(self, recommendation_id: str, timestamp: float) -> str:
        """Append a click and return the item's fallback_url.

        Unknown ids raise without logging anything: every click in the
        log must join to an existing delivery.
        """
        pointer = self._backend.get(_NS_RECS, recommendation_id)
        if pointer is None:
            raise UnknownRecommendationError(recommendation_id)
        self._backend.append(
            _LOG_CLICKS, ClickEvent(recommendation_id, timestamp).to_dict()
        )
        return pointer["fallback_url"]

    # -- reads --------------------------------------------------------------

    def recommendation_target(self, recommendation_id: str) -> str | None:
        pointer = self._backend.get(_NS_RECS, recommendation_id)
        return None if pointer is None else pointer["fallback_url"]

    def get_set(self, set_id: str) -> RecommendationSet | None:
        data = self._backend.get(_NS_SETS, set_id)
        return None if data is None else RecommendationSet.from_dict(data)

    def deliveries(self) -> Iterator[DeliveryEvent]:
        for record in self._backend.log_records(_LOG_DELIVERIES):
            yield DeliveryEvent.from_dict(record)

    def clicks(self) -> Iterator[ClickEvent]:
        for record in self._backend.log_records(_LOG_CLICKS):
            yield ClickEvent.from_dict(record)

    def delivery_count(self) -> int:
        return self._backend.log_len(_LOG_DELIVERIES)

    def click_count(self) -> int:
        return self._backend.log_len(_LOG_CLICKS)

    def _family_of_set(self) -> dict[str, str]:
        return {
            set_id: data["arm"]["family"]
            for set_id, data in self._backend.items(_NS_SETS)
        }

    # -- reports ------------------------------------------------------------

    def ctr(
        self,
        partner: str | None = None,
        family: str | None = None,
        month: str | None = None,
    ) -> CtrReport:
        """Clicks over deliveries for the matching slice.

        With zero matching deliveries the rate is undefined and reported
        as absent (None), not zero.
        """
        family_of = self._family_of_set() if family is not None else {}

        def matches(event: DeliveryEvent) -> bool:
            if partner is not None and event.partner_id != partner:
                return False
            if family is not None and family_of.get(event.set_id) != family:
                return False
            if month is not None and month_of(event.timestamp) != month:
                return False
            return True

        matched: set[str] = set()
        delivered = 0
        for event in self.deliveries():
            if matches(event):
                delivered += 1
                matched.add(event.recommendation_id)
        clicked = sum(1 for c in self.clicks() if c.recommendation_id in matched)
        rate = clicked / delivered if delivered else None
        return CtrReport(
            deliveries=delivered,
            clicks=clicked,
            ctr=rate,
            partner_id=partner,
            family=family,
            month=month,
        )

    def latency_histogram(self, bucket_width_ms: int) -> LatencyReport:
        """Histogram of per-delivery processing time, with cumulative
        fractions strictly under the 150 ms and 250 ms marks."""
        if bucket_width_ms < 1:
            raise ValueError("bucket_width_ms must be a positive integer")
        counts: dict[int, int] = {}
        total = 0
        under_150 = 0
        under_250 = 0
        for event in self.deliveries():
            total += 1
            bucket = (event.processing_time_ms // bucket_width_ms) * bucket_width_ms
            counts[bucket] = counts.get(bucket, 0) + 1
            if event.processing_time_ms < 150:
                under_150 += 1
            if event.processing_time_ms < 250:
                under_250 += 1
        buckets = tuple(sorted(counts.items()))
        return LatencyReport(
            bucket_width_ms=bucket_width_ms,
            buckets=buckets,
            total=total,
            fraction_under_150ms=under_150 / total if total else None,
            fraction_under_250ms=under_250 / total if total else None,
        )

    # -- export -------------------------------------------------------------

    def export_rard(self, path: str | Path) -> int:
        """Write the delivery log as CSV, one row per delivery.

        Booleans export lowercase ('true'/'false'); absent parameters
        export as empty strings under their fixed columns. Rows are
        ordered by delivery time then recommendation id, so an export
        from an unchanged log is byte-identical.
        """
        params_of: dict[str, dict] = {}
        for set_id, data in self._backend.items(_NS_SETS):
            params_of[set_id] = data["choice"]["params"]
        first_click: dict[str, float] = {}
        has_click: set[str] = set()
        for click in self.clicks():
            has_click.add(click.recommendation_id)
            prior = first_click.get(click.recommendation_id)
            if prior is None or click.timestamp < prior:
                first_click[click.recommendation_id] = click.timestamp
        family_of = self._family_of_set()

        def cell(value: object) -> str:
            if value is None:
                return ""
            if isinstance(value, bool):
                return "true" if value else "false"
            return str(value)

        rows = sorted(self.deliveries(), key=lambda e: (e.timestamp, e.recommendation_id))
        with open(path, "w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(RARD_COLUMNS)
            for event in rows:
                params = params_of.get(event.set_id, {})
                writer.writerow(
                    [
                        event.recommendation_id,
                        event.set_id,
                        event.partner_id,
                        family_of.get(event.set_id, ""),
                        *(cell(params.get(name)) for name in _PARAM_COLUMNS),
                        event.rank,
                        iso_utc(event.timestamp),
                        event.processing_time_ms,
                        1 if event.recommendation_id in has_click else 0,
                        iso_utc(first_click[event.recommendation_id])
                        if event.recommendation_id in first_click
                        else "",
                    ]
                )
        return len(rows)
