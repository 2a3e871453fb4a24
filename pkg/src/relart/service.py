"""HTTP surface: related-documents endpoint, click redirect, pipeline.

Per request: look the document up in the partner's visible collections,
let the A/B engine pick and parameterize an arm, generate candidates,
optionally re-rank by readership, persist the delivered set, then
serialize the XML response. Arm failures retry once with the configured
safe arm; a recommendation response degrades, it never turns into a 500.
"""

from __future__ import annotations

import logging
import re
import time
import uuid
from typing import Callable

from fastapi import FastAPI, HTTPException, Request, Response
from fastapi.responses import RedirectResponse

from .abtest import AbConfig, ChoiceRecord, arm_for_request, forced_arm, seed_for_request
from .corpus import CorpusStore, DocumentRecord, Partner
from .events import EventLog, UnknownRecommendationError
from .recommenders import ArmFailure, Family, RecommenderContext
from .rerank import rerank
from .xmlout import DeliveredItem, RecommendationSet, build_snippet, serialize_response

logger = logging.getLogger(__name__)

DOC_ID_RE = re.compile(r"^[A-Za-z0-9._:-]{1,512}$")
XML_CONTENT_TYPE = "application/xml; charset=UTF-8"


def _default_id_factory(kind: str) -> str:
    return f"{kind}-{uuid.uuid4().hex}"


class ServiceState:
    """Everything the handlers touch, swapped atomically on refresh.

    `id_factory` and `clock` are injectable so tests can pin ids and
    timestamps; production uses uuid4 and wall time.
    """

    def __init__(
        self,
        store: CorpusStore,
        events: EventLog,
        config: AbConfig,
        context: RecommenderContext | None = None,
        base_url: str = "http://localhost:8080",
        id_factory: Callable[[str], str] = _default_id_factory,
        clock: Callable[[], float] = time.time,
    ) -> None:
        self.store = store
        self.events = events
        self.config = config
        self.context = context if context is not None else RecommenderContext.build(store)
        self.base_url = base_url.rstrip("/")
        self.id_factory = id_factory
        self.clock = clock

    def refresh(self) -> None:
        """Rebuild the retrieval context from the current store snapshot."""
        self.context = RecommenderContext.build(
            self.store,
            stereotypes=self.context.stereotypes,
            external_client=self.context.external_client,
        )

    def click_url(self, recommendation_id: str) -> str:
        return f"{self.base_url}/v1/recommendations/{recommendation_id}/original_url"


def _authenticate(state: ServiceState, request: Request) -> Partner:
    api_key = request.headers.get("X-Api-Key")
    partner = state.store.partner_by_api_key(api_key) if api_key else None
    if partner is None:
        raise HTTPException(status_code=401, detail="unknown or missing api key")
    return partner


def _safe_choice(state: ServiceState, request_id: str) -> tuple:
    arm = state.config.safe_arm
    choice = ChoiceRecord(
        request_id=request_id,
        arm_id=arm.arm_id,
        family=arm.family.value,
        params=dict(arm.params),
        rng_seed=seed_for_request(request_id),
        forced=True,
    )
    return arm, choice


def _generate(
    context: RecommenderContext,
    arm,
    doc: DocumentRecord | None,
    title: str | None,
    scope: list[str],
):
    if arm.family is Family.FALLBACK_SEARCH:
        query = doc.title if doc is not None else (title or "")
        return context.recommend(arm, query_title=query, scope=scope)
    return context.recommend(arm, input_doc=doc, scope=scope)


def create_app(state: ServiceState) -> FastAPI:
    app = FastAPI(title="related-articles service", docs_url=None, redoc_url=None)
    app.state.service = state

    def related_documents(document_id: str, request: Request, title: str | None = None):
        started = time.perf_counter()
        partner = _authenticate(state, request)
        if not DOC_ID_RE.fullmatch(document_id):
            raise HTTPException(status_code=400, detail="malformed document id")
        request_id = request.headers.get("X-Request-Id") or state.id_factory("req")
        context = state.context
        scope = state.store.visible_collections(partner.partner_id)
        doc = state.store.lookup(scope, document_id)

        if doc is not None:
            arm, choice = arm_for_request(state.config, request_id)
        elif title is not None:
            arm, choice = forced_arm(state.config, Family.FALLBACK_SEARCH, request_id)
        else:
            raise HTTPException(status_code=404, detail="unknown document id")

        try:
            candidates = _generate(context, arm, doc, title, scope)
        except ArmFailure as failure:
            logger.warning("arm %s failed (%s); retrying with safe arm", arm.arm_id, failure)
            arm, choice = _safe_choice(state, request_id)
            try:
                candidates = _generate(context, arm, doc, title, scope)
            except ArmFailure as second:
                logger.error("safe arm failed too (%s); delivering empty set", second)
                candidates = []

        if arm.wants_rerank:
            candidates = rerank(candidates, state.store)

        items = []
        for rank, candidate in enumerate(candidates, start=1):
            rec_doc = state.store.get_by_internal_id(candidate.internal_id)
            if rec_doc is None:
                continue
            rec_id = state.id_factory("rec")
            items.append(
                DeliveredItem(
                    recommendation_id=rec_id,
                    internal_id=rec_doc.internal_id,
                    original_document_id=rec_doc.original_document_id,
                    suggested_rank=rank,
                    click_url=state.click_url(rec_id),
                    fallback_url=rec_doc.landing_url,
                    snippet_html=build_snippet(rec_doc),
                )
            )

        processing_time_ms = int((time.perf_counter() - started) * 1000)
        rset = RecommendationSet(
            set_id=state.id_factory("set"),
            request_id=request_id,
            partner_id=partner.partner_id,
            input_document_id=doc.original_document_id if doc is not None else None,
            query_title=title if doc is None else None,
            arm=arm,
            choice=choice,
            items=tuple(items),
            processing_time_ms=processing_time_ms,
            delivered_at=state.clock(),
        )
        state.events.record_set(rset)
        return Response(
            content=serialize_response(rset),
            media_type="application/xml",
            headers={"Content-Type": XML_CONTENT_TYPE},
        )

    def original_url(recommendation_id: str):
        try:
            target = state.events.record_click(recommendation_id, state.clock())
        except UnknownRecommendationError:
            raise HTTPException(status_code=404, detail="unknown recommendation id") from None
        return RedirectResponse(url=target, status_code=302)

    app.get("/v1/documents/{document_id}/related_documents")(related_documents)
    app.get(
        "/v1/documents/{document_id}/related_documents/", include_in_schema=False
    )(related_documents)
    app.get("/v1/recommendations/{recommendation_id}/original_url")(original_url)
    app.get(
        "/v1/recommendations/{recommendation_id}/original_url/", include_in_schema=False
    )(original_url)
    return app
