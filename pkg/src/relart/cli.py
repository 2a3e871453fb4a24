"""Command-line entry point: workspace setup, ingest, serve, reports."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import abtest
from .corpus import (
    Collection,
    CollectionKind,
    CorpusStore,
    IngestError,
    Partner,
    StaticReadershipClient,
)
from .events import EventLog
from .persistence import FileStore
from .service import ServiceState, create_app


def _open_store(path: str) -> FileStore:
    return FileStore(Path(path))


def _load_ab_config(path: str | None) -> abtest.AbConfig:
    if path is None:
        return abtest.default_config()
    return abtest.load_config(path)


def cmd_init(args: argparse.Namespace) -> int:
    backend = _open_store(args.store)
    store = CorpusStore(backend)
    store.add_partner(Partner(args.partner_id, args.name or args.partner_id, args.api_key))
    store.add_collection(
        Collection(args.collection, args.partner_id, CollectionKind(args.kind))
    )
    print(f"initialized store at {args.store}: partner {args.partner_id}, "
          f"collection {args.collection} ({args.kind})")
    return 0


def cmd_ingest(args: argparse.Namespace) -> int:
    backend = _open_store(args.store)
    store = CorpusStore(backend)
    with open(args.file, "rb") as handle:
        report = store.ingest_xml(handle, args.collection)
    print(
        f"seen={report.documents_seen} stored={report.documents_stored} "
        f"duplicates={report.duplicates_skipped} parse_errors={report.parse_errors} "
        f"unknown_field_warnings={report.unknown_field_warnings}"
    )
    return 0


def cmd_enrich(args: argparse.Namespace) -> int:
    backend = _open_store(args.store)
    store = CorpusStore(backend)
    with open(args.readership, "r", encoding="utf-8") as handle:
        client = StaticReadershipClient(json.load(handle))
    updated = 0
    for doc in list(store.documents_in(args.collection)):
        after = store.enrich_readership(doc.internal_id, client)
        if after.readership_count != doc.readership_count:
            updated += 1
    print(f"updated readership on {updated} documents")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    store_path = os.environ.get("RELART_STORE", args.store)
    port = int(os.environ.get("RELART_PORT", args.port))
    backend = _open_store(store_path)
    store = CorpusStore(backend)
    state = ServiceState(
        store=store,
        events=EventLog(backend),
        config=_load_ab_config(args.config),
        base_url=args.base_url or f"http://localhost:{port}",
    )
    uvicorn.run(create_app(state), host=args.host, port=port)
    return 0


def cmd_report_ctr(args: argparse.Namespace) -> int:
    log = EventLog(_open_store(args.store))
    report = log.ctr(partner=args.partner, family=args.family, month=args.month)
    print(f"deliveries={report.deliveries} clicks={report.clicks} ctr={report.display()}")
    return 0


def cmd_report_latency(args: argparse.Namespace) -> int:
    log = EventLog(_open_store(args.store))
    report = log.latency_histogram(args.bucket_ms)
    for start, count in report.buckets:
        print(f"{start}-{start + report.bucket_width_ms - 1}ms\t{count}")
    if report.total:
        print(f"under 150ms: {report.fraction_under_150ms:.1%}")
        print(f"under 250ms: {report.fraction_under_250ms:.1%}")
    else:
        print("no deliveries logged")
    return 0


def cmd_export_rard(args: argparse.Namespace) -> int:
    log = EventLog(_open_store(args.store))
    count = log.export_rard(args.out)
    print(f"wrote {count} rows to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="relart", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_init = sub.add_parser("init", help="create a store with one partner and collection")
    p_init.add_argument("--store", required=True)
    p_init.add_argument("--partner-id", required=True)
    p_init.add_argument("--api-key", required=True)
    p_init.add_argument("--name")
    p_init.add_argument("--collection", required=True)
    p_init.add_argument("--kind", choices=[k.value for k in CollectionKind], default="public")
    p_init.set_defaults(func=cmd_init)

    p_ingest = sub.add_parser("ingest", help="stream an XML export into a collection")
    p_ingest.add_argument("--store", required=True)
    p_ingest.add_argument("--collection", required=True)
    p_ingest.add_argument("--file", required=True)
    p_ingest.set_defaults(func=cmd_ingest)

    p_enrich = sub.add_parser("enrich", help="refresh readership counters from a JSON mapping")
    p_enrich.add_argument("--store", required=True)
    p_enrich.add_argument("--collection", required=True)
    p_enrich.add_argument("--readership", required=True, help="JSON file: original id -> count")
    p_enrich.set_defaults(func=cmd_enrich)

    p_serve = sub.add_parser("serve", help="run the HTTP service")
    p_serve.add_argument("--store", required=True, help="overridden by RELART_STORE")
    p_serve.add_argument("--config", help="A/B config JSON; built-in default when omitted")
    p_serve.add_argument("--port", type=int, default=8080, help="overridden by RELART_PORT")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--base-url", help="public base URL used in click links")
    p_serve.set_defaults(func=cmd_serve)

    p_report = sub.add_parser("report", help="aggregate delivery statistics")
    report_sub = p_report.add_subparsers(dest="report_kind", required=True)
    p_ctr = report_sub.add_parser("ctr")
    p_ctr.add_argument("--store", required=True)
    p_ctr.add_argument("--partner")
    p_ctr.add_argument("--family")
    p_ctr.add_argument("--month", help="UTC calendar month, YYYY-MM")
    p_ctr.set_defaults(func=cmd_report_ctr)
    p_lat = report_sub.add_parser("latency")
    p_lat.add_argument("--store", required=True)
    p_lat.add_argument("--bucket-ms", type=int, required=True)
    p_lat.set_defaults(func=cmd_report_latency)

    p_export = sub.add_parser("export", help="write log exports")
    export_sub = p_export.add_subparsers(dest="export_kind", required=True)
    p_rard = export_sub.add_parser("rard", help="CSV of every delivery with its arm parameters")
    p_rard.add_argument("--store", required=True)
    p_rard.add_argument("--out", required=True)
    p_rard.set_defaults(func=cmd_export_rard)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, IngestError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
