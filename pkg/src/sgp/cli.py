"""Command-line front end: boundary resolution, change feeds, harvest,
compliance audits, registrar lookups, reconciliation, and the self-test
fixture server.

Conventions: structured output (JSON or XML) goes to stdout, diagnostics
to stderr. Exit 0 on success, 1 when verification fails (incomplete
harvest, failed audit, bibliographic mismatch, no entry page), 2 on bad
usage, 3 when the network or the store lets us down.

Settings resolve in order: command-line flag, environment (SGP_API_BASE,
SGP_STORE), ``--config`` JSON file, built-in default.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time
from pathlib import Path
from urllib.parse import urlsplit

from .auditor import Auditor, render_report
from .bibliography import (
    MalformedEntry,
    UnknownFormat,
    parse_bibtex,
    parse_crossref_json,
    parse_ris,
    reconcile,
)
from .crossref import (
    DEFAULT_API_BASE,
    CrossRefClient,
    CrossRefError,
    InvalidDoi,
    MalformedJson,
    metadata_uri_for,
    normalize_doi,
    parse_work,
)
from .fixtures import FixtureSpec, serve
from .harvester import (
    IngestMode,
    IngestStore,
    StoreFailure,
    SubstancePolicy,
    ingest,
    plan_from_feed,
    record_tombstone,
)
from .links import MalformedLinkField, link_to_json
from .navigator import HttpError, NavigationError, SignpostClient
from .resources import DEFAULT_POLICY, NoEntryPage, ResourcePolicy, ScholarlyObject
from .resourcesync import (
    ChangeEvent,
    ChangeKind,
    ChangeList,
    ChangeListError,
    emit_change_list,
    emit_publisher_event,
    parse_change_list,
)
from .rfc3339 import format_rfc3339, parse_rfc3339, utcnow

__all__ = ["run", "main"]

EXIT_OK = 0
EXIT_VERIFICATION = 1
EXIT_USAGE = 2
EXIT_UNAVAILABLE = 3

_REGISTRAR_FEED_PATH = "/registrar/changelist.xml"


class _Usage(Exception):
    """Operator error found after argparse: bad file, bad value."""


# ------------------------------------------------------------- settings


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise _Usage(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise _Usage(f"config {path} must hold a JSON object")
    return data


def _pick(
    flag: str | None, env: str, config: dict, key: str, default: str | None
) -> str | None:
    if flag is not None:
        return flag
    value = os.environ.get(env)
    if value:
        return value
    if key in config:
        return str(config[key])
    return default


def _origin(uri: str) -> str:
    parts = urlsplit(uri)
    return f"{parts.scheme}://{parts.netloc}"


def _derived_policy(anchor_uri: str, extra_prefixes: list[str]) -> ResourcePolicy:
    """DOI-style paths under the anchor's own origin count as persistent,
    so self-hosted resolvers verify the same way the public ones do."""
    prefixes = (f"{_origin(anchor_uri)}/doi/", *extra_prefixes)
    return dataclasses.replace(
        DEFAULT_POLICY,
        persistent_id_domains=DEFAULT_POLICY.persistent_id_domains + prefixes,
    )


def _emit_json(payload: dict) -> None:
    print(json.dumps(payload, indent=1, sort_keys=True))


def _note(message: str) -> None:
    print(message, file=sys.stderr)


# -------------------------------------------------------------- parser


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sgp",
        description=(
            "Typed-link navigation, change feeds, and archival "
            "verification for scholarly objects."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser(
        "resolve", help="discover an object's boundary starting from any of its URIs"
    )
    p.add_argument("uri")
    p.add_argument(
        "--persistent-prefix",
        action="append",
        default=[],
        metavar="PREFIX",
        help="extra URI prefix treated as a persistent identifier (repeatable)",
    )

    feed = sub.add_parser("feed", help="parse or emit change feeds")
    feed_sub = feed.add_subparsers(dest="feed_command", required=True, metavar="action")
    fp = feed_sub.add_parser("parse", help="normalize a change feed to JSON")
    fp.add_argument("source", help="file path or http(s) URI")
    fe = feed_sub.add_parser(
        "emit", help="render a one-event change feed for an object"
    )
    fe.add_argument(
        "--object",
        required=True,
        metavar="FILE",
        help="object description as JSON (the `resolve` output)",
    )
    fe.add_argument(
        "--change", choices=[kind.value for kind in ChangeKind], default="created"
    )
    fe.add_argument(
        "--when", default=None, metavar="RFC3339", help="event timestamp (default: now)"
    )

    h = sub.add_parser("harvest", help="ingest every object a feed announces")
    h.add_argument("--feed", required=True, metavar="URI")
    h.add_argument("--store", default=None, metavar="DIR")
    h.add_argument(
        "--policy", default=None, metavar="FILE", help="substance thresholds as JSON"
    )
    h.add_argument("--filter", dest="filter_tag", default=None, metavar="TAG")
    h.add_argument(
        "--dump",
        default=None,
        metavar="ZIP",
        help="replay from a change dump instead of fetching live",
    )
    h.add_argument(
        "--verify-live",
        action="store_true",
        help="with --dump, compare the dump against the live boundary",
    )
    h.add_argument("--api-base", default=None, metavar="URI")
    h.add_argument(
        "--persistent-prefix", action="append", default=[], metavar="PREFIX"
    )
    h.add_argument("--config", default=None, metavar="FILE")

    a = sub.add_parser(
        "audit", help="score an endpoint against the twelve recommendations"
    )
    a.add_argument("--entry", required=True, metavar="URI")
    a.add_argument("--publisher-feed", default=None, metavar="URI")
    a.add_argument("--registrar-feed", default=None, metavar="URI")
    a.add_argument("--api-base", default=None, metavar="URI")
    a.add_argument("--format", choices=["text", "json"], default="text")
    a.add_argument(
        "--persistent-prefix", action="append", default=[], metavar="PREFIX"
    )
    a.add_argument("--config", default=None, metavar="FILE")

    c = sub.add_parser("crossref", help="registrar lookups")
    c_sub = c.add_subparsers(dest="crossref_command", required=True, metavar="action")
    cw = c_sub.add_parser(
        "works", help="print the registrar's work document for a DOI"
    )
    cw.add_argument("doi")
    cw.add_argument("--api-base", default=None, metavar="URI")
    cw.add_argument("--config", default=None, metavar="FILE")

    r = sub.add_parser(
        "reconcile", help="compare a bibliographic file against the registrar record"
    )
    r.add_argument("bibfile", help=".bib or .ris file")
    r.add_argument("doi")
    r.add_argument("--api-base", default=None, metavar="URI")
    r.add_argument("--config", default=None, metavar="FILE")

    f = sub.add_parser("fixture", help="self-test web server")
    f_sub = f.add_subparsers(dest="fixture_command", required=True, metavar="action")
    fs = f_sub.add_parser(
        "serve", help="serve the objects described by a spec file until interrupted"
    )
    fs.add_argument("spec", help="JSON file holding one server spec or a list of them")
    fs.add_argument("--port", type=int, default=0)

    return parser


# ------------------------------------------------------------- commands


def _read_source(source: str, client: SignpostClient) -> bytes:
    if source.startswith(("http://", "https://")):
        return client.fetch_resource(source).body or b""
    try:
        return Path(source).read_bytes()
    except OSError as exc:
        raise _Usage(f"cannot read {source}: {exc}") from exc


def _event_json(event: ChangeEvent) -> dict:
    data = {
        "loc": event.loc,
        "change": event.kind.value,
        "datetime": format_rfc3339(event.datetime),
        "links": [link_to_json(link) for link in event.links],
    }
    if event.fixity is not None:
        data["fixity"] = event.fixity.token
    return data


def _cmd_resolve(args: argparse.Namespace) -> int:
    client = SignpostClient()
    policy = _derived_policy(args.uri, args.persistent_prefix)
    try:
        obj = client.discover_object(args.uri, policy=policy)
    except NoEntryPage as exc:
        _note(f"NoEntryPage: {exc}")
        return EXIT_VERIFICATION
    _emit_json({"schema_version": 1, **obj.to_json_dict()})
    return EXIT_OK


def _cmd_feed_parse(args: argparse.Namespace) -> int:
    feed = parse_change_list(_read_source(args.source, SignpostClient()))
    payload: dict = {
        "schema_version": 1,
        "capability": feed.capability,
        "events": [_event_json(event) for event in feed.events],
    }
    if feed.from_time is not None:
        payload["from"] = format_rfc3339(feed.from_time)
    if feed.until_time is not None:
        payload["until"] = format_rfc3339(feed.until_time)
    _emit_json(payload)
    return EXIT_OK


def _cmd_feed_emit(args: argparse.Namespace) -> int:
    try:
        data = json.loads(Path(args.object).read_text(encoding="utf-8"))
        obj = ScholarlyObject.from_json_dict(data)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise _Usage(f"cannot load object from {args.object}: {exc}") from exc
    if args.when:
        try:
            when = parse_rfc3339(args.when)
        except ValueError as exc:
            raise _Usage(f"bad --when: {exc}") from exc
    else:
        when = utcnow()
    event = emit_publisher_event(obj, ChangeKind(args.change), when)
    xml = emit_change_list(ChangeList(events=(event,)))
    sys.stdout.write(xml if xml.endswith("\n") else xml + "\n")
    return EXIT_OK


def _cmd_harvest(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    store_dir = _pick(args.store, "SGP_STORE", config, "store", None)
    if not store_dir:
        raise _Usage("no store directory; pass --store or set SGP_STORE")
    api_base = _pick(args.api_base, "SGP_API_BASE", config, "api_base", DEFAULT_API_BASE)

    substance = None
    if args.policy:
        try:
            substance = SubstancePolicy.from_json_dict(
                json.loads(Path(args.policy).read_text(encoding="utf-8"))
            )
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise _Usage(f"cannot load policy {args.policy}: {exc}") from exc
    dump_bytes = None
    if args.dump:
        try:
            dump_bytes = Path(args.dump).read_bytes()
        except OSError as exc:
            raise _Usage(f"cannot read dump {args.dump}: {exc}") from exc

    client = SignpostClient()
    policy = _derived_policy(args.feed, args.persistent_prefix)
    feed = parse_change_list(client.fetch_resource(args.feed).body or b"")
    mode = IngestMode.DUMP if dump_bytes is not None else IngestMode.HARVEST
    tasks = plan_from_feed(
        feed, mode=mode, filter_tag=args.filter_tag, dump=dump_bytes
    )
    store = IngestStore(store_dir)
    registrar = CrossRefClient(api_base=api_base)
    records = []
    for task in tasks:
        if task.tombstone:
            records.append(record_tombstone(task, store))
        else:
            records.append(
                ingest(
                    task,
                    client,
                    store,
                    substance,
                    registrar,
                    resource_policy=policy,
                    verify_live=args.verify_live,
                )
            )
    _emit_json(
        {
            "schema_version": 1,
            "store": store_dir,
            "records": [record.to_json_dict() for record in records],
        }
    )
    bad = [
        record
        for record in records
        if not record.tombstone
        and (
            not record.completeness.passed
            or not record.substance.passed
            or record.bibliography.matched is False
        )
    ]
    return EXIT_VERIFICATION if bad else EXIT_OK


def _answers(client: SignpostClient, uri: str) -> bool:
    try:
        client.fetch_resource(uri)
    except NavigationError:
        return False
    return True


def _cmd_audit(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    client = SignpostClient(strict=True)
    policy = _derived_policy(args.entry, args.persistent_prefix)
    registrar_feed = args.registrar_feed
    if registrar_feed is None:
        # a stated feed is audited as given; the conventional locations
        # are only adopted when they answer, else the registrar side is
        # scored not-applicable
        explicit_api = _pick(args.api_base, "SGP_API_BASE", config, "api_base", None)
        candidates = []
        if explicit_api:
            candidates.append(explicit_api.rstrip("/") + _REGISTRAR_FEED_PATH)
        candidates.append(_origin(args.entry) + _REGISTRAR_FEED_PATH)
        registrar_feed = next((c for c in candidates if _answers(client, c)), None)
    auditor = Auditor(client=client, policy=policy)
    report = auditor.audit(
        args.entry,
        publisher_feed=args.publisher_feed,
        registrar_feed=registrar_feed,
    )
    print(render_report(report, fmt=args.format))
    return EXIT_OK if report.all_passed else EXIT_VERIFICATION


def _cmd_crossref_works(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    api_base = _pick(args.api_base, "SGP_API_BASE", config, "api_base", DEFAULT_API_BASE)
    try:
        doi = normalize_doi(args.doi)
    except InvalidDoi as exc:
        raise _Usage(f"bad DOI: {exc}") from exc
    uri = metadata_uri_for(doi, api_base=api_base)
    try:
        body = SignpostClient().fetch_resource(uri).body or b""
    except HttpError as exc:
        if exc.result.status == 404:
            _note(f"no work registered for {doi}")
            return EXIT_VERIFICATION
        raise
    try:
        document = json.loads(body)
    except ValueError as exc:
        raise MalformedJson(f"{uri}: {exc}") from exc
    parse_work(document)
    _emit_json(document)
    return EXIT_OK


_BIB_PARSERS = {".bib": parse_bibtex, ".ris": parse_ris}


def _cmd_reconcile(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    api_base = _pick(args.api_base, "SGP_API_BASE", config, "api_base", DEFAULT_API_BASE)
    path = Path(args.bibfile)
    parser = _BIB_PARSERS.get(path.suffix.lower())
    if parser is None:
        raise _Usage(
            f"cannot tell the format of {path.name}; expected .bib or .ris"
        )
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise _Usage(f"cannot read {args.bibfile}: {exc}") from exc
    try:
        publisher = parser(text, source_uri=path.name)
    except (MalformedEntry, UnknownFormat) as exc:
        raise _Usage(f"cannot parse {args.bibfile}: {exc}") from exc
    try:
        doi = normalize_doi(args.doi)
    except InvalidDoi as exc:
        raise _Usage(f"bad DOI: {exc}") from exc
    uri = metadata_uri_for(doi, api_base=api_base)
    body = SignpostClient().fetch_resource(uri).body or b""
    registrar = parse_crossref_json(body, source_uri=uri)
    report = reconcile(publisher, registrar)
    _emit_json(report.to_json_dict())
    return EXIT_OK if report.matched else EXIT_VERIFICATION


def _cmd_fixture_serve(args: argparse.Namespace) -> int:
    try:
        data = json.loads(Path(args.spec).read_text(encoding="utf-8"))
        raw = data if isinstance(data, list) else [data]
        specs = [FixtureSpec.from_json_dict(entry) for entry in raw]
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise _Usage(f"cannot load fixture spec {args.spec}: {exc}") from exc
    if not specs:
        raise _Usage(f"{args.spec} describes no objects")
    endpoint = serve(*specs, port=args.port)
    print(endpoint.base_uri, flush=True)
    try:
        while True:
            time.sleep(0.25)
    except KeyboardInterrupt:
        pass
    finally:
        endpoint.close()
    return EXIT_OK


# ------------------------------------------------------------ dispatch


def _dispatch(args: argparse.Namespace) -> int:
    if args.command == "resolve":
        return _cmd_resolve(args)
    if args.command == "feed":
        if args.feed_command == "parse":
            return _cmd_feed_parse(args)
        return _cmd_feed_emit(args)
    if args.command == "harvest":
        return _cmd_harvest(args)
    if args.command == "audit":
        return _cmd_audit(args)
    if args.command == "crossref":
        return _cmd_crossref_works(args)
    if args.command == "reconcile":
        return _cmd_reconcile(args)
    if args.command == "fixture":
        return _cmd_fixture_serve(args)
    raise AssertionError(f"unhandled command {args.command!r}")


def run(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse wrote its own message; --help exits 0, errors 2
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return _dispatch(args)
    except _Usage as exc:
        _note(f"usage error: {exc}")
        return EXIT_USAGE
    except (
        NavigationError,
        MalformedLinkField,
        ChangeListError,
        CrossRefError,
        StoreFailure,
        OSError,
    ) as exc:
        _note(f"error: {exc}")
        return EXIT_UNAVAILABLE


def main() -> None:
    sys.exit(run())
