"""Ingest pipeline: feeds in, verified records out.

Change feeds become ingest tasks; each task collects an object's
boundary (live over HTTP, or reconstructed from a Change Dump), fetches
every publication resource, answers the three ingest questions
(manifest, completeness, bibliography), applies substance thresholds,
and persists a versioned record with content-addressed payloads.
"""

from __future__ import annotations

import enum
import hashlib
import json
import threading
from dataclasses import dataclass, field, replace
from datetime import datetime
from pathlib import Path
from typing import Callable, Mapping
from urllib.parse import quote, unquote, urlsplit

from .bibliography import (
    CROSSREF_JSON_PROFILE,
    BibRecord,
    MalformedEntry,
    ReconciliationReport,
    UnknownFormat,
    from_crossref,
    parse_crossref_json,
    parser_for,
    reconcile,
)
from .crossref import CrossRefError, InvalidDoi, MalformedJson, normalize_doi
from .fixity import verify_fixity, compute_fixity
from .links import MalformedLinkField
from .navigator import HttpError, NavigationError
from .resources import (
    DEFAULT_POLICY,
    NoEntryPage,
    ResourceDescriptor,
    ResourcePolicy,
    ResourceRole,
    ScholarlyObject,
    object_from_links,
    validate_object,
)
from .resourcesync import (
    ChangeDumpManifest,
    ChangeEvent,
    ChangeKind,
    ChangeList,
    emit_publisher_event,
    emit_resource_event,
    pack_change_dump,
    unpack_change_dump,
)
from .rfc3339 import format_rfc3339, parse_rfc3339, utcnow

__all__ = [
    "IngestMode",
    "IngestTask",
    "FetchSummary",
    "CompletenessReport",
    "BibliographyReport",
    "SubstanceRule",
    "SubstancePolicy",
    "SubstanceReport",
    "IngestRecord",
    "IngestStore",
    "StoreFailure",
    "UnknownKey",
    "plan_from_feed",
    "ingest",
    "record_tombstone",
    "check_substance",
    "pack_object_dump",
]


class StoreFailure(RuntimeError):
    pass


class UnknownKey(KeyError):
    pass


class IngestMode(enum.Enum):
    HARVEST = "harvest"
    DUMP = "dump"


@dataclass(frozen=True)
class IngestTask:
    """One unit of work derived from a feed event."""

    trigger: ChangeEvent
    mode: IngestMode = IngestMode.HARVEST
    filter_tag: str | None = None
    dump: bytes | None = None

    @property
    def tombstone(self) -> bool:
        return self.trigger.kind == ChangeKind.DELETED


def plan_from_feed(
    feed: ChangeList,
    *,
    mode: IngestMode = IngestMode.HARVEST,
    filter_tag: str | None = None,
    predicate: Callable[[ChangeEvent], bool] | None = None,
    dump: bytes | None = None,
) -> list[IngestTask]:
    """One task per event passing the filter; Deleted events become
    tombstone tasks. Order follows the feed."""
    tasks: list[IngestTask] = []
    for event in feed.events:
        if predicate is not None and not predicate(event):
            continue
        tasks.append(
            IngestTask(
                trigger=event,
                mode=mode,
                filter_tag=filter_tag,
                dump=dump if mode is IngestMode.DUMP else None,
            )
        )
    return tasks


# --------------------------------------------------------- record pieces


@dataclass(frozen=True)
class FetchSummary:
    """What one fetch attempt produced; status None means no response."""

    uri: str
    status: int | None
    sha256: str | None = None
    length: int | None = None
    media_type: str | None = None
    fetched_at: datetime | None = None

    @property
    def ok(self) -> bool:
        return self.status is not None and 200 <= self.status < 300

    def to_json_dict(self) -> dict:
        out: dict = {"uri": self.uri, "status": self.status}
        for name in ("sha256", "length", "media_type"):
            value = getattr(self, name)
            if value is not None:
                out[name] = value
        if self.fetched_at is not None:
            out["fetched_at"] = format_rfc3339(self.fetched_at)
        return out

    @classmethod
    def from_json_dict(cls, data: dict) -> "FetchSummary":
        fetched_at = data.get("fetched_at")
        return cls(
            uri=data["uri"],
            status=data["status"],
            sha256=data.get("sha256"),
            length=data.get("length"),
            media_type=data.get("media_type"),
            fetched_at=parse_rfc3339(fetched_at) if fetched_at else None,
        )


@dataclass(frozen=True)
class CompletenessReport:
    """Was everything that should have been ingested ingested?

    ``violations`` are structural findings over the boundary;
    ``failures`` are (uri, reason) pairs for resources that could not be
    ingested intact.
    """

    passed: bool
    violations: tuple[str, ...] = ()
    failures: tuple[tuple[str, str], ...] = ()

    def to_json_dict(self) -> dict:
        return {
            "passed": self.passed,
            "violations": list(self.violations),
            "failures": [[uri, reason] for uri, reason in self.failures],
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "CompletenessReport":
        return cls(
            passed=data["passed"],
            violations=tuple(data.get("violations", ())),
            failures=tuple((u, r) for u, r in data.get("failures", ())),
        )


@dataclass(frozen=True)
class BibliographyReport:
    """Reconciliation outcome plus the record chosen as authoritative.

    The registrar record is the baseline; a missing publisher record is
    a note, not a failure. ``matched`` is None when there was nothing to
    compare.
    """

    matched: bool | None
    report: ReconciliationReport | None = None
    record: BibRecord | None = None
    notes: tuple[str, ...] = ()

    def to_json_dict(self) -> dict:
        return {
            "matched": self.matched,
            "report": self.report.to_json_dict() if self.report else None,
            "record": self.record.to_json_dict() if self.record else None,
            "notes": list(self.notes),
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "BibliographyReport":
        report = data.get("report")
        record = data.get("record")
        return cls(
            matched=data["matched"],
            report=ReconciliationReport.from_json_dict(report) if report else None,
            record=BibRecord.from_json_dict(record) if record else None,
            notes=tuple(data.get("notes", ())),
        )


@dataclass(frozen=True)
class SubstanceRule:
    min_pdf_count: int = 0
    min_html_count: int = 0
    min_pdf_bytes: int = 0
    min_html_bytes: int = 0

    def __post_init__(self) -> None:
        for name in ("min_pdf_count", "min_html_count", "min_pdf_bytes", "min_html_bytes"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    def to_json_dict(self) -> dict:
        return {
            "min_pdf_count": self.min_pdf_count,
            "min_html_count": self.min_html_count,
            "min_pdf_bytes": self.min_pdf_bytes,
            "min_html_bytes": self.min_html_bytes,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "SubstanceRule":
        return cls(**{k: data.get(k, 0) for k in (
            "min_pdf_count", "min_html_count", "min_pdf_bytes", "min_html_bytes"
        )})


@dataclass(frozen=True)
class SubstancePolicy:
    """Per-tag expectations on how much content an object should carry."""

    rules: tuple[tuple[str, SubstanceRule], ...] = ()
    default: SubstanceRule | None = None

    def rule_for(self, tag: str | None) -> SubstanceRule | None:
        if tag is not None:
            for name, rule in self.rules:
                if name == tag:
                    return rule
        return self.default

    def to_json_dict(self) -> dict:
        return {
            "rules": {name: rule.to_json_dict() for name, rule in self.rules},
            "default": self.default.to_json_dict() if self.default else None,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "SubstancePolicy":
        default = data.get("default")
        return cls(
            rules=tuple(
                (name, SubstanceRule.from_json_dict(rule))
                for name, rule in data.get("rules", {}).items()
            ),
            default=SubstanceRule.from_json_dict(default) if default else None,
        )


@dataclass(frozen=True)
class SubstanceReport:
    passed: bool
    configured: bool
    notes: tuple[str, ...] = ()

    def to_json_dict(self) -> dict:
        return {
            "passed": self.passed,
            "configured": self.configured,
            "notes": list(self.notes),
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "SubstanceReport":
        return cls(
            passed=data["passed"],
            configured=data["configured"],
            notes=tuple(data.get("notes", ())),
        )


@dataclass(frozen=True)
class IngestRecord:
    """Everything one ingest run learned about one object."""

    object: ScholarlyObject
    trigger_loc: str
    trigger_kind: ChangeKind
    trigger_datetime: datetime
    mode: IngestMode
    completeness: CompletenessReport
    bibliography: BibliographyReport
    substance: SubstanceReport
    fetches: tuple[FetchSummary, ...] = ()
    filter_tag: str | None = None
    tombstone: bool = False
    created_at: datetime = field(default_factory=utcnow)
    schema_version: int = 1

    @property
    def key(self) -> str:
        return self.object.identifying_uri or self.object.entry_page.uri

    def to_json_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "object": self.object.to_json_dict(),
            "trigger": {
                "loc": self.trigger_loc,
                "change": self.trigger_kind.value,
                "datetime": format_rfc3339(self.trigger_datetime),
            },
            "mode": self.mode.value,
            "filter_tag": self.filter_tag,
            "fetches": [f.to_json_dict() for f in self.fetches],
            "completeness": self.completeness.to_json_dict(),
            "bibliography": self.bibliography.to_json_dict(),
            "substance": self.substance.to_json_dict(),
            "tombstone": self.tombstone,
            "created_at": format_rfc3339(self.created_at),
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "IngestRecord":
        trigger = data["trigger"]
        return cls(
            object=ScholarlyObject.from_json_dict(data["object"]),
            trigger_loc=trigger["loc"],
            trigger_kind=ChangeKind(trigger["change"]),
            trigger_datetime=parse_rfc3339(trigger["datetime"]),
            mode=IngestMode(data["mode"]),
            completeness=CompletenessReport.from_json_dict(data["completeness"]),
            bibliography=BibliographyReport.from_json_dict(data["bibliography"]),
            substance=SubstanceReport.from_json_dict(data["substance"]),
            fetches=tuple(FetchSummary.from_json_dict(f) for f in data.get("fetches", ())),
            filter_tag=data.get("filter_tag"),
            tombstone=data.get("tombstone", False),
            created_at=parse_rfc3339(data["created_at"]),
            schema_version=data.get("schema_version", 1),
        )


# --------------------------------------------------------- persistence


class IngestStore:
    """Directory-backed store: content-addressed payloads, versioned
    JSON records, append-only journal.

    Layout: ``payloads/<aa>/<sha256>``, ``records/<quoted-key>/<n>.json``,
    ``journal.log``. Records are never overwritten; re-ingest appends the
    next version.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        try:
            (self.root / "payloads").mkdir(parents=True, exist_ok=True)
            (self.root / "records").mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise StoreFailure(f"cannot initialise store at {root}: {exc}") from exc
        self._journal_lock = threading.Lock()

    # -- payloads

    def payload_path(self, digest: str) -> Path:
        return self.root / "payloads" / digest[:2] / digest

    def store_payload(self, data: bytes) -> str:
        digest = hashlib.sha256(data).hexdigest()
        path = self.payload_path(digest)
        if not path.exists():
            try:
                path.parent.mkdir(parents=True, exist_ok=True)
                path.write_bytes(data)
            except OSError as exc:
                raise StoreFailure(f"cannot store payload {digest}: {exc}") from exc
        return digest

    def load_payload(self, digest: str) -> bytes:
        path = self.payload_path(digest)
        if not path.exists():
            raise UnknownKey(digest)
        return path.read_bytes()

    # -- records

    def _key_dir(self, key: str) -> Path:
        return self.root / "records" / quote(key, safe="")

    def keys(self) -> list[str]:
        return sorted(unquote(p.name) for p in (self.root / "records").iterdir())

    def versions(self, key: str) -> list[int]:
        directory = self._key_dir(key)
        if not directory.is_dir():
            return []
        return sorted(int(p.stem) for p in directory.glob("*.json"))

    def save_record(self, record: IngestRecord) -> str:
        key = record.key
        directory = self._key_dir(key)
        version = (self.versions(key) or [0])[-1] + 1
        try:
            directory.mkdir(parents=True, exist_ok=True)
            path = directory / f"{version:04d}.json"
            path.write_text(
                json.dumps(record.to_json_dict(), indent=1, sort_keys=True) + "\n",
                encoding="utf-8",
            )
            with self._journal_lock:
                with (self.root / "journal.log").open("a", encoding="utf-8") as journal:
                    kind = "tombstone" if record.tombstone else record.mode.value
                    journal.write(
                        f"{format_rfc3339(record.created_at)}\t{key}\t{version}\t{kind}\n"
                    )
        except OSError as exc:
            raise StoreFailure(f"cannot save record for {key}: {exc}") from exc
        return key

    def load_record(self, key: str, version: int | None = None) -> IngestRecord:
        versions = self.versions(key)
        if not versions:
            raise UnknownKey(key)
        if version is None:
            version = versions[-1]
        elif version not in versions:
            raise UnknownKey(f"{key} version {version}")
        path = self._key_dir(key) / f"{version:04d}.json"
        return IngestRecord.from_json_dict(json.loads(path.read_text(encoding="utf-8")))

    def journal_entries(self) -> list[tuple[str, str, int, str]]:
        path = self.root / "journal.log"
        if not path.exists():
            return []
        entries = []
        for line in path.read_text(encoding="utf-8").splitlines():
            stamp, key, version, kind = line.split("\t")
            entries.append((stamp, key, int(version), kind))
        return entries

    def fsck(self) -> list[str]:
        """Recompute every payload digest and re-parse every record;
        returns a list of problems, empty when the store is clean."""
        problems: list[str] = []
        for path in sorted((self.root / "payloads").rglob("*")):
            if not path.is_file():
                continue
            digest = hashlib.sha256(path.read_bytes()).hexdigest()
            if digest != path.name:
                problems.append(f"payload {path.name}: content digest {digest}")
        for directory in sorted((self.root / "records").iterdir()):
            for path in sorted(directory.glob("*.json")):
                try:
                    IngestRecord.from_json_dict(
                        json.loads(path.read_text(encoding="utf-8"))
                    )
                except (ValueError, KeyError) as exc:
                    problems.append(f"record {directory.name}/{path.name}: {exc}")
        return problems


# --------------------------------------------------------- verdicts


def _substance(
    fetches: tuple[FetchSummary, ...],
    tag: str | None,
    policy: SubstancePolicy | None,
) -> SubstanceReport:
    rule = policy.rule_for(tag) if policy is not None else None
    if rule is None:
        return SubstanceReport(True, False, ("no substance thresholds configured",))

    def count(media: str, floor: int) -> int:
        return sum(
            1
            for f in fetches
            if f.ok and f.media_type == media and (f.length or 0) >= floor
        )

    pdfs = count("application/pdf", rule.min_pdf_bytes)
    htmls = count("text/html", rule.min_html_bytes)
    notes = (
        f"pdf: {pdfs} of >= {rule.min_pdf_count} (each >= {rule.min_pdf_bytes} bytes)",
        f"html: {htmls} of >= {rule.min_html_count} (each >= {rule.min_html_bytes} bytes)",
    )
    passed = pdfs >= rule.min_pdf_count and htmls >= rule.min_html_count
    return SubstanceReport(passed, True, notes)


def check_substance(record: IngestRecord, policy: SubstancePolicy | None) -> SubstanceReport:
    """Re-evaluate content thresholds for a stored record."""
    return _substance(record.fetches, record.filter_tag, policy)


def _completeness(
    obj: ScholarlyObject,
    fetches: list[FetchSummary],
    failures: list[tuple[str, str]],
    policy: ResourcePolicy,
) -> CompletenessReport:
    violations = validate_object(obj, policy=policy)
    rendered = tuple(
        f"{v.severity}: {v.kind.value}"
        + (f" at {v.uri}" if v.uri else "")
        + (f" ({v.detail})" if v.detail else "")
        for v in violations
    )
    pub_uris = set(obj.publication_uris)
    summaries = {f.uri: f for f in fetches}
    pubs_ok = all(
        uri in summaries and summaries[uri].ok for uri in pub_uris
    )
    failed_pubs = any(uri in pub_uris for uri, _ in failures)
    major = any(v.severity == "major" for v in violations)
    return CompletenessReport(
        passed=pubs_ok and not failed_pubs and not major,
        violations=rendered,
        failures=tuple(failures),
    )


# --------------------------------------------------------- ingest


def _doi_from_identifying(uri: str, policy: ResourcePolicy) -> str | None:
    for entry in policy.persistent_id_domains:
        if "://" in entry:
            if uri.startswith(entry):
                candidate = unquote(uri[len(entry):].lstrip("/"))
                break
        elif urlsplit(uri).netloc.casefold() == entry.casefold():
            candidate = unquote(urlsplit(uri).path.lstrip("/"))
            break
    else:
        return None
    try:
        return normalize_doi(candidate)
    except InvalidDoi:
        return None


def _registrar_target(obj: ScholarlyObject) -> str | None:
    for bib in obj.bibliographic_resources:
        if bib.profile == CROSSREF_JSON_PROFILE:
            return bib.uri
    return None


def _minimal_object(loc: str) -> ScholarlyObject:
    return ScholarlyObject(
        entry_page=ResourceDescriptor(uri=loc, role=ResourceRole.ENTRY_PAGE)
    )


def _base_record(
    task: IngestTask,
    obj: ScholarlyObject,
    fetches: list[FetchSummary],
    completeness: CompletenessReport,
    bibliography: BibliographyReport,
    substance: SubstanceReport,
) -> IngestRecord:
    return IngestRecord(
        object=obj,
        trigger_loc=task.trigger.loc,
        trigger_kind=task.trigger.kind,
        trigger_datetime=task.trigger.datetime,
        mode=task.mode,
        completeness=completeness,
        bibliography=bibliography,
        substance=substance,
        fetches=tuple(fetches),
        filter_tag=task.filter_tag,
    )


def ingest(
    task: IngestTask,
    nav,
    store: IngestStore,
    policy: SubstancePolicy | None = None,
    registrar=None,
    *,
    resource_policy: ResourcePolicy = DEFAULT_POLICY,
    verify_live: bool = False,
) -> IngestRecord:
    """Run one task end to end and persist the outcome.

    Per-resource trouble is recorded in the returned record, not raised;
    only store trouble (and misuse, like passing a tombstone) raises.
    """
    if task.tombstone:
        raise ValueError("tombstone tasks are recorded, not ingested")
    if task.mode is IngestMode.DUMP:
        record = _ingest_dump(
            task, store, policy, nav=nav, resource_policy=resource_policy,
            verify_live=verify_live,
        )
    else:
        record = _ingest_harvest(
            task, nav, store, policy, registrar, resource_policy=resource_policy
        )
    store.save_record(record)
    return record


def _bibliography_verdict(
    registrar_record: BibRecord | None,
    publisher_record: BibRecord | None,
    notes: list[str],
) -> BibliographyReport:
    if registrar_record is not None and publisher_record is not None:
        report = reconcile(publisher_record, registrar_record)
        return BibliographyReport(
            matched=report.matched,
            report=report,
            record=registrar_record,
            notes=tuple(notes),
        )
    if registrar_record is not None:
        notes.append("publisher metadata unavailable; registrar record kept")
        return BibliographyReport(
            matched=None, record=registrar_record, notes=tuple(notes)
        )
    if publisher_record is not None:
        notes.append("no registrar baseline; publisher record kept")
        return BibliographyReport(
            matched=None, record=publisher_record, notes=tuple(notes)
        )
    notes.append("no bibliographic metadata found")
    return BibliographyReport(matched=None, notes=tuple(notes))


def _ingest_harvest(
    task: IngestTask,
    nav,
    store: IngestStore,
    policy: SubstancePolicy | None,
    registrar,
    *,
    resource_policy: ResourcePolicy,
) -> IngestRecord:
    trigger = task.trigger
    fetches: list[FetchSummary] = []
    failures: list[tuple[str, str]] = []
    notes: list[str] = []

    try:
        obj = nav.discover_object(trigger.loc, policy=resource_policy)
    except (NoEntryPage, NavigationError, MalformedLinkField) as exc:
        failures.append((trigger.loc, str(exc)))
        return _base_record(
            task,
            _minimal_object(trigger.loc),
            fetches,
            CompletenessReport(
                passed=False,
                violations=(f"boundary discovery failed: {exc}",),
                failures=tuple(failures),
            ),
            BibliographyReport(
                matched=None, notes=("no object boundary; bibliography skipped",)
            ),
            _substance((), task.filter_tag, policy),
        )

    failures.extend(obj.failures)
    bodies: dict[str, bytes] = {}

    def fetch(uri: str, fallback_media: str | None) -> FetchSummary:
        try:
            result = nav.fetch_resource(uri)
        except HttpError as err:
            summary = FetchSummary(
                uri=uri,
                status=err.result.status,
                media_type=err.result.media_type,
                fetched_at=err.result.fetched_at,
            )
            failures.append((uri, f"HTTP {err.result.status}"))
        except NavigationError as err:
            summary = FetchSummary(uri=uri, status=None)
            failures.append((uri, str(err)))
        else:
            store.store_payload(result.body)
            bodies[uri] = result.body
            summary = FetchSummary(
                uri=uri,
                status=result.status,
                sha256=result.sha256,
                length=len(result.body),
                media_type=result.media_type or fallback_media,
                fetched_at=result.fetched_at,
            )
        fetches.append(summary)
        return summary

    for desc in obj.publication_resources:
        fetch(desc.uri, desc.media_type)

    if trigger.fixity is not None and trigger.loc in bodies:
        verdict = verify_fixity(bodies[trigger.loc], trigger.fixity)
        if not verdict:
            failures.append((trigger.loc, f"fixity: {verdict.reason}"))

    registrar_record: BibRecord | None = None
    works_target = _registrar_target(obj)
    if works_target is not None:
        summary = fetch(works_target, "application/json")
        if summary.ok:
            try:
                registrar_record = parse_crossref_json(
                    bodies[works_target], source_uri=works_target
                )
            except (MalformedJson, MalformedEntry, ValueError) as exc:
                notes.append(f"registrar metadata unreadable: {exc}")
        else:
            notes.append(f"registrar metadata fetch failed: {works_target}")
    elif registrar is not None and obj.identifying_uri:
        doi = _doi_from_identifying(obj.identifying_uri, resource_policy)
        if doi is not None:
            try:
                registrar_record = from_crossref(registrar.fetch_work(doi))
            except (CrossRefError, MalformedEntry, ValueError) as exc:
                notes.append(f"registrar lookup failed for {doi}: {exc}")
        else:
            notes.append("identifying URI yields no registry identifier")
    else:
        notes.append("no registrar metadata link")

    publisher_record: BibRecord | None = None
    for bib in obj.bibliographic_resources:
        if bib.uri == works_target or bib.profile == CROSSREF_JSON_PROFILE:
            continue
        try:
            parser = parser_for(bib.profile, bib.media_type)
        except UnknownFormat:
            notes.append(f"no parser for {bib.uri}")
            continue
        summary = fetch(bib.uri, bib.media_type)
        if not summary.ok:
            notes.append(f"publisher metadata fetch failed: {bib.uri}")
            continue
        try:
            publisher_record = parser(
                bodies[bib.uri].decode("utf-8", "replace"), source_uri=bib.uri
            )
            break
        except MalformedEntry as exc:
            notes.append(f"publisher metadata unreadable at {bib.uri}: {exc}")

    return _base_record(
        task,
        obj,
        fetches,
        _completeness(obj, fetches, failures, resource_policy),
        _bibliography_verdict(registrar_record, publisher_record, notes),
        _substance(tuple(fetches), task.filter_tag, policy),
    )


def _entry_media_from_manifest(manifest: ChangeDumpManifest, entry_uri: str) -> str | None:
    # the collection backlinks inside the dump characterise the entry
    for _, event in manifest.entries:
        for link in event.links.select("collection"):
            if link.target == entry_uri and link.attrs.media_type:
                return link.attrs.media_type
    return None


def _ingest_dump(
    task: IngestTask,
    store: IngestStore,
    policy: SubstancePolicy | None,
    *,
    nav=None,
    resource_policy: ResourcePolicy,
    verify_live: bool = False,
) -> IngestRecord:
    if task.dump is None:
        raise ValueError("dump-mode task without dump bytes")
    trigger = task.trigger
    manifest, payloads = unpack_change_dump(task.dump)
    by_loc: dict[str, tuple[str | None, ChangeEvent]] = {
        event.loc: (path, event) for path, event in manifest.entries
    }

    links = trigger.links
    if not links and trigger.loc in by_loc:
        links = by_loc[trigger.loc][1].links
    obj = object_from_links(
        trigger.loc,
        links,
        policy=resource_policy,
        entry_media_type=_entry_media_from_manifest(manifest, trigger.loc),
    )

    fetches: list[FetchSummary] = []
    failures: list[tuple[str, str]] = []
    notes: list[str] = []
    stamp = utcnow()

    def take(uri: str, media: str | None) -> bytes | None:
        found = by_loc.get(uri)
        if found is None or found[0] is None:
            failures.append((uri, "missing from dump"))
            fetches.append(FetchSummary(uri=uri, status=None))
            return None
        path, event = found
        payload = payloads[path]
        if event.fixity is not None:
            verdict = verify_fixity(payload, event.fixity)
            if not verdict:
                failures.append((uri, f"fixity: {verdict.reason}"))
        store.store_payload(payload)
        fetches.append(
            FetchSummary(
                uri=uri,
                status=200,
                sha256=hashlib.sha256(payload).hexdigest(),
                length=len(payload),
                media_type=media,
                fetched_at=stamp,
            )
        )
        return payload

    entry_media = obj.entry_page.media_type
    for desc in obj.publication_resources:
        media = desc.media_type or (entry_media if desc.uri == obj.entry_page.uri else None)
        take(desc.uri, media)

    registrar_record: BibRecord | None = None
    works_target = _registrar_target(obj)
    if works_target is not None and works_target in by_loc:
        payload = take(works_target, "application/json")
        if payload is not None:
            try:
                registrar_record = parse_crossref_json(payload, source_uri=works_target)
            except (MalformedJson, MalformedEntry, ValueError) as exc:
                notes.append(f"registrar metadata unreadable: {exc}")
    else:
        notes.append("registrar metadata not in dump")

    publisher_record: BibRecord | None = None
    for bib in obj.bibliographic_resources:
        if bib.uri == works_target or bib.profile == CROSSREF_JSON_PROFILE:
            continue
        if bib.uri not in by_loc:
            continue
        try:
            parser = parser_for(bib.profile, bib.media_type)
        except UnknownFormat:
            notes.append(f"no parser for {bib.uri}")
            continue
        payload = take(bib.uri, bib.media_type)
        if payload is None:
            continue
        try:
            publisher_record = parser(
                payload.decode("utf-8", "replace"), source_uri=bib.uri
            )
            break
        except MalformedEntry as exc:
            notes.append(f"publisher metadata unreadable at {bib.uri}: {exc}")

    if verify_live and nav is not None:
        try:
            live = nav.discover_object(trigger.loc, policy=resource_policy)
            if set(live.publication_uris) != set(obj.publication_uris):
                failures.append(
                    (trigger.loc, "live boundary differs from dump manifest")
                )
        except (NoEntryPage, NavigationError) as exc:
            failures.append((trigger.loc, f"live verification failed: {exc}"))

    return _base_record(
        task,
        obj,
        fetches,
        _completeness(obj, fetches, failures, resource_policy),
        _bibliography_verdict(registrar_record, publisher_record, notes),
        _substance(tuple(fetches), task.filter_tag, policy),
    )


def record_tombstone(task: IngestTask, store: IngestStore) -> IngestRecord:
    """Mark an object deleted. Payloads stay; only the record history
    says the publisher withdrew it."""
    if not task.tombstone:
        raise ValueError("not a tombstone task")
    trigger = task.trigger
    obj = (
        object_from_links(trigger.loc, trigger.links)
        if trigger.links
        else _minimal_object(trigger.loc)
    )
    record = replace(
        _base_record(
            task,
            obj,
            [],
            CompletenessReport(passed=True),
            BibliographyReport(matched=None, notes=("tombstone",)),
            SubstanceReport(True, False, ("tombstone; no content expected",)),
        ),
        tombstone=True,
    )
    store.save_record(record)
    return record


# --------------------------------------------------------- dump building


def pack_object_dump(
    obj: ScholarlyObject,
    bodies: Mapping[str, bytes],
    when: datetime,
    *,
    kind: ChangeKind = ChangeKind.CREATED,
) -> tuple[ChangeEvent, bytes]:
    """Build a Change Dump holding one object: the publisher event for
    the entry page plus one per-resource event per other payload.

    ``bodies`` maps resource URIs to payload bytes and must cover every
    publication resource; bibliographic resources are included when
    present. Returns (trigger event, dump bytes).
    """
    entry_uri = obj.entry_page.uri
    trigger = emit_publisher_event(obj, kind, when)
    entries: list[tuple[ChangeEvent, bytes | None]] = []
    if entry_uri in bodies:
        entries.append((trigger, bodies[entry_uri]))
    missing = [
        desc.uri
        for desc in obj.publication_resources
        if desc.uri not in bodies
    ]
    if missing:
        raise ValueError(f"bodies missing for publication resources: {missing}")
    for desc in obj.publication_resources:
        if desc.uri == entry_uri:
            continue
        payload = bodies[desc.uri]
        entries.append(
            (
                emit_resource_event(
                    desc.uri,
                    entry_uri=entry_uri,
                    kind=kind,
                    when=when,
                    identifying_uri=obj.identifying_uri,
                    fixity=compute_fixity(payload),
                    sem_type=desc.sem_type,
                ),
                payload,
            )
        )
    for desc in obj.bibliographic_resources:
        payload = bodies.get(desc.uri)
        if payload is None:
            continue
        entries.append(
            (
                emit_resource_event(
                    desc.uri,
                    entry_uri=entry_uri,
                    kind=kind,
                    when=when,
                    identifying_uri=obj.identifying_uri,
                    fixity=compute_fixity(payload),
                ),
                payload,
            )
        )
    return trigger, pack_change_dump(entries)
