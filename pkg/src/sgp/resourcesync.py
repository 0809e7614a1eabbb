"""Change feeds: change lists, change dumps, and in-process notifications.

Sitemap-dialect XML with the rs extension namespace. Lenient parsing
warns about sloppy-but-usable feeds (unsorted events, odd capability);
strict mode turns those warnings into errors.
"""

from __future__ import annotations

import enum
import io
import queue
import threading
import warnings
import zipfile
from dataclasses import dataclass
from datetime import datetime
from typing import Iterable, Sequence
from xml.etree import ElementTree as ET

from .crossref import CROSSREF_PROFILE, CrossRefWork, MissingDoi, metadata_uri_for, normalize_doi
from .fixity import (  # noqa: F401 - re-exported, feeds carry fixity
    FixityInfo,
    FixityVerdict,
    UnsupportedAlgorithm,
    compute_fixity,
    verify_fixity,
)
from .links import (
    DESCRIBEDBY,
    ITEM,
    PERSISTENT_ID,
    TYPE,
    DEFAULT_VOCABULARY,
    LinkAttributes,
    LinkSet,
    RelationType,
    TypedLink,
    Vocabulary,
)
from .resources import DEFAULT_POLICY, ResourcePolicy, ScholarlyObject, object_from_links
from .rfc3339 import format_rfc3339, parse_rfc3339

__all__ = [
    "SITEMAP_NS",
    "RS_NS",
    "ChangeKind",
    "ChangeEvent",
    "ChangeList",
    "ChangeDumpManifest",
    "ChangeListError",
    "MalformedXml",
    "MissingChangeAttribute",
    "UnknownChangeKind",
    "FeedViolation",
    "FeedWarning",
    "MissingPayload",
    "CorruptArchive",
    "ManifestPathCollision",
    "parse_change_list",
    "emit_change_list",
    "emit_registrar_event",
    "emit_publisher_event",
    "emit_resource_event",
    "object_from_event",
    "pack_change_dump",
    "unpack_change_dump",
    "verify_dump",
    "NotificationChannel",
    "Subscription",
]

SITEMAP_NS = "http://www.sitemaps.org/schemas/sitemap/0.9"
RS_NS = "http://www.openarchives.org/rs/terms/"

ET.register_namespace("", SITEMAP_NS)
ET.register_namespace("rs", RS_NS)


class ChangeListError(ValueError):
    pass


class MalformedXml(ChangeListError):
    pass


class MissingChangeAttribute(ChangeListError):
    pass


class UnknownChangeKind(ChangeListError):
    pass


class FeedViolation(ChangeListError):
    """Feed-shape rule broken: ordering, capability, deleted-with-items."""


class FeedWarning(UserWarning):
    pass


class MissingPayload(ChangeListError):
    pass


class CorruptArchive(ChangeListError):
    pass


class ManifestPathCollision(ChangeListError):
    pass


class ChangeKind(enum.Enum):
    CREATED = "created"
    UPDATED = "updated"
    DELETED = "deleted"


@dataclass(frozen=True)
class ChangeEvent:
    """One change to one resource, with typed links giving context.

    ``links`` follow the link-header vocabulary exactly; link parameters
    without a value serialize as empty XML attributes.
    """

    loc: str
    kind: ChangeKind
    datetime: datetime
    links: LinkSet = LinkSet()
    fixity: FixityInfo | None = None

    def __post_init__(self) -> None:
        if not self.loc:
            raise ValueError("event loc must be non-empty")


@dataclass(frozen=True)
class ChangeList:
    """Events plus the covered interval. Ordering by datetime is
    enforced on emit and warned about on parse, not enforced here
    (parsed feeds may be sloppy)."""

    events: tuple[ChangeEvent, ...] = ()
    from_time: datetime | None = None
    until_time: datetime | None = None
    capability: str = "changelist"


@dataclass(frozen=True)
class ChangeDumpManifest:
    """Per-entry archive paths and events for one dump; Deleted entries
    carry no path."""

    entries: tuple[tuple[str | None, ChangeEvent], ...] = ()


def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _children(elem: ET.Element, name: str) -> list[ET.Element]:
    return [child for child in elem if _local(child.tag) == name]


_KNOWN_LN_ATTRS = ("rel", "href", "type", "profile")


def _link_from_ln(
    elem: ET.Element, source: str, vocabulary: Vocabulary
) -> list[TypedLink]:
    attrib = dict(elem.attrib)
    rel_value = attrib.pop("rel", None)
    href = attrib.pop("href", None)
    if not rel_value or not href:
        raise MalformedXml("rs:ln needs rel and href attributes")
    media_type = attrib.pop("type", None)
    profile = attrib.pop("profile", None)
    sem_type = None
    for name in list(attrib):
        if vocabulary.is_sem_type_param(name) and sem_type is None:
            sem_type = attrib.pop(name)
    extras = tuple(attrib.items())
    attrs = LinkAttributes(
        media_type=media_type, profile=profile, sem_type=sem_type, extra=extras
    )
    return [
        TypedLink(
            target=href,
            rel=RelationType(vocabulary.canonical_rel_token(token)),
            attrs=attrs,
            source=source,
        )
        for token in rel_value.split()
    ]


def _event_from_url(
    url: ET.Element, strict: bool, vocabulary: Vocabulary, with_path: bool
) -> tuple[ChangeEvent, str | None]:
    loc_elems = _children(url, "loc")
    if not loc_elems or not (loc_elems[0].text or "").strip():
        raise MalformedXml("url element without loc")
    loc = loc_elems[0].text.strip()

    md_elems = _children(url, "md")
    if not md_elems:
        raise MissingChangeAttribute(f"{loc}: url without rs:md")
    md = md_elems[0]
    change = md.get("change")
    if change is None:
        raise MissingChangeAttribute(f"{loc}: rs:md without change attribute")
    try:
        kind = ChangeKind(change)
    except ValueError:
        raise UnknownChangeKind(f"{loc}: change={change!r}") from None
    dt_text = md.get("datetime")
    if dt_text is None:
        raise MalformedXml(f"{loc}: rs:md without datetime attribute")
    try:
        when = parse_rfc3339(dt_text)
    except ValueError as exc:
        raise MalformedXml(f"{loc}: bad datetime {dt_text!r}") from exc

    fixity = None
    hash_attr = md.get("hash")
    if hash_attr:
        length_attr = md.get("length")
        try:
            fixity = FixityInfo.from_token(
                hash_attr, length=int(length_attr) if length_attr else None
            )
        except ValueError as exc:
            raise MalformedXml(f"{loc}: bad hash attribute") from exc
    path = md.get("path") if with_path else None

    links: list[TypedLink] = []
    for ln in _children(url, "ln"):
        links.extend(_link_from_ln(ln, loc, vocabulary))

    event = ChangeEvent(
        loc=loc, kind=kind, datetime=when, links=LinkSet(tuple(links)), fixity=fixity
    )
    if kind == ChangeKind.DELETED and event.links.select(ITEM):
        _complain(f"{loc}: deleted event carries item links", strict)
    return event, path


def _complain(message: str, strict: bool) -> None:
    if strict:
        raise FeedViolation(message)
    warnings.warn(message, FeedWarning, stacklevel=3)


def _parse_urlset(
    xml_text: str | bytes,
    expected_capability: str,
    strict: bool,
    vocabulary: Vocabulary,
    with_paths: bool,
) -> tuple[list[tuple[ChangeEvent, str | None]], datetime | None, datetime | None, str]:
    try:
        root = ET.fromstring(xml_text)
    except ET.ParseError as exc:
        raise MalformedXml(str(exc)) from exc
    if _local(root.tag) != "urlset":
        raise MalformedXml(f"expected urlset, got {_local(root.tag)}")

    capability = expected_capability
    from_time = until_time = None
    root_md = _children(root, "md")
    if root_md:
        md = root_md[0]
        capability = md.get("capability") or expected_capability
        if capability != expected_capability:
            _complain(
                f"capability {capability!r}, expected {expected_capability!r}", strict
            )
        for attr, setter in (("from", "from"), ("until", "until")):
            raw = md.get(attr)
            if raw:
                try:
                    value = parse_rfc3339(raw)
                except ValueError as exc:
                    raise MalformedXml(f"bad {attr} attribute {raw!r}") from exc
                if attr == "from":
                    from_time = value
                else:
                    until_time = value
    if from_time and until_time and from_time > until_time:
        _complain("from is later than until", strict)

    entries = [
        _event_from_url(url, strict, vocabulary, with_paths)
        for url in _children(root, "url")
    ]
    times = [event.datetime for event, _ in entries]
    if any(a > b for a, b in zip(times, times[1:])):
        _complain("events are not ordered by datetime", strict)
    return entries, from_time, until_time, capability


def parse_change_list(
    xml_text: str | bytes,
    *,
    strict: bool = False,
    vocabulary: Vocabulary = DEFAULT_VOCABULARY,
) -> ChangeList:
    entries, from_time, until_time, capability = _parse_urlset(
        xml_text, "changelist", strict, vocabulary, with_paths=False
    )
    return ChangeList(
        events=tuple(event for event, _ in entries),
        from_time=from_time,
        until_time=until_time,
        capability=capability,
    )


def _ln_element(link: TypedLink, vocabulary: Vocabulary) -> ET.Element:
    elem = ET.Element(f"{{{RS_NS}}}ln")
    elem.set("rel", link.rel.value)
    elem.set("href", link.target)
    a = link.attrs
    if a.media_type is not None:
        elem.set("type", a.media_type)
    if a.profile is not None:
        elem.set("profile", a.profile)
    if a.sem_type is not None:
        elem.set(vocabulary.sem_type_params[0], a.sem_type)
    for name, value in a.extra:
        elem.set(name, "" if value is None else value)
    return elem


def _url_element(
    event: ChangeEvent, path: str | None, vocabulary: Vocabulary
) -> ET.Element:
    if event.kind == ChangeKind.DELETED and event.links.select(ITEM):
        raise FeedViolation(f"{event.loc}: deleted event cannot carry item links")
    url = ET.Element(f"{{{SITEMAP_NS}}}url")
    loc = ET.SubElement(url, f"{{{SITEMAP_NS}}}loc")
    loc.text = event.loc
    md = ET.SubElement(url, f"{{{RS_NS}}}md")
    md.set("change", event.kind.value)
    md.set("datetime", format_rfc3339(event.datetime))
    if event.fixity is not None:
        md.set("hash", event.fixity.token)
        if event.fixity.length is not None:
            md.set("length", str(event.fixity.length))
    if path is not None:
        md.set("path", path)
    for link in event.links:
        url.append(_ln_element(link, vocabulary))
    return url


def _build_urlset(
    entries: Iterable[tuple[ChangeEvent, str | None]],
    capability: str,
    from_time: datetime | None,
    until_time: datetime | None,
    vocabulary: Vocabulary,
) -> str:
    if from_time and until_time and from_time > until_time:
        raise FeedViolation("from is later than until")
    root = ET.Element(f"{{{SITEMAP_NS}}}urlset")
    md = ET.SubElement(root, f"{{{RS_NS}}}md")
    md.set("capability", capability)
    if from_time is not None:
        md.set("from", format_rfc3339(from_time))
    if until_time is not None:
        md.set("until", format_rfc3339(until_time))
    ordered = sorted(entries, key=lambda pair: pair[0].datetime)
    for event, path in ordered:
        root.append(_url_element(event, path, vocabulary))
    ET.indent(root)
    return '<?xml version="1.0" encoding="UTF-8"?>\n' + ET.tostring(
        root, encoding="unicode"
    ) + "\n"


def emit_change_list(
    change_list: ChangeList, *, vocabulary: Vocabulary = DEFAULT_VOCABULARY
) -> str:
    """Render as XML; events are sorted (stable) by datetime."""
    return _build_urlset(
        ((event, None) for event in change_list.events),
        change_list.capability,
        change_list.from_time,
        change_list.until_time,
        vocabulary,
    )


def emit_registrar_event(
    work: CrossRefWork,
    kind: ChangeKind = ChangeKind.CREATED,
    *,
    resolver_base: str = "http://dx.doi.org",
    api_base: str = "http://api.crossref.org",
) -> ChangeEvent:
    """The registrar's announcement: the DOI URI is the subject, with a
    describedby link to the works API. Deleted events carry no links."""
    if not work.doi:
        raise MissingDoi("work has no DOI")
    doi = normalize_doi(work.doi)
    if work.deposited is None:
        raise ValueError("work has no deposited timestamp")
    loc = f"{resolver_base.rstrip('/')}/{doi}"
    links: tuple[TypedLink, ...] = ()
    if kind != ChangeKind.DELETED:
        links = (
            TypedLink(
                target=metadata_uri_for(doi, api_base=api_base),
                rel=DESCRIBEDBY,
                attrs=LinkAttributes(
                    media_type="application/json", profile=CROSSREF_PROFILE
                ),
                source=loc,
            ),
        )
    return ChangeEvent(
        loc=loc, kind=kind, datetime=work.deposited, links=LinkSet(links)
    )


def emit_publisher_event(
    obj: ScholarlyObject, kind: ChangeKind, when: datetime
) -> ChangeEvent:
    """The publisher's announcement, in terms of the entry page: its
    nature, the identifying URI, item links to every other publication
    resource, describedby links to the bibliographic resources."""
    loc = obj.entry_page.uri
    links: list[TypedLink] = []
    if obj.entry_page.sem_type:
        links.append(
            TypedLink(target=obj.entry_page.sem_type, rel=TYPE, source=loc)
        )
    if obj.identifying_uri:
        links.append(
            TypedLink(target=obj.identifying_uri, rel=PERSISTENT_ID, source=loc)
        )
    if kind != ChangeKind.DELETED:
        for member in obj.publication_resources:
            if member.uri == loc:
                continue
            links.append(
                TypedLink(
                    target=member.uri,
                    rel=ITEM,
                    attrs=LinkAttributes(
                        media_type=member.media_type, sem_type=member.sem_type
                    ),
                    source=loc,
                )
            )
    for bib in obj.bibliographic_resources:
        links.append(
            TypedLink(
                target=bib.uri,
                rel=DESCRIBEDBY,
                attrs=LinkAttributes(media_type=bib.media_type, profile=bib.profile),
                source=loc,
            )
        )
    return ChangeEvent(loc=loc, kind=kind, datetime=when, links=LinkSet(tuple(links)))


def emit_resource_event(
    resource_uri: str,
    *,
    entry_uri: str,
    kind: ChangeKind = ChangeKind.UPDATED,
    when: datetime,
    identifying_uri: str | None = None,
    fixity: FixityInfo | None = None,
    sem_type: str | None = None,
) -> ChangeEvent:
    """A change to a single member resource, expressed in terms of that
    resource's URI with links up to its neighborhood."""
    links: list[TypedLink] = [
        TypedLink(
            target=entry_uri,
            rel=RelationType("collection"),
            attrs=LinkAttributes(media_type="text/html"),
            source=resource_uri,
        )
    ]
    if sem_type:
        links.insert(0, TypedLink(target=sem_type, rel=TYPE, source=resource_uri))
    if identifying_uri:
        links.append(
            TypedLink(target=identifying_uri, rel=PERSISTENT_ID, source=resource_uri)
        )
    return ChangeEvent(
        loc=resource_uri,
        kind=kind,
        datetime=when,
        links=LinkSet(tuple(links)),
        fixity=fixity,
    )


def object_from_event(
    event: ChangeEvent, *, policy: ResourcePolicy = DEFAULT_POLICY
) -> ScholarlyObject:
    """Rebuild the object boundary a publisher event describes."""
    return object_from_links(event.loc, event.links, policy=policy)


def pack_change_dump(
    entries: Sequence[tuple[ChangeEvent, bytes | None]],
    *,
    paths: Sequence[str | None] | None = None,
    add_fixity: bool = True,
    vocabulary: Vocabulary = DEFAULT_VOCABULARY,
) -> bytes:
    """ZIP a batch of events with their payloads; manifest.xml at the
    root carries per-entry archive paths. Output bytes are deterministic
    for identical input."""
    if paths is not None and len(paths) != len(entries):
        raise ValueError("paths must align with entries")
    resolved: list[tuple[ChangeEvent, bytes | None, str | None]] = []
    used: set[str] = set()
    for index, (event, payload) in enumerate(entries):
        if event.kind == ChangeKind.DELETED:
            if payload is not None:
                raise FeedViolation(f"{event.loc}: deleted entry cannot carry a payload")
            resolved.append((event, None, None))
            continue
        if payload is None:
            raise MissingPayload(event.loc)
        path = paths[index] if paths is not None and paths[index] else f"resources/{index:04d}.dat"
        if path == "manifest.xml":
            raise ManifestPathCollision(path)
        if path in used:
            raise ManifestPathCollision(path)
        used.add(path)
        if add_fixity and event.fixity is None:
            event = ChangeEvent(
                loc=event.loc,
                kind=event.kind,
                datetime=event.datetime,
                links=event.links,
                fixity=compute_fixity(payload),
            )
        resolved.append((event, payload, path))

    manifest_xml = _build_urlset(
        ((event, path) for event, _, path in resolved),
        "changedump-manifest",
        None,
        None,
        vocabulary,
    )
    ordered = sorted(resolved, key=lambda triple: triple[0].datetime)
    buffer = io.BytesIO()
    stamp = (1980, 1, 1, 0, 0, 0)
    with zipfile.ZipFile(buffer, "w", zipfile.ZIP_DEFLATED) as archive:
        info = zipfile.ZipInfo("manifest.xml", date_time=stamp)
        archive.writestr(info, manifest_xml)
        for _, payload, path in ordered:
            if path is None:
                continue
            info = zipfile.ZipInfo(path, date_time=stamp)
            archive.writestr(info, payload)
    return buffer.getvalue()


def unpack_change_dump(
    data: bytes,
    *,
    strict: bool = False,
    vocabulary: Vocabulary = DEFAULT_VOCABULARY,
) -> tuple[ChangeDumpManifest, dict[str, bytes]]:
    try:
        archive = zipfile.ZipFile(io.BytesIO(data))
    except zipfile.BadZipFile as exc:
        raise CorruptArchive(str(exc)) from exc
    with archive:
        names = set(archive.namelist())
        if "manifest.xml" not in names:
            raise CorruptArchive("no manifest.xml in archive")
        entries, _, _, _ = _parse_urlset(
            archive.read("manifest.xml"),
            "changedump-manifest",
            strict,
            vocabulary,
            with_paths=True,
        )
        seen: set[str] = set()
        payloads: dict[str, bytes] = {}
        manifest_entries: list[tuple[str | None, ChangeEvent]] = []
        for event, path in entries:
            if event.kind != ChangeKind.DELETED:
                if not path:
                    raise CorruptArchive(f"{event.loc}: manifest entry without path")
                if path in seen:
                    raise ManifestPathCollision(path)
                seen.add(path)
                if path not in names:
                    raise CorruptArchive(f"{event.loc}: {path} missing from archive")
                payloads[path] = archive.read(path)
                manifest_entries.append((path, event))
            else:
                manifest_entries.append((None, event))
    return ChangeDumpManifest(entries=tuple(manifest_entries)), payloads


def verify_dump(
    manifest: ChangeDumpManifest, payloads: dict[str, bytes]
) -> dict[str, FixityVerdict]:
    """Per-loc fixity verdicts for entries that recorded fixity."""
    verdicts: dict[str, FixityVerdict] = {}
    for path, event in manifest.entries:
        if path is None or event.fixity is None:
            continue
        verdicts[event.loc] = verify_fixity(payloads[path], event.fixity)
    return verdicts


class Subscription:
    """FIFO view of one subscriber; detach with close()."""

    def __init__(self, channel: "NotificationChannel"):
        self._queue: queue.SimpleQueue[ChangeEvent] = queue.SimpleQueue()
        self._channel = channel

    def get(self, timeout: float | None = None) -> ChangeEvent:
        return self._queue.get(timeout=timeout)

    def pending(self) -> list[ChangeEvent]:
        items: list[ChangeEvent] = []
        while True:
            try:
                items.append(self._queue.get_nowait())
            except queue.Empty:
                break
        return items

    def close(self) -> None:
        self._channel._drop(self)


class NotificationChannel:
    """Fan-out of single change events to in-process subscribers.

    Stands in for a push transport; delivery is FIFO per subscriber.
    """

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._subscribers: list[Subscription] = []

    def subscribe(self) -> Subscription:
        sub = Subscription(self)
        with self._lock:
            self._subscribers.append(sub)
        return sub

    def publish(self, event: ChangeEvent) -> None:
        with self._lock:
            targets = list(self._subscribers)
        for sub in targets:
            sub._queue.put(event)

    def _drop(self, sub: Subscription) -> None:
        with self._lock:
            if sub in self._subscribers:
                self._subscribers.remove(sub)
