"""Resource roles, publisher patterns, and web-boundary computation.

A scholarly object's components hang together through typed links: item
links fan out from an entry page, collection links point back, and a
persistent-id link names the object. Given a way to read the links of a
URI, `boundary_closure` walks that graph and returns the object.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Mapping
from urllib.parse import urlsplit

from .fixity import FixityInfo
from .links import (
    COLLECTION,
    DESCRIBEDBY,
    ITEM,
    PERSISTENT_ID,
    TYPE,
    LinkSet,
    TypedLink,
    link_set_from_json,
    link_set_to_json,
    select,
)

__all__ = [
    "ResourceRole",
    "PatternId",
    "ResourcePolicy",
    "DEFAULT_POLICY",
    "ResourceDescriptor",
    "ScholarlyObject",
    "Violation",
    "ViolationKind",
    "NoEntryPage",
    "FetchFailure",
    "classify_role",
    "boundary_closure",
    "object_from_links",
    "classify_pattern",
    "validate_object",
    "pick_identifying_uri",
    "SEM_ARTICLE",
    "SEM_DATASET",
    "SEM_OBJECT_FILE",
    "SEM_METADATA",
    "SEM_START_PAGE",
]

SEM_ARTICLE = "info:eu-repo/semantics/article"
SEM_DATASET = "info:eu-repo/semantics/dataset"
SEM_OBJECT_FILE = "info:eu-repo/semantics/objectFile"
SEM_METADATA = "info:eu-repo/semantics/descriptiveMetadata"
SEM_START_PAGE = "info:eu-repo/semantics/humanStartPage"

_SELF_CONTENT = {SEM_ARTICLE, SEM_DATASET}


class ResourceRole(enum.Enum):
    IDENTIFYING_URI = "identifying-uri"
    ENTRY_PAGE = "entry-page"
    PUBLICATION_RESOURCE = "publication-resource"
    BIBLIOGRAPHIC_RESOURCE = "bibliographic-resource"
    UNKNOWN = "unknown"


class PatternId(enum.Enum):
    PLOS_STYLE = "plos-style"
    APS_STYLE = "aps-style"
    DSPACE_STYLE = "dspace-style"
    DRYAD_STYLE = "dryad-style"
    ARXIV_STYLE = "arxiv-style"
    EPRINTS_STYLE = "eprints-style"
    OTHER = "other"


def _default_aliases() -> tuple[tuple[str, str], ...]:
    names = ("article", "dataset", "objectFile", "descriptiveMetadata", "humanStartPage")
    pairs = []
    for name in names:
        canonical = f"info:eu-repo/semantics/{name}"
        pairs.append((f"http://purl.org/eu-repo/semantics/{name}", canonical))
        pairs.append((f"https://purl.org/eu-repo/semantics/{name}", canonical))
    return tuple(pairs)


@dataclass(frozen=True)
class ResourcePolicy:
    """Site-independent knobs: which hosts mint shared persistent
    identifiers, and which semantic-type URIs are spelling variants.

    A domain entry containing ``://`` is a URI prefix match; a bare entry
    matches the hostname exactly.
    """

    persistent_id_domains: tuple[str, ...] = (
        "dx.doi.org",
        "doi.org",
        "hdl.handle.net",
        "purl.org",
        "w3id.org",
        "identifiers.org",
    )
    semantic_aliases: tuple[tuple[str, str], ...] = field(default_factory=_default_aliases)

    def is_persistent_uri(self, uri: str) -> bool:
        host = urlsplit(uri).netloc.casefold()
        for entry in self.persistent_id_domains:
            if "://" in entry:
                if uri.startswith(entry):
                    return True
            elif host == entry.casefold():
                return True
        return False

    def canonical_semantic(self, uri: str | None) -> str | None:
        if uri is None:
            return None
        for variant, canonical in self.semantic_aliases:
            if uri == variant:
                return canonical
        return uri


DEFAULT_POLICY = ResourcePolicy()


@dataclass(frozen=True)
class ResourceDescriptor:
    """One web resource in its role within a scholarly object.

    ``links`` holds the resource's own observed links when it was
    visited (None means never fetched); they are the evidence base for
    reciprocity and persistent-id validation.
    """

    uri: str
    role: ResourceRole
    media_type: str | None = None
    sem_type: str | None = None
    profile: str | None = None
    fixity: FixityInfo | None = None
    links: LinkSet | None = None

    def to_json_dict(self) -> dict:
        d: dict = {"uri": self.uri, "role": self.role.value}
        if self.media_type is not None:
            d["media_type"] = self.media_type
        if self.sem_type is not None:
            d["sem_type"] = self.sem_type
        if self.profile is not None:
            d["profile"] = self.profile
        if self.fixity is not None:
            d["fixity"] = {
                "algorithm": self.fixity.algorithm,
                "digest": self.fixity.digest,
                "length": self.fixity.length,
            }
        if self.links is not None:
            d["links"] = link_set_to_json(self.links)
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "ResourceDescriptor":
        fixity = None
        if "fixity" in d:
            fixity = FixityInfo(
                algorithm=d["fixity"]["algorithm"],
                digest=d["fixity"]["digest"],
                length=d["fixity"].get("length"),
            )
        links = link_set_from_json(d["links"]) if "links" in d else None
        return cls(
            uri=d["uri"],
            role=ResourceRole(d["role"]),
            media_type=d.get("media_type"),
            sem_type=d.get("sem_type"),
            profile=d.get("profile"),
            fixity=fixity,
            links=links,
        )


@dataclass(frozen=True)
class ScholarlyObject:
    """An object's web boundary: entry page, publication resources,
    bibliographic resources, identifying URI.

    Member tuples are ordered by first discovery so reports are
    deterministic. ``failures`` records (uri, reason) for members whose
    links could not be read.
    """

    entry_page: ResourceDescriptor
    publication_resources: tuple[ResourceDescriptor, ...] = ()
    bibliographic_resources: tuple[ResourceDescriptor, ...] = ()
    identifying_uri: str | None = None
    pattern: PatternId | None = None
    failures: tuple[tuple[str, str], ...] = ()

    @property
    def publication_uris(self) -> tuple[str, ...]:
        return tuple(d.uri for d in self.publication_resources)

    def member(self, uri: str) -> ResourceDescriptor | None:
        for d in self.publication_resources:
            if d.uri == uri:
                return d
        return None

    def to_json_dict(self) -> dict:
        d: dict = {
            "entry_page": self.entry_page.to_json_dict(),
            "publication_resources": [
                r.to_json_dict() for r in self.publication_resources
            ],
            "bibliographic_resources": [
                r.to_json_dict() for r in self.bibliographic_resources
            ],
            "identifying_uri": self.identifying_uri,
            "pattern": self.pattern.value if self.pattern else None,
        }
        if self.failures:
            d["failures"] = [[uri, reason] for uri, reason in self.failures]
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "ScholarlyObject":
        return cls(
            entry_page=ResourceDescriptor.from_json_dict(d["entry_page"]),
            publication_resources=tuple(
                ResourceDescriptor.from_json_dict(r)
                for r in d.get("publication_resources", [])
            ),
            bibliographic_resources=tuple(
                ResourceDescriptor.from_json_dict(r)
                for r in d.get("bibliographic_resources", [])
            ),
            identifying_uri=d.get("identifying_uri"),
            pattern=PatternId(d["pattern"]) if d.get("pattern") else None,
            failures=tuple((u, r) for u, r in d.get("failures", [])),
        )


class ViolationKind(enum.Enum):
    MISSING_BACK_LINK = "missing-back-link"
    PERSISTENT_ID_MISMATCH = "persistent-id-mismatch"
    MISSING_MIME = "missing-mime"
    EMPTY_OBJECT = "empty-object"


_MAJOR = {
    ViolationKind.MISSING_BACK_LINK,
    ViolationKind.PERSISTENT_ID_MISMATCH,
    ViolationKind.EMPTY_OBJECT,
}


@dataclass(frozen=True)
class Violation:
    kind: ViolationKind
    uri: str | None = None
    detail: str = ""

    @property
    def severity(self) -> str:
        return "major" if self.kind in _MAJOR else "minor"


class NoEntryPage(ValueError):
    """The start URI gives no way into an object: no item links, no
    self-type, no collection link to follow."""


class FetchFailure(RuntimeError):
    def __init__(self, uri: str, reason: str):
        super().__init__(f"{uri}: {reason}")
        self.uri = uri
        self.reason = reason


def classify_role(
    uri: str,
    links: LinkSet,
    media_type: str | None = None,
    *,
    policy: ResourcePolicy = DEFAULT_POLICY,
) -> ResourceRole:
    """Role of one resource from its own links. Precedence is fixed:
    explicit self-type first, then link-shape, then identifier domain."""
    self_types = {
        policy.canonical_semantic(link.target) for link in select(links, TYPE)
    }
    has_item = bool(select(links, ITEM))
    has_collection = bool(select(links, COLLECTION))
    if SEM_START_PAGE in self_types:
        return ResourceRole.ENTRY_PAGE
    if self_types & {SEM_ARTICLE, SEM_DATASET, SEM_OBJECT_FILE} and has_collection:
        return ResourceRole.PUBLICATION_RESOURCE
    if SEM_METADATA in self_types:
        return ResourceRole.BIBLIOGRAPHIC_RESOURCE
    if has_item and not has_collection:
        return ResourceRole.ENTRY_PAGE
    if policy.is_persistent_uri(uri):
        return ResourceRole.IDENTIFYING_URI
    return ResourceRole.UNKNOWN


def pick_identifying_uri(
    links: LinkSet, *, policy: ResourcePolicy = DEFAULT_POLICY
) -> str | None:
    """Choose among persistent-id targets: shared-identifier domains
    beat local ones; among equals the first wins."""
    targets = links.targets(PERSISTENT_ID)
    if not targets:
        return None
    for target in targets:
        if policy.is_persistent_uri(target):
            return target
    return targets[0]


def _entry_descriptor(
    entry_uri: str,
    entry_links: LinkSet,
    media_type: str | None,
    policy: ResourcePolicy,
) -> ResourceDescriptor:
    type_link = entry_links.first(TYPE)
    return ResourceDescriptor(
        uri=entry_uri,
        role=ResourceRole.ENTRY_PAGE,
        media_type=media_type,
        sem_type=type_link.target if type_link else None,
        links=entry_links,
    )


def _item_descriptor(link: TypedLink, links: LinkSet | None) -> ResourceDescriptor:
    return ResourceDescriptor(
        uri=link.target,
        role=ResourceRole.PUBLICATION_RESOURCE,
        media_type=link.attrs.media_type,
        sem_type=link.attrs.sem_type,
        profile=link.attrs.profile,
        links=links,
    )


def _bib_descriptor(link: TypedLink) -> ResourceDescriptor:
    return ResourceDescriptor(
        uri=link.target,
        role=ResourceRole.BIBLIOGRAPHIC_RESOURCE,
        media_type=link.attrs.media_type,
        sem_type=link.attrs.sem_type,
        profile=link.attrs.profile,
    )


def _entry_is_content(entry_links: LinkSet, policy: ResourcePolicy) -> bool:
    for link in select(entry_links, TYPE):
        if policy.canonical_semantic(link.target) in _SELF_CONTENT:
            return True
    return False


def _finish_object(
    entry_desc: ResourceDescriptor,
    pubs: list[ResourceDescriptor],
    entry_links: LinkSet,
    failures: list[tuple[str, str]],
    policy: ResourcePolicy,
) -> ScholarlyObject:
    bibs = [_bib_descriptor(link) for link in select(entry_links, DESCRIBEDBY)]
    identifying = pick_identifying_uri(entry_links, policy=policy)
    if identifying is not None:
        pubs = [d for d in pubs if d.uri != identifying]
    obj = ScholarlyObject(
        entry_page=entry_desc,
        publication_resources=tuple(pubs),
        bibliographic_resources=tuple(bibs),
        identifying_uri=identifying,
        failures=tuple(failures),
    )
    return replace(obj, pattern=classify_pattern(obj, entry_links, policy=policy))


def object_from_links(
    entry_uri: str,
    entry_links: LinkSet,
    *,
    member_links: Mapping[str, LinkSet] | None = None,
    entry_media_type: str | None = None,
    policy: ResourcePolicy = DEFAULT_POLICY,
) -> ScholarlyObject:
    """Build an object from a single link set (a feed event payload or a
    one-shot HEAD), without walking the web. Item targets one level deep.
    """
    member_links = member_links or {}
    entry_desc = _entry_descriptor(entry_uri, entry_links, entry_media_type, policy)
    pubs: list[ResourceDescriptor] = []
    seen: set[str] = {entry_uri}
    if _entry_is_content(entry_links, policy):
        pubs.append(entry_desc)
    for link in select(entry_links, ITEM):
        if link.target in seen:
            continue
        seen.add(link.target)
        pubs.append(_item_descriptor(link, member_links.get(link.target)))
    return _finish_object(entry_desc, pubs, entry_links, [], policy)


def boundary_closure(
    entry: str,
    link_oracle: Callable[[str], LinkSet],
    *,
    policy: ResourcePolicy = DEFAULT_POLICY,
    max_collection_hops: int = 1,
    max_item_depth: int | None = None,
    entry_media_type: str | None = None,
) -> ScholarlyObject:
    """Compute the object's boundary starting from any member URI.

    A non-entry start follows its collection link up first. Item edges
    are then expanded breadth-first with a visited set, so cycles
    terminate and each member is fetched once. Failures on non-entry
    members are recorded on the object, not raised.
    """
    try:
        links = link_oracle(entry)
    except Exception as exc:  # noqa: BLE001 - oracle errors become FetchFailure
        raise FetchFailure(entry, str(exc)) from exc

    entry_uri = entry
    hopped: set[str] = {entry_uri}
    hops = 0
    # a collection link marks the start as subordinate; go up before expanding
    while select(links, COLLECTION) and hops < max_collection_hops:
        parent = select(links, COLLECTION)[0].target
        if parent in hopped:
            break
        hopped.add(parent)
        try:
            links = link_oracle(parent)
        except Exception as exc:  # noqa: BLE001
            raise FetchFailure(parent, str(exc)) from exc
        entry_uri = parent
        hops += 1

    if not select(links, ITEM) and not _entry_is_content(links, policy):
        raise NoEntryPage(entry)

    entry_desc = _entry_descriptor(entry_uri, links, entry_media_type, policy)
    pubs: list[ResourceDescriptor] = []
    failures: list[tuple[str, str]] = []
    visited: set[str] = {entry_uri}
    if _entry_is_content(links, policy):
        pubs.append(entry_desc)

    queue: list[tuple[TypedLink, int]] = [(l, 1) for l in select(links, ITEM)]
    while queue:
        link, depth = queue.pop(0)
        if link.target in visited:
            continue
        visited.add(link.target)
        member_set: LinkSet | None = None
        try:
            member_set = link_oracle(link.target)
        except Exception as exc:  # noqa: BLE001
            failures.append((link.target, str(exc)))
        pubs.append(_item_descriptor(link, member_set))
        if member_set is not None and (max_item_depth is None or depth < max_item_depth):
            queue.extend((child, depth + 1) for child in select(member_set, ITEM))

    return _finish_object(entry_desc, pubs, links, failures, policy)


def classify_pattern(
    obj: ScholarlyObject,
    entry_links: LinkSet | None = None,
    *,
    policy: ResourcePolicy = DEFAULT_POLICY,
) -> PatternId:
    """Entry page doubling as content is the PLOS shape; a pure landing
    page splits on whether the identifying URI lives in shared identifier
    infrastructure or the publisher's own space."""
    entry_in_pubs = any(d.uri == obj.entry_page.uri for d in obj.publication_resources)
    if entry_in_pubs:
        return PatternId.PLOS_STYLE
    if obj.publication_resources and obj.identifying_uri:
        if policy.is_persistent_uri(obj.identifying_uri):
            return PatternId.APS_STYLE
        return PatternId.ARXIV_STYLE
    return PatternId.OTHER


def validate_object(
    obj: ScholarlyObject, *, policy: ResourcePolicy = DEFAULT_POLICY
) -> list[Violation]:
    """Structural checks over observed evidence.

    Members never visited (links is None) cannot be judged for
    reciprocity and are skipped rather than failed.
    """
    violations: list[Violation] = []
    if not obj.publication_resources:
        violations.append(Violation(ViolationKind.EMPTY_OBJECT, obj.entry_page.uri))
        return violations

    entry_uri = obj.entry_page.uri
    id_targets: dict[str, str] = {}
    entry_id = pick_identifying_uri(obj.entry_page.links or LinkSet(), policy=policy)
    if entry_id:
        id_targets[entry_uri] = entry_id

    for member in obj.publication_resources:
        if member.uri == entry_uri:
            continue
        if member.media_type is None:
            violations.append(
                Violation(
                    ViolationKind.MISSING_MIME,
                    member.uri,
                    "item link carried no type attribute",
                )
            )
        if member.links is None:
            continue
        if entry_uri not in member.links.targets(COLLECTION):
            violations.append(
                Violation(
                    ViolationKind.MISSING_BACK_LINK,
                    member.uri,
                    "no collection link back to the entry page",
                )
            )
        member_id = pick_identifying_uri(member.links, policy=policy)
        if member_id:
            id_targets[member.uri] = member_id

    distinct = sorted(set(id_targets.values()))
    if len(distinct) > 1:
        violations.append(
            Violation(
                ViolationKind.PERSISTENT_ID_MISMATCH,
                None,
                "members disagree on persistent-id target: " + ", ".join(distinct),
            )
        )
    return violations
