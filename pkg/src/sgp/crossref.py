"""Client and data model for the CrossRef works API.

Read-only: recent-deposit listing, per-DOI metadata, and classification
of deposit entries as new registrations vs updates vs likely journal
transfers. Tests run against a local fixture registrar; the live
service is never contacted from the test suite.
"""

from __future__ import annotations

import json
import re
import time
import warnings
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from enum import Enum
from typing import Any, Mapping
from urllib.parse import quote, urlsplit

import requests

from .rfc3339 import parse_rfc3339

__all__ = [
    "DEFAULT_API_BASE",
    "RESOLVER_BASE",
    "CROSSREF_PROFILE",
    "CrossRefWork",
    "WorkList",
    "Author",
    "PartialDate",
    "DepositCategory",
    "DepositClassification",
    "CrossRefError",
    "NotFound",
    "ServiceError",
    "RateLimited",
    "MalformedJson",
    "NotAWork",
    "MissingDoi",
    "InvalidDoi",
    "OrderingWarning",
    "RetryPolicy",
    "CrossRefClient",
    "normalize_doi",
    "metadata_uri_for",
    "parse_work",
    "parse_work_list",
    "classify_deposit",
    "normalize_prefix",
    "normalize_member",
]

DEFAULT_API_BASE = "http://api.crossref.org"
RESOLVER_BASE = "http://dx.doi.org"
CROSSREF_PROFILE = "https://github.com/CrossRef/rest-api-doc"


class MalformedJson(ValueError):
    pass


class NotAWork(ValueError):
    pass


class MissingDoi(ValueError):
    pass


class InvalidDoi(ValueError):
    pass


class CrossRefError(Exception):
    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class NotFound(CrossRefError):
    pass


class ServiceError(CrossRefError):
    pass


class RateLimited(ServiceError):
    pass


class OrderingWarning(UserWarning):
    """A listing violated its advertised sort order."""


_DOI_PREFIXES = ("doi:", "info:doi/")
_RESOLVER_PREFIXES = (
    "http://dx.doi.org/",
    "https://dx.doi.org/",
    "http://doi.org/",
    "https://doi.org/",
)


def normalize_doi(raw: str) -> str:
    """Lowercase, strip resolver/scheme prefixes. Idempotent."""
    doi = raw.strip()
    low = doi.lower()
    for prefix in _RESOLVER_PREFIXES:
        if low.startswith(prefix):
            doi = doi[len(prefix) :]
            low = doi.lower()
            break
    for prefix in _DOI_PREFIXES:
        if low.startswith(prefix):
            doi = doi[len(prefix) :]
            break
    doi = doi.strip().lower()
    if "/" not in doi or not doi.partition("/")[0] or not doi.partition("/")[2]:
        raise InvalidDoi(raw)
    return doi


# pchar plus "/": what may stay raw in a URI path
_SAFE_PATH = "/:@!$&'()*+,;=-._~"
_PCT_TRIPLET = re.compile(r"%[0-9A-Fa-f]{2}")


def _quote_keeping_escapes(text: str) -> str:
    # existing %XX triplets stay opaque so the encoding is idempotent
    out: list[str] = []
    pos = 0
    for match in _PCT_TRIPLET.finditer(text):
        out.append(quote(text[pos : match.start()], safe=_SAFE_PATH))
        out.append(match.group(0))
        pos = match.end()
    out.append(quote(text[pos:], safe=_SAFE_PATH))
    return "".join(out)


def metadata_uri_for(doi: str, api_base: str = DEFAULT_API_BASE) -> str:
    """Works-API URI for a DOI; percent-encodes only what RFC 3986
    demands, and is idempotent on already-encoded input."""
    return f"{api_base.rstrip('/')}/works/{_quote_keeping_escapes(doi)}"


@dataclass(frozen=True)
class PartialDate:
    year: int
    month: int | None = None
    day: int | None = None

    @classmethod
    def from_date_parts(cls, parts: Any) -> "PartialDate | None":
        if not parts or not parts[0] or parts[0][0] is None:
            return None
        nums = [int(x) for x in parts[0][:3]]
        return cls(*nums)


@dataclass(frozen=True)
class Author:
    family: str | None = None
    given: str | None = None
    affiliations: tuple[str, ...] = ()


@dataclass(frozen=True)
class CrossRefWork:
    """One work as the API reports it. Every populated field comes from
    a key present in the source document; nothing is defaulted in."""

    doi: str
    url: str | None = None
    issn: tuple[str, ...] = ()
    title: tuple[str, ...] = ()
    subtitle: tuple[str, ...] = ()
    container_title: tuple[str, ...] = ()
    authors: tuple[Author, ...] = ()
    publisher: str | None = None
    member: str | None = None
    prefix: str | None = None
    created: datetime | None = None
    deposited: datetime | None = None
    indexed: datetime | None = None
    issued: PartialDate | None = None
    work_type: str | None = None
    reference_count: int | None = None
    volume: str | None = None
    issue: str | None = None
    page: str | None = None
    license_links: tuple[tuple[str, str | None], ...] = ()
    fulltext_links: tuple[tuple[str, str | None], ...] = ()

    @property
    def doi_prefix(self) -> str:
        return self.doi.partition("/")[0]

    @property
    def member_id(self) -> str | None:
        return normalize_member(self.member) if self.member else None


@dataclass(frozen=True)
class WorkList:
    items: tuple[CrossRefWork, ...] = ()
    status: str = "ok"
    message_type: str = "work-list"


def _load_document(doc: str | bytes | dict) -> dict:
    if isinstance(doc, (str, bytes)):
        try:
            loaded = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise MalformedJson(str(exc)) from exc
    else:
        loaded = doc
    if not isinstance(loaded, dict):
        raise MalformedJson("top-level JSON is not an object")
    return loaded


def _timestamp(message: Mapping, key: str) -> datetime | None:
    stamp = message.get(key)
    if not isinstance(stamp, Mapping):
        return None
    text = stamp.get("date-time")
    if text:
        return parse_rfc3339(text)
    millis = stamp.get("timestamp")
    if millis is not None:
        return datetime.fromtimestamp(millis / 1000, tz=timezone.utc).replace(
            microsecond=0
        )
    return None


def _string_tuple(message: Mapping, key: str) -> tuple[str, ...]:
    value = message.get(key)
    if not isinstance(value, list):
        return ()
    return tuple(str(item) for item in value)


def _work_from_message(message: Mapping) -> CrossRefWork:
    raw_doi = message.get("DOI")
    if not raw_doi:
        raise MissingDoi("work without DOI")
    authors = []
    for entry in message.get("author", []) or []:
        affiliations = tuple(
            a.get("name", "") for a in entry.get("affiliation", []) if a.get("name")
        )
        authors.append(
            Author(
                family=entry.get("family"),
                given=entry.get("given"),
                affiliations=affiliations,
            )
        )
    licenses = tuple(
        (item.get("URL", ""), item.get("content-version"))
        for item in message.get("license", []) or []
    )
    fulltext = tuple(
        (item.get("URL", ""), item.get("content-type"))
        for item in message.get("link", []) or []
    )
    ref_count = message.get("reference-count")
    return CrossRefWork(
        doi=normalize_doi(str(raw_doi)),
        url=message.get("URL"),
        issn=_string_tuple(message, "ISSN"),
        title=_string_tuple(message, "title"),
        subtitle=_string_tuple(message, "subtitle"),
        container_title=_string_tuple(message, "container-title"),
        authors=tuple(authors),
        publisher=message.get("publisher"),
        member=message.get("member"),
        prefix=message.get("prefix"),
        created=_timestamp(message, "created"),
        deposited=_timestamp(message, "deposited"),
        indexed=_timestamp(message, "indexed"),
        issued=PartialDate.from_date_parts(
            (message.get("issued") or {}).get("date-parts")
        )
        if "issued" in message
        else None,
        work_type=message.get("type"),
        reference_count=int(ref_count) if ref_count is not None else None,
        volume=message.get("volume"),
        issue=message.get("issue"),
        page=message.get("page"),
        license_links=licenses,
        fulltext_links=fulltext,
    )


def parse_work(doc: str | bytes | dict) -> CrossRefWork:
    """Parse a works-API response (or a bare work object)."""
    loaded = _load_document(doc)
    if "message-type" in loaded:
        if loaded.get("message-type") != "work":
            raise NotAWork(f"message-type {loaded.get('message-type')!r}")
        message = loaded.get("message")
        if not isinstance(message, Mapping):
            raise NotAWork("work envelope without message object")
        return _work_from_message(message)
    if "DOI" in loaded:
        return _work_from_message(loaded)
    raise NotAWork("document is neither a work envelope nor a bare work")


def parse_work_list(doc: str | bytes | dict) -> WorkList:
    loaded = _load_document(doc)
    message_type = loaded.get("message-type")
    if message_type != "work-list":
        raise NotAWork(f"message-type {message_type!r}")
    status = loaded.get("status", "")
    if status != "ok":
        raise NotAWork(f"status {status!r}")
    message = loaded.get("message")
    if not isinstance(message, Mapping):
        raise NotAWork("work-list envelope without message object")
    items = tuple(
        _work_from_message(item) for item in message.get("items", []) or []
    )
    return WorkList(items=items, status=status, message_type=message_type)


class DepositCategory(Enum):
    NEW_REGISTRATION = "new-registration"
    METADATA_UPDATE = "metadata-update"
    POSSIBLE_TRANSFER = "possible-transfer"


@dataclass(frozen=True)
class DepositClassification:
    category: DepositCategory
    evidence: str


def normalize_prefix(value: str) -> str:
    """Accept a bare DOI prefix or a prefix URI; return the bare form."""
    text = value.strip().rstrip("/")
    if "/" in text:
        text = text.rsplit("/", 1)[-1]
    return text.lower()


def normalize_member(value: str) -> str:
    """Accept a bare member number or a member URI; return the number."""
    return value.strip().rstrip("/").rsplit("/", 1)[-1]


def classify_deposit(
    work: CrossRefWork,
    prefix_owner_map: Mapping[str, str],
    window: timedelta = timedelta(hours=24),
) -> DepositClassification:
    """What does a deposit listing entry mean?

    Created and deposited within the window means a new registration. An
    old creation date means change: if the configured owner of the
    work's DOI prefix differs from the depositing member, flag a
    possible title transfer; otherwise it is a metadata update.
    The literal ``prefix`` field names the current owner, so the lookup
    key is the prefix embedded in the DOI itself.
    """
    owners = {normalize_prefix(k): normalize_member(v) for k, v in prefix_owner_map.items()}
    if work.created is not None and work.deposited is not None:
        gap = abs(work.deposited - work.created)
        if gap <= window:
            return DepositClassification(
                DepositCategory.NEW_REGISTRATION,
                f"deposited {int(gap.total_seconds())}s after creation",
            )
    doi_prefix = work.doi_prefix
    expected = owners.get(doi_prefix)
    if expected is None and work.prefix:
        expected = owners.get(normalize_prefix(work.prefix))
    current = work.member_id
    if expected is not None and current is not None and expected != current:
        return DepositClassification(
            DepositCategory.POSSIBLE_TRANSFER,
            f"DOI prefix {doi_prefix} is held by member {expected} "
            f"but the deposit names member {current}",
        )
    return DepositClassification(
        DepositCategory.METADATA_UPDATE,
        "creation predates the deposit window and prefix ownership matches"
        if expected is not None
        else "creation predates the deposit window; prefix ownership unknown",
    )


@dataclass(frozen=True)
class RetryPolicy:
    max_retries: int = 2
    backoff: float = 0.05
    retry_statuses: frozenset[int] = frozenset({429, 500, 502, 503, 504})

    def delay(self, attempt: int, retry_after: str | None) -> float:
        if retry_after:
            try:
                return max(0.0, float(retry_after))
            except ValueError:
                pass
        return self.backoff * (2**attempt)


class CrossRefClient:
    """Thin works-API client with retry/backoff and optional per-host
    throttling (pass the navigator's throttle to share one budget)."""

    def __init__(
        self,
        api_base: str = DEFAULT_API_BASE,
        *,
        session: requests.Session | None = None,
        retry: RetryPolicy = RetryPolicy(),
        throttle=None,
        timeout: float = 10.0,
        user_agent: str = "sgp-crossref",
    ):
        self.api_base = api_base.rstrip("/")
        self._session = session or requests.Session()
        self._retry = retry
        self._throttle = throttle
        self._timeout = timeout
        self._headers = {"User-Agent": user_agent}

    def close(self) -> None:
        self._session.close()

    def __enter__(self) -> "CrossRefClient":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    def _get(self, url: str) -> requests.Response:
        attempt = 0
        while True:
            try:
                if self._throttle is not None:
                    with self._throttle.acquire(urlsplit(url).netloc):
                        response = self._session.get(
                            url, timeout=self._timeout, headers=self._headers
                        )
                else:
                    response = self._session.get(
                        url, timeout=self._timeout, headers=self._headers
                    )
            except requests.RequestException as exc:
                if attempt < self._retry.max_retries:
                    time.sleep(self._retry.delay(attempt, None))
                    attempt += 1
                    continue
                raise ServiceError(str(exc)) from exc
            if response.status_code == 200:
                return response
            if response.status_code == 404:
                raise NotFound(f"404 for {url}", status=404)
            if (
                response.status_code in self._retry.retry_statuses
                and attempt < self._retry.max_retries
            ):
                time.sleep(
                    self._retry.delay(attempt, response.headers.get("Retry-After"))
                )
                attempt += 1
                continue
            if response.status_code == 429:
                raise RateLimited(f"429 for {url}", status=429)
            raise ServiceError(
                f"{response.status_code} for {url}", status=response.status_code
            )

    def fetch_work(self, doi: str) -> CrossRefWork:
        url = metadata_uri_for(normalize_doi(doi), api_base=self.api_base)
        return parse_work(self._get(url).text)

    def list_recent(self, rows: int = 20, offset: int = 0) -> WorkList:
        if rows < 1:
            raise ValueError("rows must be >= 1")
        url = (
            f"{self.api_base}/works?sort=deposited&order=desc"
            f"&rows={rows}&offset={offset}"
        )
        work_list = parse_work_list(self._get(url).text)
        stamps = [w.deposited for w in work_list.items if w.deposited is not None]
        if any(a < b for a, b in zip(stamps, stamps[1:])):
            warnings.warn(
                "listing is not in descending deposited order",
                OrderingWarning,
                stacklevel=2,
            )
        return work_list
