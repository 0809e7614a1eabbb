"""Polite HTTP client for typed-link navigation.

Issues HEAD/GET requests, follows redirect chains hop by hop while
keeping every hop's Link header, and drives the boundary closure over a
live host. Per-host politeness (minimum spacing, bounded concurrency)
lives here so the works-API client can share one budget.
"""

from __future__ import annotations

import hashlib
import threading
import time
from contextlib import contextmanager
from dataclasses import dataclass
from datetime import datetime
from urllib.parse import urljoin, urlsplit

import requests

from .links import (
    DEFAULT_VOCABULARY,
    LinkSet,
    Vocabulary,
    parse_link_field,
    resolve_targets,
    select,
)
from .resources import (
    DEFAULT_POLICY as DEFAULT_RESOURCE_POLICY,
    ResourcePolicy,
    ScholarlyObject,
    boundary_closure,
)
from .rfc3339 import utcnow

__all__ = [
    "PolitenessPolicy",
    "DEFAULT_POLITENESS",
    "HostThrottle",
    "FetchResult",
    "Hop",
    "RedirectChain",
    "NavigationError",
    "ConnectionFailure",
    "FetchTimeout",
    "TooManyRedirects",
    "HttpError",
    "SignpostClient",
]

_REDIRECT_STATUSES = frozenset({301, 302, 303, 307, 308})


class NavigationError(RuntimeError):
    pass


class ConnectionFailure(NavigationError):
    pass


class FetchTimeout(NavigationError):
    pass


class TooManyRedirects(NavigationError):
    pass


class HttpError(NavigationError):
    """A 4xx/5xx terminal response; the parsed result rides along."""

    def __init__(self, result: "FetchResult"):
        super().__init__(f"HTTP {result.status} for {result.final_uri}")
        self.result = result


@dataclass(frozen=True)
class PolitenessPolicy:
    min_interval_per_host: float = 0.0
    max_concurrent_per_host: int = 2
    user_agent: str = "sgp-toolkit/0.1"
    timeout: float = 10.0
    max_redirects: int = 10
    retries: int = 2
    backoff: float = 0.05

    def __post_init__(self) -> None:
        if self.min_interval_per_host < 0:
            raise ValueError("min_interval_per_host must be >= 0")
        if self.max_concurrent_per_host < 1:
            raise ValueError("max_concurrent_per_host must be >= 1")
        if self.max_redirects < 0:
            raise ValueError("max_redirects must be >= 0")


DEFAULT_POLITENESS = PolitenessPolicy()


class _HostState:
    def __init__(self, concurrency: int):
        self.semaphore = threading.Semaphore(concurrency)
        self.next_free = 0.0


class HostThrottle:
    """Per-host gate: at most N in flight, and when a minimum interval
    is set, one at a time with that much quiet between completions.

    Spacing is measured from the end of one request to the start of the
    next, so a server that logs arrivals observes gaps of at least the
    interval.
    """

    def __init__(self, policy: PolitenessPolicy = DEFAULT_POLITENESS):
        self._policy = policy
        self._lock = threading.Lock()
        self._hosts: dict[str, _HostState] = {}

    def _state(self, host: str) -> _HostState:
        with self._lock:
            state = self._hosts.get(host)
            if state is None:
                # an interval forces serial order; overlap would void it
                concurrency = (
                    1
                    if self._policy.min_interval_per_host > 0
                    else self._policy.max_concurrent_per_host
                )
                state = _HostState(concurrency)
                self._hosts[host] = state
            return state

    @contextmanager
    def acquire(self, host: str):
        state = self._state(host)
        interval = self._policy.min_interval_per_host
        state.semaphore.acquire()
        try:
            if interval > 0:
                wait = state.next_free - time.monotonic()
                if wait > 0:
                    time.sleep(wait)
            yield
        finally:
            if interval > 0:
                state.next_free = time.monotonic() + interval
            state.semaphore.release()


@dataclass(frozen=True)
class FetchResult:
    """Terminal response for one URI; links are resolved against the
    URI that actually answered."""

    uri: str
    final_uri: str
    status: int
    links: LinkSet
    media_type: str | None = None
    body: bytes | None = None
    sha256: str | None = None
    fetched_at: datetime | None = None

    def __post_init__(self) -> None:
        if (self.body is None) != (self.sha256 is None):
            raise ValueError("sha256 must accompany body and only body")


@dataclass(frozen=True)
class Hop:
    uri: str
    status: int
    location: str
    links: LinkSet = LinkSet()

    def __post_init__(self) -> None:
        if self.status not in _REDIRECT_STATUSES:
            raise ValueError(f"not a redirect status: {self.status}")


@dataclass(frozen=True)
class RedirectChain:
    hops: tuple[Hop, ...]
    terminal: FetchResult

    def all_links(self) -> LinkSet:
        collected = []
        for hop in self.hops:
            collected.extend(hop.links)
        collected.extend(self.terminal.links)
        return LinkSet(tuple(collected))


class SignpostClient:
    """HEAD/GET with Link collection and redirect bookkeeping.

    ``session`` is injectable for tests; it must provide
    requests.Session semantics. The shared throttle is duck-typed: any
    object with acquire(host) returning a context manager works.
    """

    def __init__(
        self,
        policy: PolitenessPolicy = DEFAULT_POLITENESS,
        *,
        session=None,
        strict: bool = False,
        vocabulary: Vocabulary = DEFAULT_VOCABULARY,
        throttle: HostThrottle | None = None,
    ):
        self.policy = policy
        self._session = session if session is not None else requests.Session()
        self._strict = strict
        self._vocabulary = vocabulary
        self.throttle = throttle if throttle is not None else HostThrottle(policy)

    # -- single request

    def _request(self, method: str, uri: str):
        policy = self.policy
        host = urlsplit(uri).netloc
        last_error: Exception | None = None
        for attempt in range(policy.retries + 1):
            try:
                with self.throttle.acquire(host):
                    response = self._session.request(
                        method,
                        uri,
                        allow_redirects=False,
                        timeout=policy.timeout,
                        headers={"User-Agent": policy.user_agent},
                    )
            except requests.Timeout as exc:
                last_error = FetchTimeout(f"{method} {uri}: {exc}")
            except requests.RequestException as exc:
                last_error = ConnectionFailure(f"{method} {uri}: {exc}")
            else:
                if response.status_code in (429, 503) and attempt < policy.retries:
                    delay = policy.backoff * (2**attempt)
                    retry_after = response.headers.get("Retry-After")
                    if retry_after is not None:
                        try:
                            delay = max(float(retry_after), delay)
                        except ValueError:
                            pass
                    time.sleep(delay)
                    continue
                return response
            if attempt < policy.retries:
                time.sleep(policy.backoff * (2**attempt))
        assert last_error is not None
        raise last_error

    def _links_from(self, response, base: str) -> LinkSet:
        header = response.headers.get("Link", "")
        if not header:
            return LinkSet((), base=base)
        parsed = parse_link_field(header, strict=self._strict, vocabulary=self._vocabulary)
        return resolve_targets(parsed, base)

    # -- redirect walk

    def _walk(self, method: str, uri: str):
        current = uri
        hops: list[Hop] = []
        for _ in range(self.policy.max_redirects + 1):
            response = self._request(method, current)
            location = response.headers.get("Location")
            if response.status_code in _REDIRECT_STATUSES and location is not None:
                target = urljoin(current, location)
                hops.append(
                    Hop(
                        uri=current,
                        status=response.status_code,
                        location=target,
                        links=self._links_from(response, current),
                    )
                )
                current = target
                continue
            return hops, response, current
        raise TooManyRedirects(f"{uri}: more than {self.policy.max_redirects} redirects")

    def _terminal(
        self, uri: str, final_uri: str, response, *, with_body: bool
    ) -> FetchResult:
        content_type = response.headers.get("Content-Type")
        media_type = content_type.split(";")[0].strip() if content_type else None
        body = response.content if with_body else None
        result = FetchResult(
            uri=uri,
            final_uri=final_uri,
            status=response.status_code,
            links=self._links_from(response, final_uri),
            media_type=media_type,
            body=body,
            sha256=hashlib.sha256(body).hexdigest() if body is not None else None,
            fetched_at=utcnow(),
        )
        if result.status >= 400:
            raise HttpError(result)
        return result

    # -- public operations

    def head_links(self, uri: str) -> FetchResult:
        hops, response, final_uri = self._walk("HEAD", uri)
        return self._terminal(uri, final_uri, response, with_body=False)

    def fetch_resource(self, uri: str) -> FetchResult:
        hops, response, final_uri = self._walk("GET", uri)
        return self._terminal(uri, final_uri, response, with_body=True)

    def resolve_persistent(self, uri: str) -> RedirectChain:
        hops, response, final_uri = self._walk("HEAD", uri)
        terminal = self._terminal(uri, final_uri, response, with_body=False)
        return RedirectChain(hops=tuple(hops), terminal=terminal)

    def discover_object(
        self,
        start: str,
        *,
        policy: ResourcePolicy = DEFAULT_RESOURCE_POLICY,
        max_collection_hops: int = 1,
        max_item_depth: int | None = None,
    ) -> ScholarlyObject:
        """Boundary closure from any member URI, over HEAD requests only.

        The walk up collection links happens here so the entry page's
        media type is known first-hand; the closure then expands item
        links with a per-call memo, one HEAD per distinct resource.
        """
        cache: dict[str, FetchResult] = {}

        def fetch(uri: str) -> FetchResult:
            hit = cache.get(uri)
            if hit is not None:
                return hit
            result = self.head_links(uri)
            cache[result.uri] = result
            cache[result.final_uri] = result
            return result

        current = fetch(start)
        hopped = {current.final_uri}
        for _ in range(max_collection_hops):
            upward = select(current.links, "collection")
            if not upward or upward[0].target in hopped:
                break
            current = fetch(upward[0].target)
            hopped.add(current.final_uri)

        def oracle(uri: str) -> LinkSet:
            return fetch(uri).links

        return boundary_closure(
            current.final_uri,
            oracle,
            policy=policy,
            max_collection_hops=0,
            max_item_depth=max_item_depth,
            entry_media_type=current.media_type,
        )
