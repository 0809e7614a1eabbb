"""Tests for the polite signposting HTTP client."""

import hashlib
import threading

import pytest
import requests

from sgp.crossref import CrossRefClient
from sgp.fixtures import degrade, landing_spec, plos_spec, serve, FixtureSpec
from sgp.links import LinkSet, MalformedLinkField
from sgp.navigator import (
    ConnectionFailure,
    FetchResult,
    FetchTimeout,
    Hop,
    HostThrottle,
    HttpError,
    PolitenessPolicy,
    SignpostClient,
    TooManyRedirects,
)
from sgp.resources import NoEntryPage

FAST = PolitenessPolicy(timeout=5, backoff=0.01)


@pytest.fixture(scope="module")
def endpoint():
    with serve(plos_spec(), landing_spec()) as ep:
        yield ep


@pytest.fixture(scope="module")
def client():
    return SignpostClient(FAST)


class TestPolicy:
    def test_defaults_are_sane(self):
        policy = PolitenessPolicy()
        assert policy.min_interval_per_host == 0.0
        assert policy.max_concurrent_per_host >= 1
        assert policy.max_redirects == 10

    def test_negative_interval_rejected(self):
        with pytest.raises(ValueError):
            PolitenessPolicy(min_interval_per_host=-1)

    def test_zero_concurrency_rejected(self):
        with pytest.raises(ValueError):
            PolitenessPolicy(max_concurrent_per_host=0)


class TestFetchResultInvariants:
    def test_body_requires_sha256(self):
        with pytest.raises(ValueError):
            FetchResult(
                uri="http://x/a",
                final_uri="http://x/a",
                status=200,
                links=LinkSet(),
                body=b"data",
            )

    def test_hop_rejects_non_redirect_status(self):
        with pytest.raises(ValueError):
            Hop(uri="http://x/a", status=200, location="http://x/b")


class TestHeadLinks:
    def test_entry_links_resolved_and_counted(self, endpoint, client):
        result = client.head_links(endpoint.entry_uri)
        assert result.status == 200
        assert result.final_uri == endpoint.entry_uri
        assert len(result.links) == 8
        assert all(l.target.startswith(("http://", "info:")) for l in result.links)

    def test_no_body_on_head(self, endpoint, client):
        result = client.head_links(endpoint.entry_uri)
        assert result.body is None
        assert result.sha256 is None
        assert result.media_type == "text/html"
        assert result.fetched_at.tzinfo is not None

    def test_follows_redirects_to_entry(self, endpoint, client):
        result = client.head_links(endpoint.doi_uri)
        assert result.uri == endpoint.doi_uri
        assert result.final_uri == endpoint.entry_uri
        assert len(result.links) == 8

    def test_http_error_carries_result(self, endpoint, client):
        with pytest.raises(HttpError) as err:
            client.head_links(endpoint.uri("/missing"))
        assert err.value.result.status == 404
        assert err.value.result.final_uri == endpoint.uri("/missing")

    def test_strict_mode_rejects_malformed_header(self):
        with serve(degrade(plos_spec(), "malformed-entry-header")) as ep:
            strict = SignpostClient(FAST, strict=True)
            with pytest.raises(MalformedLinkField):
                strict.head_links(ep.entry_uri)
            lenient = SignpostClient(FAST)
            assert len(lenient.head_links(ep.entry_uri).links) == 0


class TestFetchResource:
    def test_pdf_body_and_digest(self, endpoint, client):
        result = client.fetch_resource(endpoint.asset_uris()[0])
        assert result.media_type == "application/pdf"
        assert result.body.startswith(b"%PDF")
        assert result.sha256 == hashlib.sha256(result.body).hexdigest()

    def test_uses_get(self, endpoint, client):
        endpoint.clear_log()
        client.fetch_resource(endpoint.asset_uris()[1])
        assert [e.method for e in endpoint.log()] == ["GET"]


class TestRedirectChains:
    def test_doi_chain_shape(self, endpoint, client):
        chain = client.resolve_persistent(endpoint.doi_uri)
        assert [h.status for h in chain.hops] == [303, 302]
        assert chain.hops[0].uri == endpoint.doi_uri
        assert chain.hops[0].location.endswith(
            "/locate/10.1371/journal.pone.0115253"
        )
        assert chain.terminal.final_uri == endpoint.entry_uri
        assert chain.terminal.status == 200

    def test_hop_zero_carries_describedby(self, endpoint, client):
        chain = client.resolve_persistent(endpoint.doi_uri)
        (link,) = chain.hops[0].links.select("describedby")
        assert link.target == endpoint.works_uri
        assert link.attrs.media_type == "application/json"

    def test_aggregated_links_include_hop_links(self, endpoint, client):
        chain = client.resolve_persistent(endpoint.doi_uri)
        targets = [l.target for l in chain.all_links().select("describedby")]
        assert endpoint.works_uri in targets

    def test_non_redirecting_uri_zero_hops(self, endpoint, client):
        chain = client.resolve_persistent(endpoint.entry_uri)
        assert chain.hops == ()
        assert chain.terminal.final_uri == endpoint.entry_uri

    def test_redirect_loop_bounded(self, endpoint):
        short = SignpostClient(PolitenessPolicy(timeout=5, max_redirects=3))
        with pytest.raises(TooManyRedirects):
            short.head_links(endpoint.uri("/loop"))


class TestDiscovery:
    def test_start_point_independence_plos(self, endpoint, client):
        policy = endpoint.policy()
        starts = [endpoint.doi_uri, endpoint.entry_uri, *endpoint.asset_uris()]
        objects = [client.discover_object(s, policy=policy) for s in starts]
        reference = objects[0].publication_resources
        assert len(reference) == 4
        for obj in objects[1:]:
            assert obj.publication_resources == reference

    def test_start_point_independence_landing(self, endpoint, client):
        policy = endpoint.policy()
        view = endpoint.views[1]
        starts = [view.doi_uri, view.entry_uri, *view.asset_uris()]
        objects = [client.discover_object(s, policy=policy) for s in starts]
        reference = objects[0].publication_resources
        assert len(reference) == 2
        for obj in objects[1:]:
            assert obj.publication_resources == reference

    def test_identifying_uri_and_pattern(self, endpoint, client):
        obj = client.discover_object(endpoint.entry_uri, policy=endpoint.policy())
        assert obj.identifying_uri == endpoint.doi_uri
        assert obj.pattern is not None
        assert obj.pattern.value == "plos-style"

    def test_repeated_discovery_is_identical(self, endpoint, client):
        policy = endpoint.policy()
        first = client.discover_object(endpoint.entry_uri, policy=policy)
        second = client.discover_object(endpoint.entry_uri, policy=policy)
        assert first == second

    def test_discovery_uses_head_only_one_per_resource(self, endpoint, client):
        endpoint.clear_log()
        client.discover_object(endpoint.entry_uri, policy=endpoint.policy())
        log = endpoint.log()
        assert {e.method for e in log} == {"HEAD"}
        assert len(log) == len({e.path for e in log}) == 4

    def test_plain_page_has_no_object(self, endpoint, client):
        with pytest.raises(NoEntryPage):
            client.discover_object(endpoint.uri("/plain"), policy=endpoint.policy())

    def test_member_fetch_failure_recorded_not_raised(self):
        spec = plos_spec()
        spec = FixtureSpec.from_json_dict(
            {**spec.to_json_dict(), "status_scripts": [["/plosone/article.xml", [404]]]}
        )
        with serve(spec) as ep:
            client = SignpostClient(FAST)
            obj = client.discover_object(ep.entry_uri, policy=ep.policy())
        assert len(obj.publication_resources) == 4
        assert len(obj.failures) == 1
        assert obj.failures[0][0].endswith("/plosone/article.xml")


class TestRetries:
    def test_503_then_200_succeeds(self):
        spec = plos_spec()
        spec = FixtureSpec.from_json_dict(
            {**spec.to_json_dict(), "status_scripts": [["/plosone/article", [503, 200]]]}
        )
        with serve(spec) as ep:
            client = SignpostClient(FAST)
            result = client.head_links(ep.entry_uri)
            assert result.status == 200
            assert [e.path for e in ep.log()] == ["/plosone/article"] * 2

    def test_429_retries_with_retry_after(self):
        spec = plos_spec()
        spec = FixtureSpec.from_json_dict(
            {**spec.to_json_dict(), "status_scripts": [["/plosone/article", [429, 200]]]}
        )
        with serve(spec) as ep:
            client = SignpostClient(FAST)
            assert client.head_links(ep.entry_uri).status == 200

    def test_persistent_503_raises_http_error(self):
        spec = plos_spec()
        spec = FixtureSpec.from_json_dict(
            {
                **spec.to_json_dict(),
                "status_scripts": [["/plosone/article", [503, 503, 503, 503]]],
            }
        )
        with serve(spec) as ep:
            client = SignpostClient(FAST)
            with pytest.raises(HttpError) as err:
                client.head_links(ep.entry_uri)
            assert err.value.result.status == 503
            # initial try plus policy.retries more
            assert len(ep.log()) == FAST.retries + 1

    def test_500_not_retried(self):
        spec = plos_spec()
        spec = FixtureSpec.from_json_dict(
            {**spec.to_json_dict(), "status_scripts": [["/plosone/article", [500, 200]]]}
        )
        with serve(spec) as ep:
            client = SignpostClient(FAST)
            with pytest.raises(HttpError):
                client.head_links(ep.entry_uri)
            assert len(ep.log()) == 1


class _RaisingSession:
    def __init__(self, exc):
        self.exc = exc
        self.calls = 0

    def request(self, *args, **kwargs):
        self.calls += 1
        raise self.exc


class TestTransportErrors:
    def test_timeout_maps_to_fetch_timeout(self):
        session = _RaisingSession(requests.Timeout("slow"))
        client = SignpostClient(
            PolitenessPolicy(retries=1, backoff=0.001), session=session
        )
        with pytest.raises(FetchTimeout):
            client.head_links("http://example.test/a")
        assert session.calls == 2

    def test_connection_error_maps_to_connection_failure(self):
        session = _RaisingSession(requests.ConnectionError("refused"))
        client = SignpostClient(
            PolitenessPolicy(retries=0), session=session
        )
        with pytest.raises(ConnectionFailure):
            client.head_links("http://example.test/a")
        assert session.calls == 1


class TestPoliteness:
    def test_min_interval_spacing_in_server_log(self):
        with serve(plos_spec()) as ep:
            client = SignpostClient(
                PolitenessPolicy(min_interval_per_host=0.05, timeout=5)
            )
            ep.clear_log()
            for _ in range(4):
                client.head_links(ep.entry_uri)
            stamps = [e.timestamp for e in ep.log()]
        assert len(stamps) == 4
        gaps = [b - a for a, b in zip(stamps, stamps[1:])]
        assert all(gap >= 0.05 for gap in gaps)

    def test_spacing_holds_under_concurrency(self):
        with serve(plos_spec()) as ep:
            client = SignpostClient(
                PolitenessPolicy(min_interval_per_host=0.04, timeout=5)
            )
            ep.clear_log()
            threads = [
                threading.Thread(target=client.head_links, args=(ep.entry_uri,))
                for _ in range(4)
            ]
            for t in threads:
                t.start()
            for t in threads:
                t.join()
            stamps = sorted(e.timestamp for e in ep.log())
        gaps = [b - a for a, b in zip(stamps, stamps[1:])]
        assert len(stamps) == 4
        assert all(gap >= 0.04 for gap in gaps)

    def test_no_interval_no_delay(self, endpoint, client):
        throttle = HostThrottle(PolitenessPolicy())
        with throttle.acquire("example.test"):
            pass
        with throttle.acquire("example.test"):
            pass

    def test_throttle_shared_with_works_client(self):
        with serve(plos_spec()) as ep:
            nav = SignpostClient(
                PolitenessPolicy(min_interval_per_host=0.04, timeout=5)
            )
            works = CrossRefClient(api_base=ep.base_uri, throttle=nav.throttle)
            ep.clear_log()
            nav.head_links(ep.entry_uri)
            work = works.fetch_work("10.1371/journal.pone.0115253")
            stamps = [e.timestamp for e in ep.log()]
        assert work.doi == "10.1371/journal.pone.0115253"
        assert len(stamps) == 2
        assert stamps[1] - stamps[0] >= 0.04
