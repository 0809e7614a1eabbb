"""Works-API parsing, DOI handling, deposit classification, client retry."""

import json
import warnings
from datetime import datetime, timedelta, timezone

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sgp.crossref import (
    CrossRefClient,
    CrossRefWork,
    DepositCategory,
    InvalidDoi,
    MalformedJson,
    MissingDoi,
    NotAWork,
    NotFound,
    OrderingWarning,
    RetryPolicy,
    ServiceError,
    classify_deposit,
    metadata_uri_for,
    normalize_doi,
    parse_work,
    parse_work_list,
)


class TestNormalizeDoi:
    def test_plain_lowercased(self):
        assert normalize_doi("10.1045/SEPTEMBER2015-Rosenthal") == (
            "10.1045/september2015-rosenthal"
        )

    def test_strips_doi_scheme(self):
        assert normalize_doi("doi:10.1371/journal.pone.0115253") == (
            "10.1371/journal.pone.0115253"
        )

    def test_strips_info_uri(self):
        assert normalize_doi("info:doi/10.1371/journal.pone.0115253") == (
            "10.1371/journal.pone.0115253"
        )

    @pytest.mark.parametrize(
        "prefix",
        [
            "http://dx.doi.org/",
            "https://dx.doi.org/",
            "http://doi.org/",
            "https://doi.org/",
        ],
    )
    def test_strips_resolver(self, prefix):
        assert normalize_doi(prefix + "10.1029/JD094iD06p08425") == (
            "10.1029/jd094id06p08425"
        )

    def test_rejects_missing_slash(self):
        with pytest.raises(InvalidDoi):
            normalize_doi("10.1045")

    def test_rejects_empty(self):
        with pytest.raises(InvalidDoi):
            normalize_doi("")

    @given(st.text(alphabet="abcdefXYZ0123456789./-_;()", min_size=3, max_size=40))
    @settings(max_examples=200)
    def test_idempotent(self, raw):
        try:
            once = normalize_doi(raw)
        except InvalidDoi:
            return
        assert normalize_doi(once) == once


class TestMetadataUri:
    def test_plain_doi_untouched(self):
        assert metadata_uri_for("10.1045/september2015-rosenthal") == (
            "http://api.crossref.org/works/10.1045/september2015-rosenthal"
        )

    def test_reserved_characters_encoded(self):
        uri = metadata_uri_for("10.5/a b<c>#d?e")
        assert uri.endswith("/works/10.5/a%20b%3Cc%3E%23d%3Fe")

    def test_sub_delims_kept(self):
        uri = metadata_uri_for("10.5/x(1);y=2,z:@w")
        assert uri.endswith("/works/10.5/x(1);y=2,z:@w")

    def test_already_encoded_input_is_stable(self):
        doi = "10.5/a%20b"
        uri = metadata_uri_for(doi)
        assert uri.endswith("/works/10.5/a%20b")

    def test_custom_base_trailing_slash(self):
        uri = metadata_uri_for("10.5/x", api_base="http://localhost:9999/api/")
        assert uri == "http://localhost:9999/api/works/10.5/x"

    @given(st.text(min_size=1, max_size=30))
    @settings(max_examples=200)
    def test_idempotent(self, suffix):
        doi = "10.5/" + suffix
        once = metadata_uri_for(doi)
        again = "http://api.crossref.org/works/" + once.split("/works/", 1)[1]
        assert metadata_uri_for(once.split("/works/", 1)[1]) == again


@pytest.fixture(scope="module")
def work(data_dir):
    return parse_work((data_dir / "work_rosenthal.json").read_text())


@pytest.fixture(scope="module")
def listing(data_dir):
    return parse_work_list((data_dir / "worklist_recent.json").read_text())


class TestParseWork:
    def test_identity(self, work):
        assert work.doi == "10.1045/september2015-rosenthal"
        assert work.url == "http://dx.doi.org/10.1045/september2015-rosenthal"
        assert work.doi_prefix == "10.1045"

    def test_bibliographic_fields(self, work):
        assert work.title == ("Enhancing the LOCKSS Digital Preservation Technology",)
        assert work.subtitle == ()
        assert work.container_title == ("D-Lib Magazine",)
        assert work.issn == ("1082-9873",)
        assert work.volume == "21"
        assert work.issue == "9/10"
        assert work.page is None
        assert work.work_type == "journal-article"
        assert work.reference_count == 0
        assert work.publisher == "CNRI Acct"

    def test_authors(self, work):
        assert [a.family for a in work.authors] == [
            "Rosenthal",
            "Vargas",
            "Lipkis",
            "Griffin",
        ]
        assert work.authors[0].given == "David S. H."
        assert work.authors[0].affiliations == ()

    def test_timestamps(self, work):
        utc = timezone.utc
        assert work.created == datetime(2015, 9, 15, 11, 9, 53, tzinfo=utc)
        assert work.deposited == datetime(2015, 9, 15, 12, 46, 38, tzinfo=utc)
        assert work.indexed == datetime(2015, 12, 22, 3, 16, 21, tzinfo=utc)

    def test_issued_partial_date(self, work):
        assert work.issued is not None
        assert (work.issued.year, work.issued.month, work.issued.day) == (2015, 9, None)

    def test_registrar_pointers(self, work):
        assert work.member == "http://id.crossref.org/member/72"
        assert work.prefix == "http://id.crossref.org/prefix/10.1045"
        assert work.member_id == "72"

    def test_bare_work_object_accepted(self, data_dir):
        envelope = json.loads((data_dir / "work_rosenthal.json").read_text())
        bare = parse_work(envelope["message"])
        assert bare == parse_work(envelope)

    def test_wrong_message_type(self):
        doc = {"message-type": "member", "message": {"DOI": "10.5/x"}}
        with pytest.raises(NotAWork):
            parse_work(doc)

    def test_malformed_json(self):
        with pytest.raises(MalformedJson):
            parse_work("{not json")

    def test_missing_doi(self):
        with pytest.raises(MissingDoi):
            parse_work({"message-type": "work", "message": {"title": ["x"]}})

    def test_no_invented_fields(self):
        work = parse_work({"DOI": "10.5/x"})
        assert work.url is None
        assert work.title == ()
        assert work.authors == ()
        assert work.created is None
        assert work.deposited is None
        assert work.issued is None
        assert work.member is None
        assert work.reference_count is None
        assert work.license_links == ()
        assert work.fulltext_links == ()


class TestParseWorkList:
    def test_envelope(self, listing):
        assert listing.status == "ok"
        assert listing.message_type == "work-list"
        assert len(listing.items) == 2

    def test_order_preserved(self, listing):
        assert [w.doi for w in listing.items] == [
            "10.1029/jd094id06p08425",
            "10.1016/j.jmaa.2016.03.023",
        ]

    def test_first_item_details(self, listing):
        wiley = listing.items[0]
        assert wiley.member == "http://id.crossref.org/member/311"
        assert wiley.prefix == "http://id.crossref.org/prefix/10.1002"
        assert wiley.doi_prefix == "10.1029"
        assert wiley.page == "8425-8433"
        assert wiley.created == datetime(2008, 2, 6, 13, 40, 44, tzinfo=timezone.utc)
        assert wiley.deposited == datetime(2016, 3, 17, 19, 59, 58, tzinfo=timezone.utc)
        assert wiley.license_links == (
            ("http://doi.wiley.com/10.1002/tdm_license_1", "tdm"),
            ("http://onlinelibrary.wiley.com/termsAndConditions", "vor"),
        )
        assert wiley.fulltext_links[0][1] == "application/pdf"

    def test_second_item_fresh_registration_shape(self, listing):
        elsevier = listing.items[1]
        assert elsevier.created == elsevier.deposited
        assert elsevier.member_id == "78"
        assert "α-theory" in elsevier.title[0]

    def test_wrong_message_type(self, data_dir):
        doc = json.loads((data_dir / "work_rosenthal.json").read_text())
        with pytest.raises(NotAWork):
            parse_work_list(doc)

    def test_bad_status(self):
        with pytest.raises(NotAWork):
            parse_work_list(
                {"message-type": "work-list", "status": "failed", "message": {}}
            )


class TestClassifyDeposit:
    def test_same_minute_deposit_is_new_registration(self, listing):
        verdict = classify_deposit(listing.items[1], {})
        assert verdict.category is DepositCategory.NEW_REGISTRATION

    def test_old_work_from_other_member_is_possible_transfer(self, listing):
        verdict = classify_deposit(listing.items[0], {"10.1029": "13"})
        assert verdict.category is DepositCategory.POSSIBLE_TRANSFER
        assert "13" in verdict.evidence
        assert "311" in verdict.evidence

    def test_uri_valued_map_entries_accepted(self, listing):
        verdict = classify_deposit(
            listing.items[0],
            {"http://id.crossref.org/prefix/10.1029": "http://id.crossref.org/member/13"},
        )
        assert verdict.category is DepositCategory.POSSIBLE_TRANSFER

    def test_old_work_unknown_prefix_is_update(self, listing):
        verdict = classify_deposit(listing.items[0], {})
        assert verdict.category is DepositCategory.METADATA_UPDATE

    def test_old_work_matching_owner_is_update(self, listing):
        verdict = classify_deposit(listing.items[0], {"10.1029": "311"})
        assert verdict.category is DepositCategory.METADATA_UPDATE

    def test_missing_timestamps_never_new(self):
        work = CrossRefWork(doi="10.5/x")
        verdict = classify_deposit(work, {})
        assert verdict.category is DepositCategory.METADATA_UPDATE

    @given(gap_seconds=st.integers(min_value=0, max_value=400_000))
    @settings(max_examples=100)
    def test_window_boundary(self, gap_seconds):
        base = datetime(2016, 3, 17, 12, 0, 0, tzinfo=timezone.utc)
        work = CrossRefWork(
            doi="10.5/x", created=base, deposited=base + timedelta(seconds=gap_seconds)
        )
        window = timedelta(hours=24)
        verdict = classify_deposit(work, {}, window=window)
        expected_new = gap_seconds <= window.total_seconds()
        assert (verdict.category is DepositCategory.NEW_REGISTRATION) == expected_new

    @given(
        gap_hours=st.integers(min_value=0, max_value=96),
        windows=st.lists(
            st.integers(min_value=0, max_value=96), min_size=2, max_size=6
        ),
    )
    @settings(max_examples=100)
    def test_monotone_in_window(self, gap_hours, windows):
        base = datetime(2016, 1, 1, tzinfo=timezone.utc)
        work = CrossRefWork(
            doi="10.5/x", created=base, deposited=base + timedelta(hours=gap_hours)
        )
        verdicts = [
            classify_deposit(work, {}, window=timedelta(hours=h)).category
            is DepositCategory.NEW_REGISTRATION
            for h in sorted(windows)
        ]
        # once the growing window covers the gap it must stay covered
        assert verdicts == sorted(verdicts)


class StubResponse:
    def __init__(self, status_code, body="", headers=None):
        self.status_code = status_code
        self.text = body
        self.headers = headers or {}


class StubSession:
    def __init__(self, responses):
        self.responses = list(responses)
        self.calls = []

    def get(self, url, timeout=None, headers=None):
        self.calls.append(url)
        return self.responses.pop(0)

    def close(self):
        pass


FAST_RETRY = RetryPolicy(max_retries=2, backoff=0.0)


def _work_body():
    return json.dumps(
        {"message-type": "work", "status": "ok", "message": {"DOI": "10.5/x"}}
    )


def _list_body(*deposited):
    items = [
        {"DOI": f"10.5/x{i}", "deposited": {"date-time": stamp}}
        for i, stamp in enumerate(deposited)
    ]
    return json.dumps(
        {"message-type": "work-list", "status": "ok", "message": {"items": items}}
    )


class TestClient:
    def test_fetch_work_uses_metadata_uri(self):
        session = StubSession([StubResponse(200, _work_body())])
        client = CrossRefClient(session=session, retry=FAST_RETRY)
        work = client.fetch_work("DOI:10.5/X")
        assert work.doi == "10.5/x"
        assert session.calls == ["http://api.crossref.org/works/10.5/x"]

    def test_retries_through_outage(self):
        session = StubSession(
            [StubResponse(503), StubResponse(200, _work_body())]
        )
        client = CrossRefClient(session=session, retry=FAST_RETRY)
        assert client.fetch_work("10.5/x").doi == "10.5/x"
        assert len(session.calls) == 2

    def test_persistent_outage_raises(self):
        session = StubSession([StubResponse(503)] * 3)
        client = CrossRefClient(session=session, retry=FAST_RETRY)
        with pytest.raises(ServiceError) as err:
            client.fetch_work("10.5/x")
        assert err.value.status == 503
        assert len(session.calls) == 3

    def test_not_found_is_immediate(self):
        session = StubSession([StubResponse(404)])
        client = CrossRefClient(session=session, retry=FAST_RETRY)
        with pytest.raises(NotFound):
            client.fetch_work("10.5/x")
        assert len(session.calls) == 1

    def test_rate_limit_retried_then_ok(self):
        session = StubSession(
            [
                StubResponse(429, headers={"Retry-After": "0"}),
                StubResponse(200, _work_body()),
            ]
        )
        client = CrossRefClient(session=session, retry=FAST_RETRY)
        assert client.fetch_work("10.5/x").doi == "10.5/x"

    def test_retry_after_header_parsed(self):
        policy = RetryPolicy(backoff=0.25)
        assert policy.delay(0, "3") == 3.0
        assert policy.delay(1, None) == 0.5
        assert policy.delay(0, "soon") == 0.25

    def test_list_recent_requires_rows(self):
        client = CrossRefClient(session=StubSession([]), retry=FAST_RETRY)
        with pytest.raises(ValueError):
            client.list_recent(rows=0)

    def test_list_recent_query(self):
        session = StubSession([StubResponse(200, _list_body())])
        client = CrossRefClient(session=session, retry=FAST_RETRY)
        client.list_recent(rows=5, offset=10)
        assert session.calls == [
            "http://api.crossref.org/works?sort=deposited&order=desc&rows=5&offset=10"
        ]

    def test_list_recent_warns_on_misordered_feed(self):
        body = _list_body("2016-03-17T19:58:50Z", "2016-03-17T19:59:58Z")
        session = StubSession([StubResponse(200, body)])
        client = CrossRefClient(session=session, retry=FAST_RETRY)
        with pytest.warns(OrderingWarning):
            client.list_recent(rows=2)

    def test_list_recent_quiet_when_ordered(self):
        body = _list_body("2016-03-17T19:59:58Z", "2016-03-17T19:58:50Z")
        session = StubSession([StubResponse(200, body)])
        client = CrossRefClient(session=session, retry=FAST_RETRY)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            listing = client.list_recent(rows=2)
        assert len(listing.items) == 2
