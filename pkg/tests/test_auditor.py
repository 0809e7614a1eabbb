"""Tests for the twelve-point compliance audit."""

import json

import pytest

from sgp.auditor import (
    AuditReport,
    Auditor,
    CheckResult,
    EmptyReport,
    RECOMMENDATIONS,
    Verdict,
    render_report,
)
from sgp.fixtures import ABLATION_RECOMMENDATION, degrade, landing_spec, plos_spec, serve
from sgp.navigator import PolitenessPolicy, SignpostClient

FAST = PolitenessPolicy(timeout=5, backoff=0.01)

ALL_IDS = [f"R{i}" for i in range(1, 13)]


def _audit(ep, entry_uri=None):
    auditor = Auditor(client=SignpostClient(FAST, strict=True), policy=ep.policy())
    return auditor.audit(
        entry_uri or ep.entry_uri,
        publisher_feed=ep.uri("/changelist.xml"),
        registrar_feed=ep.uri("/registrar/changelist.xml"),
    )


@pytest.fixture(scope="module")
def endpoint():
    with serve(plos_spec()) as ep:
        yield ep


@pytest.fixture(scope="module")
def report(endpoint):
    return _audit(endpoint)


def _result(check_id="R1", verdict=Verdict.PASS, **kw):
    evidence = kw.pop("evidence", (("http://x.example/feed", "fine"),))
    return CheckResult(check_id, verdict, evidence, **kw)


class TestCheckResult:
    def test_unknown_check_id_rejected(self):
        with pytest.raises(ValueError):
            CheckResult("R13", Verdict.PASS, (("u", "t"),))

    def test_pass_and_fail_need_evidence(self):
        with pytest.raises(ValueError):
            CheckResult("R1", Verdict.PASS)
        with pytest.raises(ValueError):
            CheckResult("R1", Verdict.FAIL)
        CheckResult("R1", Verdict.NOT_APPLICABLE)

    def test_recommendation_text_attached(self):
        assert "change feed" in _result("R1").recommendation
        assert set(RECOMMENDATIONS) == set(ALL_IDS)

    def test_json_round_trip(self):
        result = _result("R6", Verdict.FAIL, warnings=("item link without sem-type: u",))
        assert CheckResult.from_json_dict(result.to_json_dict()) == result


class TestAuditReport:
    def test_empty_report_rejected(self):
        with pytest.raises(EmptyReport):
            AuditReport(target="http://x.example", results=())

    def test_duplicate_ids_rejected(self):
        with pytest.raises(ValueError):
            AuditReport(
                target="http://x.example", results=(_result("R1"), _result("R1"))
            )

    def test_result_lookup(self):
        rpt = AuditReport(target="t", results=(_result("R1"), _result("R2")))
        assert rpt.result_for("R2").check_id == "R2"
        with pytest.raises(KeyError):
            rpt.result_for("R3")

    def test_score_counts_only_applicable(self):
        rpt = AuditReport(
            target="t",
            results=(
                _result("R1"),
                _result("R2", Verdict.FAIL),
                _result("R3", Verdict.NOT_APPLICABLE, evidence=()),
            ),
        )
        assert rpt.score == "1/2"
        assert not rpt.all_passed
        assert [r.check_id for r in rpt.failed] == ["R2"]

    def test_json_round_trip(self, report):
        assert AuditReport.from_json_dict(report.to_json_dict()) == report


class TestRendering:
    def test_text_lists_every_check_and_the_score(self, report):
        text = render_report(report)
        for check_id in ALL_IDS:
            assert check_id in text
        assert "score: 12/12 recommendations met" in text

    def test_text_shows_warnings_when_present(self):
        rpt = AuditReport(
            target="t",
            results=(_result("R6", warnings=("item link without sem-type: u",)),),
        )
        assert "warnings:" in render_report(rpt)
        assert "R6: item link without sem-type: u" in render_report(rpt)

    def test_json_format_parses(self, report):
        parsed = json.loads(render_report(report, fmt="json"))
        assert parsed["score"] == "12/12"
        assert len(parsed["results"]) == 12

    def test_unknown_format_rejected(self, report):
        with pytest.raises(ValueError):
            render_report(report, fmt="yaml")


class TestCompliantEndpoint:
    def test_twelve_checks_in_order(self, report):
        assert [r.check_id for r in report.results] == ALL_IDS

    def test_everything_passes(self, report):
        assert report.all_passed
        assert report.score == "12/12"
        assert all(r.verdict is Verdict.PASS for r in report.results)

    def test_no_warnings_on_the_clean_fixture(self, report):
        assert all(r.warnings == () for r in report.results)

    def test_evidence_names_real_uris(self, report, endpoint):
        uris = {uri for r in report.results for uri, _ in r.evidence}
        assert any(uri.startswith(endpoint.base_uri) for uri in uris)

    def test_default_publisher_feed_derived_from_entry_origin(self, endpoint):
        auditor = Auditor(
            client=SignpostClient(FAST, strict=True), policy=endpoint.policy()
        )
        rpt = auditor.audit_publisher(endpoint.entry_uri)
        assert [r.check_id for r in rpt.results] == ALL_IDS[3:]
        assert rpt.all_passed

    def test_registrar_only_audit(self, endpoint):
        auditor = Auditor(
            client=SignpostClient(FAST, strict=True), policy=endpoint.policy()
        )
        rpt = auditor.audit_registrar(endpoint.uri("/registrar/changelist.xml"))
        assert [r.check_id for r in rpt.results] == ["R1", "R2", "R3"]
        assert rpt.all_passed
        assert rpt.target == endpoint.uri("/registrar/changelist.xml")

    def test_without_registrar_feed_those_checks_are_skipped(self, endpoint):
        auditor = Auditor(
            client=SignpostClient(FAST, strict=True), policy=endpoint.policy()
        )
        rpt = auditor.audit(endpoint.entry_uri)
        for check_id in ("R1", "R2", "R3"):
            assert rpt.result_for(check_id).verdict is Verdict.NOT_APPLICABLE
        assert rpt.score == "9/9"

    def test_two_object_endpoint_audits_each_entry_clean(self):
        with serve(plos_spec(), landing_spec()) as ep:
            auditor = Auditor(
                client=SignpostClient(FAST, strict=True), policy=ep.policy()
            )
            for view in ep.views:
                rpt = auditor.audit(
                    view.entry_uri,
                    publisher_feed=ep.uri("/changelist.xml"),
                    registrar_feed=ep.uri("/registrar/changelist.xml"),
                )
                assert rpt.all_passed, (view.entry_uri, [r.check_id for r in rpt.failed])

    def test_audit_is_read_only(self, endpoint):
        endpoint.clear_log()
        _audit(endpoint)
        assert {e.method for e in endpoint.log()} <= {"HEAD", "GET"}


class TestAblations:
    @pytest.mark.parametrize(
        "feature,expected", sorted(ABLATION_RECOMMENDATION.items())
    )
    def test_each_ablation_fails_exactly_its_recommendation(self, feature, expected):
        with serve(degrade(plos_spec(), feature)) as ep:
            rpt = _audit(ep)
        assert [r.check_id for r in rpt.failed] == [expected]
        assert all(
            r.verdict is Verdict.PASS
            for r in rpt.results
            if r.check_id != expected
        )

    def test_failed_checks_carry_offending_uris(self):
        with serve(degrade(plos_spec(), "no-collection-backlink")) as ep:
            rpt = _audit(ep)
            failed = rpt.result_for("R8")
            assert failed.verdict is Verdict.FAIL
            assert len(failed.evidence) == 3
            assert all(uri.startswith(ep.base_uri) for uri, _ in failed.evidence)

    def test_no_doi_anywhere_shrinks_the_denominator(self):
        with serve(degrade(plos_spec(), "no-doi-anywhere")) as ep:
            rpt = _audit(ep)
        assert rpt.result_for("R10").verdict is Verdict.NOT_APPLICABLE
        assert rpt.result_for("R12").verdict is Verdict.NOT_APPLICABLE
        assert rpt.failed == ()
        assert rpt.score == "10/10"
        assert "(2 not applicable)" in render_report(rpt)

    def test_missing_describes_backlink_fails_only_r11(self):
        with serve(degrade(plos_spec(), "no-describes-backlink")) as ep:
            rpt = _audit(ep)
        assert [r.check_id for r in rpt.failed] == ["R11"]
        assert "point back" in rpt.result_for("R11").evidence[0][1]

    def test_unreadable_entry_header_fails_not_skips(self):
        # the walk is strict end to end, so resolution through the broken
        # landing header fails R3 as well as the entry-based checks
        with serve(degrade(plos_spec(), "malformed-entry-header")) as ep:
            rpt = _audit(ep)
        assert [r.check_id for r in rpt.failed] == ["R3", "R7", "R11", "R12"]
        assert "unreadable" in rpt.result_for("R7").evidence[0][1]

    def test_unreachable_feed_fails_r1_with_the_reason(self, endpoint):
        auditor = Auditor(
            client=SignpostClient(FAST, strict=True), policy=endpoint.policy()
        )
        rpt = auditor.audit(
            endpoint.entry_uri,
            publisher_feed=endpoint.uri("/changelist.xml"),
            registrar_feed=endpoint.uri("/no-such-feed.xml"),
        )
        r1 = rpt.result_for("R1")
        assert r1.verdict is Verdict.FAIL
        assert "feed unavailable" in r1.evidence[0][1]
        # the registrar events are gone but the entry still names the DOI
        assert rpt.result_for("R2").verdict is Verdict.PASS
        assert rpt.result_for("R3").verdict is Verdict.PASS
