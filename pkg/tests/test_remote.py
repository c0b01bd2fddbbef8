"""Remote classifier tests: templates, verdict parsing, retries, mock transports."""

import json

import numpy as np
import pytest

from ctgbench.errors import (
    ConfigurationError,
    ParameterError,
    RemoteFailureError,
    RemoteTimeoutError,
    VerdictParseError,
)
from ctgbench.generate import GeneratorParams, generate_cohort
from ctgbench.remote import (
    HttpTransport,
    MockTransport,
    PromptTemplate,
    RetryPolicy,
    TransportTimeout,
    build_prompt,
    classify_cohort,
    classify_remote,
    evaluate_remote,
    load_template,
    parse_verdict,
)
from ctgbench.transforms import Preprocessor, stride_sample

from conftest import make_record


def small_cohort(n=6, seed=2):
    raw = generate_cohort(GeneratorParams(regime="easy-separable"), n, seed=seed)
    return Preprocessor(target_hz=1, pad_len=600).transform(raw)


class TestTemplates:
    @pytest.mark.parametrize("style", ["detailed", "summarised"])
    def test_shipped_templates_load_and_validate(self, style):
        tpl = load_template(style)
        assert tpl.style == style
        assert tpl.version == 1
        assert "APO" in tpl.system_text + tpl.user_preamble

    def test_unknown_style_rejected(self):
        with pytest.raises(ParameterError):
            load_template("terse")

    def test_template_must_demand_verdict(self):
        with pytest.raises(ParameterError, match="verdict"):
            PromptTemplate(style="summarised", version=1, system_text="hi",
                           user_preamble="Criteria: none").validate()

    def test_detailed_requires_walkthrough(self):
        with pytest.raises(ParameterError, match="walkthrough"):
            PromptTemplate(
                style="detailed", version=1,
                system_text="Reply APO or NPO as your final verdict.",
                user_preamble="Criteria: look at it.",
            ).validate()

    def test_summarised_rejects_walkthrough(self):
        with pytest.raises(ParameterError, match="criteria"):
            PromptTemplate(
                style="summarised", version=1,
                system_text="Reply APO or NPO as your final verdict.",
                user_preamble="Assessment steps: 1. stare",
            ).validate()


class TestBuildPrompt:
    def test_messages_shape_and_content(self):
        tpl = load_template("summarised")
        rec = make_record(n=120, label="NPO", rec_id="p-1")
        messages = build_prompt(rec, tpl)
        assert [m["role"] for m in messages] == ["system", "user"]
        assert messages[0]["content"] == tpl.system_text
        assert messages[1]["content"].startswith(tpl.user_preamble)
        assert "t=0:" in messages[1]["content"]
        assert "TOCO" in messages[1]["content"]

    def test_rejects_stride_sampled_records(self):
        tpl = load_template("summarised")
        rec = stride_sample(make_record(n=240, label="NPO"), 60, 60)
        with pytest.raises(ParameterError, match="full-length"):
            build_prompt(rec, tpl)


class TestParseVerdict:
    def test_last_standalone_token_wins(self):
        assert parse_verdict("Could be APO. Final verdict: NPO") == "NPO"
        assert parse_verdict("NPO at first glance, but ultimately APO.") == "APO"

    def test_case_insensitive(self):
        assert parse_verdict("final verdict: npo") == "NPO"
        assert parse_verdict("Apo") == "APO"

    def test_embedded_tokens_do_not_count(self):
        with pytest.raises(VerdictParseError):
            parse_verdict("APOLOGY accepted, NAPOLEON declined")

    def test_no_token_raises(self):
        with pytest.raises(VerdictParseError):
            parse_verdict("the trace looks fine to me")
        with pytest.raises(VerdictParseError):
            parse_verdict("")


class TestRetryPolicy:
    @pytest.mark.parametrize(
        "kwargs", [{"max_retries": 0}, {"backoff": -1.0}, {"timeout_s": 0.0}]
    )
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(ParameterError):
            RetryPolicy(**kwargs).validate()


class TestMockTransport:
    def test_requires_exactly_one_script_mode(self):
        with pytest.raises(ParameterError):
            MockTransport()
        with pytest.raises(ParameterError):
            MockTransport(replies=["APO"], by_hash={"k": "NPO"})

    def test_ordinal_consumes_in_order_and_exhausts(self):
        t = MockTransport(replies=["APO", "NPO"])
        assert t.send([], 1.0) == "APO"
        assert t.send([], 1.0) == "NPO"
        with pytest.raises(RemoteFailureError, match="exhausted"):
            t.send([], 1.0)

    def test_by_hash_keys_on_last_user_message(self):
        messages = [
            {"role": "system", "content": "s"},
            {"role": "user", "content": "hello"},
        ]
        key = MockTransport.request_hash(messages)
        t = MockTransport(by_hash={key: "APO"})
        assert t.send(messages, 1.0) == "APO"
        other = [{"role": "system", "content": "s"}, {"role": "user", "content": "other"}]
        with pytest.raises(RemoteFailureError, match="no reply"):
            t.send(other, 1.0)

    def test_from_script_modes(self, tmp_path):
        ordinal = tmp_path / "ordinal.json"
        ordinal.write_text(json.dumps({"mode": "ordinal", "replies": ["APO"]}))
        assert MockTransport.from_script(ordinal).send([], 1.0) == "APO"

        hashed = tmp_path / "hashed.json"
        hashed.write_text(json.dumps({"mode": "by_hash", "replies": {"abc": "NPO"}}))
        assert MockTransport.from_script(hashed).by_hash == {"abc": "NPO"}

        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"mode": "streaming", "replies": []}))
        with pytest.raises(ParameterError):
            MockTransport.from_script(bad)


class FlakyTransport:
    """Scripted sequence of replies and TransportTimeout markers."""

    def __init__(self, events):
        self.events = list(events)
        self.calls = 0

    def send(self, messages, timeout_s):
        self.calls += 1
        event = self.events.pop(0)
        if event == "TIMEOUT":
            raise TransportTimeout("simulated")
        return event


NO_BACKOFF = RetryPolicy(timeout_s=5.0, max_retries=3, backoff=0.0)


class TestClassifyRemote:
    def record(self):
        return make_record(n=120, label="APO", rec_id="r-0")

    def test_clean_reply_single_attempt(self):
        tpl = load_template("summarised")
        transport = MockTransport(replies=["Final verdict: APO"])
        v = classify_remote(transport, self.record(), tpl, NO_BACKOFF)
        assert v.label == "APO"
        assert v.attempts == 1
        assert v.record_id == "r-0"
        assert v.raw_response == "Final verdict: APO"
        assert v.latency_ms >= 0

    def test_malformed_reply_retries_then_succeeds(self):
        tpl = load_template("summarised")
        transport = FlakyTransport(["no verdict here", "NPO"])
        v = classify_remote(transport, self.record(), tpl, NO_BACKOFF)
        assert v.label == "NPO"
        assert v.attempts == 2
        assert transport.calls == 2

    def test_all_malformed_exhausts_with_last_response(self):
        tpl = load_template("summarised")
        transport = FlakyTransport(["a", "b", "c"])
        with pytest.raises(RemoteFailureError) as exc_info:
            classify_remote(transport, self.record(), tpl, NO_BACKOFF)
        assert exc_info.value.attempts == 3
        assert exc_info.value.last_response == "c"
        assert transport.calls == 3

    def test_all_timeouts_raise_timeout_error(self):
        tpl = load_template("summarised")
        transport = FlakyTransport(["TIMEOUT", "TIMEOUT", "TIMEOUT"])
        with pytest.raises(RemoteTimeoutError):
            classify_remote(transport, self.record(), tpl, NO_BACKOFF)

    def test_timeout_then_success(self):
        tpl = load_template("summarised")
        transport = FlakyTransport(["TIMEOUT", "APO"])
        v = classify_remote(transport, self.record(), tpl, NO_BACKOFF)
        assert v.label == "APO"
        assert v.attempts == 2


class TestCohortEvaluation:
    def test_mock_cohort_is_deterministic(self):
        cohort = small_cohort(n=20, seed=2)
        tpl = load_template("detailed")
        replies = [f"verdict: {r.label}" for r in cohort]
        runs = []
        for _ in range(2):
            verdicts = classify_cohort(MockTransport(replies=list(replies)), cohort, tpl, NO_BACKOFF)
            runs.append([v.label for v in verdicts])
        assert runs[0] == runs[1]
        assert runs[0] == [r.label for r in cohort]

    def test_by_hash_script_is_order_independent(self):
        cohort = small_cohort(n=6, seed=2)
        tpl = load_template("summarised")
        by_hash = {
            MockTransport.request_hash(build_prompt(r, tpl)): f"looks {r.label}" for r in cohort
        }
        forward = classify_cohort(MockTransport(by_hash=by_hash), cohort, tpl, NO_BACKOFF)
        backward = classify_cohort(MockTransport(by_hash=by_hash), cohort[::-1], tpl, NO_BACKOFF)
        assert {v.record_id: v.label for v in forward} == {v.record_id: v.label for v in backward}

    def test_evaluate_remote_hand_confusion(self):
        records = [
            make_record(label="APO", rec_id="a"),
            make_record(label="APO", rec_id="b"),
            make_record(label="NPO", rec_id="c"),
            make_record(label="NPO", rec_id="d"),
        ]
        verdicts = classify_cohort(
            MockTransport(replies=["APO", "NPO", "NPO", "APO"]),
            records,
            load_template("summarised"),
            NO_BACKOFF,
        )
        report = evaluate_remote(records, verdicts)
        assert report.auroc is None  # hard labels cannot be ranked
        assert report.accuracy == pytest.approx(0.5)
        assert report.sensitivity == pytest.approx(0.5)
        assert report.specificity == pytest.approx(0.5)

    def test_perfect_verdicts_score_perfectly(self):
        cohort = small_cohort(n=8, seed=3)
        replies = [r.label for r in cohort]
        verdicts = classify_cohort(
            MockTransport(replies=replies), cohort, load_template("summarised"), NO_BACKOFF
        )
        report = evaluate_remote(cohort, verdicts)
        assert report.accuracy == 1.0 and report.sensitivity == 1.0 and report.specificity == 1.0


class TestHttpTransport:
    def test_missing_api_key_env_fails_before_network(self, monkeypatch):
        monkeypatch.delenv("CTGBENCH_API_KEY", raising=False)
        transport = HttpTransport("https://example.invalid/v1/chat", "some-model")
        with pytest.raises(ConfigurationError, match="CTGBENCH_API_KEY"):
            transport.send([{"role": "user", "content": "x"}], timeout_s=1.0)

    def test_request_carries_bearer_token_and_payload(self, monkeypatch):
        captured = {}

        class FakeResponse:
            def raise_for_status(self):
                pass

            def json(self):
                return {"choices": [{"message": {"content": "APO"}}]}

        def fake_post(url, json=None, headers=None, timeout=None):
            captured.update(url=url, payload=json, headers=headers, timeout=timeout)
            return FakeResponse()

        monkeypatch.setenv("CTGBENCH_API_KEY", "sk-test-123")
        monkeypatch.setattr("requests.post", fake_post)
        transport = HttpTransport("https://example.invalid/v1/chat", "some-model")
        messages = [{"role": "user", "content": "x"}]
        reply = transport.send(messages, timeout_s=9.0)
        assert reply == "APO"
        assert captured["url"] == "https://example.invalid/v1/chat"
        assert captured["payload"] == {"model": "some-model", "messages": messages}
        assert captured["headers"]["Authorization"] == "Bearer sk-test-123"
        assert captured["timeout"] == 9.0

    def test_custom_env_var_name(self, monkeypatch):
        monkeypatch.delenv("OTHER_KEY", raising=False)
        transport = HttpTransport("https://example.invalid", "m", api_key_env="OTHER_KEY")
        with pytest.raises(ConfigurationError, match="OTHER_KEY"):
            transport.send([], timeout_s=1.0)
