"""Client for hosted chat-completion classifiers, with an offline mock.

A record is serialized full-length (no stride sampling), wrapped in one of
the two shipped prompt templates, and sent to a transport. The reply must
end with a standalone APO or NPO token; malformed replies are retried with
exponential backoff. This predictor yields hard labels only, so AU-ROC is
reported absent downstream.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import time
from dataclasses import dataclass
from importlib import resources

from .errors import (
    ConfigurationError,
    ParameterError,
    RemoteFailureError,
    RemoteTimeoutError,
    VerdictParseError,
)
from .metrics import MetricsReport
from .models.base import labels_from_records
from .text import serialize_text

TEMPLATE_STYLES = ("detailed", "summarised")


@dataclass(frozen=True)
class PromptTemplate:
    style: str
    version: int
    system_text: str
    user_preamble: str

    def validate(self):
        if self.style not in TEMPLATE_STYLES:
            raise ParameterError(f"unknown template style {self.style!r}")
        combined = self.system_text + self.user_preamble
        if "APO" not in combined or "NPO" not in combined or "final verdict" not in combined.lower():
            raise ParameterError(f"{self.style} template must demand a final APO/NPO verdict")
        has_walkthrough = "Assessment steps:" in self.user_preamble
        if self.style == "detailed" and not has_walkthrough:
            raise ParameterError("detailed template must contain the assessment walkthrough")
        if self.style == "summarised" and (has_walkthrough or "Criteria:" not in self.user_preamble):
            raise ParameterError("summarised template must contain only the criteria list")
        return self


def load_template(style: str) -> PromptTemplate:
    """Load a shipped, versioned template by style name."""
    if style not in TEMPLATE_STYLES:
        raise ParameterError(f"unknown template style {style!r}; expected one of {TEMPLATE_STYLES}")
    blob = resources.files("ctgbench.prompts").joinpath(f"{style}.v1.json").read_text("utf-8")
    return PromptTemplate(**json.loads(blob)).validate()


def build_prompt(record, template: PromptTemplate):
    """Messages for one record: full-length paired serialization, no stride."""
    if record.windows is not None:
        raise ParameterError(f"record {record.id} is stride-sampled; remote prompts use the full-length record")
    body = template.user_preamble + serialize_text(record, style="paired")
    return [
        {"role": "system", "content": template.system_text},
        {"role": "user", "content": body},
    ]


_VERDICT_RE = re.compile(r"\b(APO|NPO)\b", re.IGNORECASE)


def parse_verdict(text: str) -> str:
    """Last standalone APO/NPO token wins, case-insensitively."""
    hits = _VERDICT_RE.findall(text or "")
    if not hits:
        raise VerdictParseError(f"no standalone APO/NPO token in reply: {text[:80]!r}")
    return hits[-1].upper()


@dataclass(frozen=True)
class RetryPolicy:
    timeout_s: float = 60.0
    max_retries: int = 3  # total attempts, not extra tries
    backoff: float = 1.0

    def validate(self):
        if self.max_retries < 1:
            raise ParameterError(f"max_retries must be >= 1, got {self.max_retries}")
        if self.backoff < 0 or self.timeout_s <= 0:
            raise ParameterError("backoff must be >= 0 and timeout_s > 0")
        return self


@dataclass
class RemoteVerdict:
    label: str
    raw_response: str
    attempts: int
    latency_ms: int
    record_id: str = ""


class TransportTimeout(Exception):
    """Raised by transports when a request exceeds the policy timeout."""


class HttpTransport:
    """Chat-completions over HTTPS; credentials come from the environment."""

    def __init__(self, endpoint, model, api_key_env="CTGBENCH_API_KEY"):
        self.endpoint = endpoint
        self.model = model
        self.api_key_env = api_key_env

    def send(self, messages, timeout_s):
        import requests

        key = os.environ.get(self.api_key_env)
        if not key:
            raise ConfigurationError(f"environment variable {self.api_key_env} is not set")
        try:
            resp = requests.post(
                self.endpoint,
                json={"model": self.model, "messages": messages},
                headers={"Authorization": f"Bearer {key}"},
                timeout=timeout_s,
            )
        except requests.Timeout as e:
            raise TransportTimeout(str(e)) from e
        resp.raise_for_status()
        return resp.json()["choices"][0]["message"]["content"]


class MockTransport:
    """Scripted offline transport.

    Two script modes: "ordinal" replies are consumed in call order;
    "by_hash" maps sha256(last user message) to a reply, which stays
    deterministic under any evaluation order.
    """

    def __init__(self, replies=None, by_hash=None):
        self.replies = list(replies) if replies is not None else None
        self.by_hash = dict(by_hash) if by_hash is not None else None
        if (self.replies is None) == (self.by_hash is None):
            raise ParameterError("provide exactly one of replies / by_hash")
        self.calls = 0

    @classmethod
    def from_script(cls, path):
        with open(path) as fh:
            script = json.load(fh)
        mode = script.get("mode")
        if mode == "ordinal":
            return cls(replies=script["replies"])
        if mode == "by_hash":
            return cls(by_hash=script["replies"])
        raise ParameterError(f"script mode must be 'ordinal' or 'by_hash', got {mode!r}")

    @staticmethod
    def request_hash(messages) -> str:
        user = [m["content"] for m in messages if m["role"] == "user"]
        return hashlib.sha256(user[-1].encode("utf-8")).hexdigest()

    def send(self, messages, timeout_s):
        self.calls += 1
        if self.replies is not None:
            if not self.replies:
                raise RemoteFailureError(self.calls, None, message="mock script exhausted")
            return self.replies.pop(0)
        key = self.request_hash(messages)
        if key not in self.by_hash:
            raise RemoteFailureError(self.calls, None, message=f"mock script has no reply for request hash {key[:12]}")
        return self.by_hash[key]


def classify_remote(transport, record, template: PromptTemplate, policy: RetryPolicy | None = None) -> RemoteVerdict:
    """Send one record; retry malformed replies; never mutate the record."""
    policy = (policy or RetryPolicy()).validate()
    messages = build_prompt(record, template)
    t0 = time.perf_counter()
    last_response = None
    last_timeout = None
    for attempt in range(1, policy.max_retries + 1):
        if attempt > 1 and policy.backoff > 0:
            time.sleep(policy.backoff * 2 ** (attempt - 2))
        try:
            reply = transport.send(messages, policy.timeout_s)
        except TransportTimeout as e:
            last_timeout = e
            continue
        last_response = reply
        last_timeout = None
        try:
            label = parse_verdict(reply)
        except VerdictParseError:
            continue
        latency_ms = int(round(1000 * (time.perf_counter() - t0)))
        return RemoteVerdict(label=label, raw_response=reply, attempts=attempt,
                             latency_ms=latency_ms, record_id=record.id)
    if last_timeout is not None and last_response is None:
        raise RemoteTimeoutError(f"record {record.id}: all {policy.max_retries} attempts timed out")
    raise RemoteFailureError(
        policy.max_retries,
        last_response,
        message=f"record {record.id}: no parseable verdict in {policy.max_retries} attempts",
    )


def classify_cohort(transport, records, template: PromptTemplate, policy: RetryPolicy | None = None):
    """Verdicts in record order. Ordinal mock scripts require this serial path."""
    return [classify_remote(transport, r, template, policy) for r in records]


def evaluate_remote(records, verdicts) -> MetricsReport:
    """Hard-label metrics for a verdict set; AU-ROC is absent by design."""
    y = labels_from_records(records)
    scores = [1.0 if v.label == "APO" else 0.0 for v in verdicts]
    return MetricsReport.from_scores(y, scores, hard_labels=True)
