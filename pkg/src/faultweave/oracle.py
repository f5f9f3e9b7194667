"""Failure detection and unique-failure identity.

Checks run in a fixed order — status code, keywords, assertions, latency
bound — and the first match decides the symptom category, so every outcome
maps to exactly one category and unique-failure counting stays stable.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Sequence

from .sim_target import TargetOutcome
from .trace_model import Assertion

SIGNATURE_LIMIT = 256

CATEGORIES = ("http_error", "keyword_match", "assertion_violation", "latency_exceeded")


@dataclass(frozen=True)
class OracleConfig:
    latency_bound_ms: float = 2000.0
    keywords: tuple[str, ...] = ("error", "exception")
    # extension point: an externally supplied metric predicate; none ships
    metric_predicate: Callable[[TargetOutcome], str | None] | None = None

    def __post_init__(self) -> None:
        if self.latency_bound_ms <= 0:
            raise ValueError("latency_bound_ms must be > 0")
        if not self.keywords:
            raise ValueError("keywords must be non-empty")
        object.__setattr__(self, "keywords", tuple(k.lower() for k in self.keywords))


@dataclass(frozen=True)
class FailureSymptom:
    """What the oracle saw: a category plus the matching detail.

    `message` carries the user-response body so identity can tell apart
    failures that share a status code but have different causes.
    """

    category: str
    detail: str
    message: str = ""

    def __post_init__(self) -> None:
        if self.category not in CATEGORIES:
            raise ValueError(f"unknown symptom category {self.category!r}")
        if not self.detail:
            raise ValueError("symptom detail must be non-empty")


@dataclass(frozen=True)
class FailureKey:
    """Equality of these keys defines "unique failure"."""

    class_id: str
    category: str
    signature: str


def normalize_signature(text: str) -> str:
    """Digits become '#', whitespace collapses; shared with the reduction rules."""
    collapsed = re.sub(r"\s+", " ", text.strip())
    return re.sub(r"\d", "#", collapsed)


def _format_ms(value: float) -> str:
    return str(int(value)) if float(value).is_integer() else repr(value)


def detect(
    outcome: TargetOutcome, assertions: Sequence[Assertion], cfg: OracleConfig
) -> FailureSymptom | None:
    """Decide whether an outcome is a failure; None means tolerated.

    Order is fixed: (1) non-200 status, (2) keyword in the body
    (case-insensitive), (3) violated assertion, (4) latency over the bound.
    Only the user response is examined, never internal invocation bodies.
    """
    response = outcome.response
    if response.status != 200:
        return FailureSymptom("http_error", str(response.status), message=response.body)

    lowered = response.body.lower()
    for keyword in cfg.keywords:
        if keyword in lowered:
            return FailureSymptom("keyword_match", keyword, message=response.body)

    for assertion in assertions:
        if not _holds(assertion, response.status, response.body):
            return FailureSymptom(
                "assertion_violation", assertion.describe(), message=response.body
            )

    if response.latency_ms > cfg.latency_bound_ms:
        return FailureSymptom(
            "latency_exceeded", _format_ms(response.latency_ms), message=response.body
        )

    if cfg.metric_predicate is not None:
        verdict = cfg.metric_predicate(outcome)
        if verdict:  # reuse the assertion category; app metrics are an extension point
            return FailureSymptom("assertion_violation", verdict, message=response.body)
    return None


def _holds(assertion: Assertion, status: int, body: str) -> bool:
    if assertion.kind == "status_equals":
        return status == assertion.argument
    if assertion.kind == "body_contains":
        return str(assertion.argument) in body
    return re.search(str(assertion.argument), body) is not None


def identity(class_id: str, symptom: FailureSymptom) -> FailureKey:
    """Assign the unique-failure key for a symptom within a request class.

    The signature is the category plus the normalized detail and message;
    status codes stay verbatim while free text gets digit-normalized, so
    "error id 123" and "error id 456" collapse to one failure.
    """
    detail = symptom.detail if symptom.category == "http_error" else normalize_signature(symptom.detail)
    message = normalize_signature(symptom.message)[:SIGNATURE_LIMIT]
    return FailureKey(
        class_id=class_id,
        category=symptom.category,
        signature=f"{symptom.category}:{detail}|{message}",
    )
