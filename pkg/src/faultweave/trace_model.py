"""Requests, traces and call graphs.

An :class:`ExecutionTrace` is the observed tree of service invocations for
one user request. Traces come from the bundled simulator, from native JSON
documents, or from Zipkin v2 span arrays. Fault-free traces are grouped
into :class:`RequestClass` buckets by their invocation footprint — the set
of (service, endpoint) pairs the request touched.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Iterable

from .errors import TraceParseError, TraceStructureError

if TYPE_CHECKING:  # pragma: no cover - type-only imports, avoid cycles
    from .fault_model import FailureScenario
    from .lineage import LineageFormula
    from .oracle import FailureKey

BODY_EXCERPT_LIMIT = 4096


@dataclass(frozen=True, order=True)
class ServiceEndpoint:
    """A (service, endpoint) pair — the atom faults are injected at."""

    service: str
    endpoint: str

    def __post_init__(self) -> None:
        if not self.service or not self.endpoint:
            raise ValueError("service and endpoint must be non-empty")
        if "/" in self.service:
            raise ValueError(f"service name may not contain '/': {self.service!r}")

    def __str__(self) -> str:
        return f"{self.service}/{self.endpoint}"

    @classmethod
    def parse(cls, text: str) -> "ServiceEndpoint":
        """Parse a "service/endpoint" string (endpoint may itself contain '/')."""
        service, sep, endpoint = text.partition("/")
        if not sep or not service or not endpoint:
            raise ValueError(f"expected 'service/endpoint', got {text!r}")
        return cls(service, endpoint)


@dataclass(frozen=True)
class Invocation:
    """One observed service call inside a trace."""

    id: str
    parent: str | None
    callee: ServiceEndpoint
    status: int
    latency_ms: float
    body_excerpt: str = ""
    started_at: float = 0.0

    def __post_init__(self) -> None:
        if self.latency_ms < 0:
            raise ValueError(f"invocation {self.id}: latency must be >= 0")
        if len(self.body_excerpt) > BODY_EXCERPT_LIMIT:
            object.__setattr__(self, "body_excerpt", self.body_excerpt[:BODY_EXCERPT_LIMIT])


@dataclass(frozen=True)
class ResponseRecord:
    """The user-facing response of one request."""

    status: int
    body: str
    latency_ms: float

    def __post_init__(self) -> None:
        if self.latency_ms < 0:
            raise ValueError("response latency must be >= 0")


@dataclass(frozen=True)
class ExecutionTrace:
    """A rooted tree of invocations plus the correlated user response."""

    trace_id: str
    invocations: tuple[Invocation, ...]
    user_response: ResponseRecord

    def __post_init__(self) -> None:
        ids = [inv.id for inv in self.invocations]
        if len(set(ids)) != len(ids):
            dup = sorted({i for i in ids if ids.count(i) > 1})
            raise TraceStructureError(f"trace {self.trace_id}: duplicate invocation ids {dup}")
        by_id = {inv.id: inv for inv in self.invocations}
        roots = [inv for inv in self.invocations if inv.parent is None]
        if len(roots) != 1:
            raise TraceStructureError(
                f"trace {self.trace_id}: expected exactly one root invocation, found {len(roots)}"
            )
        for inv in self.invocations:
            if inv.parent is not None and inv.parent not in by_id:
                raise TraceStructureError(
                    f"trace {self.trace_id}: invocation {inv.id} references missing parent {inv.parent}"
                )
        # one root + every parent present still admits cycles among non-root
        # nodes; require everything reachable from the root
        children: dict[str, list[str]] = {}
        for inv in self.invocations:
            if inv.parent is not None:
                children.setdefault(inv.parent, []).append(inv.id)
        seen = set()
        stack = [roots[0].id]
        while stack:
            node = stack.pop()
            if node in seen:
                continue
            seen.add(node)
            stack.extend(children.get(node, ()))
        if len(seen) != len(self.invocations):
            orphans = sorted(set(by_id) - seen)
            raise TraceStructureError(
                f"trace {self.trace_id}: invocations not reachable from root: {orphans}"
            )

    @property
    def root(self) -> Invocation:
        return next(inv for inv in self.invocations if inv.parent is None)

    def invocation(self, inv_id: str) -> Invocation:
        for inv in self.invocations:
            if inv.id == inv_id:
                return inv
        raise KeyError(inv_id)


@dataclass(frozen=True)
class Assertion:
    """A check against the user response message."""

    kind: str  # status_equals | body_contains | body_matches
    argument: str | int

    KINDS = ("status_equals", "body_contains", "body_matches")

    def __post_init__(self) -> None:
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown assertion kind {self.kind!r}")
        if self.kind == "status_equals" and not isinstance(self.argument, int):
            raise ValueError("status_equals takes an integer status code")
        if self.kind != "status_equals" and not isinstance(self.argument, str):
            raise ValueError(f"{self.kind} takes a string argument")

    def describe(self) -> str:
        return f"{self.kind}:{self.argument}"


@dataclass(frozen=True)
class TestStep:
    """One user request: an entry endpoint, parameters, optional assertion."""

    entry: ServiceEndpoint
    params: tuple[tuple[str, str], ...] = ()
    assertion: Assertion | None = None


@dataclass(frozen=True)
class TestCase:
    """An ordered sequence of user requests."""

    id: str
    steps: tuple[TestStep, ...]

    def __post_init__(self) -> None:
        if not self.steps:
            raise ValueError(f"test case {self.id}: steps must be non-empty")


Member = tuple[str, int]  # (test case id, step index)
ScenarioKey = tuple[tuple[str, ...], str]  # (sorted point names, fault name)


@dataclass
class RequestClass:
    """A group of requests sharing one invocation footprint.

    Holds the campaign state for the class: the lineage formula, the pending
    failure-scenario set, execution history, exposed unique failures, and
    the record of pruned/blocked scenarios that must never re-enter.
    """

    id: str
    footprint: frozenset[ServiceEndpoint]
    members: list[Member] = field(default_factory=list)
    formula: "LineageFormula | None" = None
    fs: "dict[ScenarioKey, FailureScenario]" = field(default_factory=dict)
    history: "list[FailureScenario]" = field(default_factory=list)
    errors: "set[FailureKey]" = field(default_factory=set)
    # scenario keys removed by the reduction rules; they never re-enter fs
    pruned: set[ScenarioKey] = field(default_factory=set)
    # (targets, fault) pairs whose strict supersets are blocked on arrival
    superset_blocks: set[tuple[frozenset[ServiceEndpoint], str]] = field(default_factory=set)

    @property
    def history_keys(self) -> set[ScenarioKey]:
        return {s.key for s in self.history}


class ClassRegistry:
    """Mutable registry of request classes keyed by footprint.

    Mutation must be externally serialized; the explorer is the single
    writer during a campaign.
    """

    def __init__(self) -> None:
        self.classes: dict[str, RequestClass] = {}

    def class_for_footprint(self, fp: frozenset[ServiceEndpoint]) -> RequestClass | None:
        for cls in self.classes.values():
            if cls.footprint == fp:
                return cls
        return None

    def sorted_classes(self) -> list[RequestClass]:
        return [self.classes[cid] for cid in sorted(self.classes)]


def class_id_for(fp: frozenset[ServiceEndpoint]) -> str:
    """Stable class id derived from the footprint, independent of order."""
    digest = hashlib.sha256("|".join(sorted(str(p) for p in fp)).encode()).hexdigest()
    return f"rc-{digest[:8]}"


def footprint(trace: ExecutionTrace) -> frozenset[ServiceEndpoint]:
    """The set (not multiset) of callees over all invocations."""
    return frozenset(inv.callee for inv in trace.invocations)


def classify(trace: ExecutionTrace, registry: ClassRegistry, member: Member | None = None) -> str:
    """Assign a fault-free trace to its request class, creating one if needed.

    Idempotent: re-classifying an identical trace returns the same class id
    and records no duplicate member.
    """
    fp = footprint(trace)
    cls = registry.class_for_footprint(fp)
    if cls is None:
        cls = RequestClass(id=class_id_for(fp), footprint=fp)
        registry.classes[cls.id] = cls
    if member is not None and member not in cls.members:
        cls.members.append(member)
    return cls.id


# ---------------------------------------------------------------------------
# Native trace format


def _expect(value: Any, kind: type | tuple[type, ...], path: str) -> Any:
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if not isinstance(value, kind) or isinstance(value, bool) and kind is not bool:
        name = kind.__name__ if isinstance(kind, type) else "/".join(k.__name__ for k in kind)
        raise TraceParseError(f"{path}: expected {name}, got {type(value).__name__}")
    return value


def _get(obj: dict, key: str, kind: type | tuple[type, ...], path: str, default: Any = ...) -> Any:
    if key not in obj:
        if default is not ...:
            return default
        raise TraceParseError(f"{path}.{key}: missing required field")
    return _expect(obj[key], kind, f"{path}.{key}")


def build_native(document: str) -> ExecutionTrace:
    """Build an ExecutionTrace from a native-format JSON document."""
    try:
        raw = json.loads(document)
    except json.JSONDecodeError as exc:
        raise TraceParseError(f"invalid JSON: {exc}") from exc
    return trace_from_dict(raw)


def trace_from_dict(raw: Any) -> ExecutionTrace:
    root_path = "$"
    obj = _expect(raw, dict, root_path)
    trace_id = _get(obj, "trace_id", str, root_path)
    resp = _get(obj, "response", dict, root_path)
    response = ResponseRecord(
        status=_get(resp, "status", int, "$.response"),
        body=_get(resp, "body", str, "$.response", default=""),
        latency_ms=_get(resp, "latency_ms", float, "$.response"),
    )
    raw_invs = _get(obj, "invocations", list, root_path)
    invocations = []
    for i, item in enumerate(raw_invs):
        path = f"$.invocations[{i}]"
        inv = _expect(item, dict, path)
        parent = inv.get("parent")
        if parent is not None:
            parent = _expect(parent, str, f"{path}.parent")
        invocations.append(
            Invocation(
                id=_get(inv, "id", str, path),
                parent=parent,
                callee=ServiceEndpoint(
                    _get(inv, "service", str, path), _get(inv, "endpoint", str, path)
                ),
                status=_get(inv, "status", int, path),
                latency_ms=_get(inv, "latency_ms", float, path),
                body_excerpt=_get(inv, "body_excerpt", str, path, default=""),
                started_at=_get(inv, "started_at", float, path, default=0.0),
            )
        )
    return ExecutionTrace(trace_id=trace_id, invocations=tuple(invocations), user_response=response)


def trace_to_dict(trace: ExecutionTrace) -> dict:
    return {
        "trace_id": trace.trace_id,
        "response": {
            "status": trace.user_response.status,
            "body": trace.user_response.body,
            "latency_ms": trace.user_response.latency_ms,
        },
        "invocations": [
            {
                "id": inv.id,
                "parent": inv.parent,
                "service": inv.callee.service,
                "endpoint": inv.callee.endpoint,
                "status": inv.status,
                "latency_ms": inv.latency_ms,
                "body_excerpt": inv.body_excerpt,
                "started_at": inv.started_at,
            }
            for inv in trace.invocations
        ],
    }


def serialize_trace(trace: ExecutionTrace) -> str:
    """Serialize to the native format; round-trips through build_native."""
    return json.dumps(trace_to_dict(trace), sort_keys=True, indent=2)


# ---------------------------------------------------------------------------
# Zipkin v2 ingestion


def ingest_zipkin(document: str) -> list[ExecutionTrace]:
    """Ingest a Zipkin v2 JSON span array into ExecutionTraces.

    Spans are grouped by traceId; span.name maps to the endpoint, durations
    convert from microseconds to milliseconds, and a missing http.status_code
    tag defaults to 200. The user response is synthesized from the root span.
    """
    try:
        raw = json.loads(document)
    except json.JSONDecodeError as exc:
        raise TraceParseError(f"invalid JSON: {exc}") from exc
    spans = _expect(raw, list, "$")

    groups: dict[str, list[dict]] = {}
    for i, item in enumerate(spans):
        span = _expect(item, dict, f"$[{i}]")
        trace_id = _get(span, "traceId", str, f"$[{i}]")
        groups.setdefault(trace_id, []).append(span)

    traces = []
    for trace_id, group in groups.items():
        traces.append(_trace_from_spans(trace_id, group))
    return traces


def _span_status(span: dict) -> int:
    tags = span.get("tags") or {}
    value = tags.get("http.status_code", 200)
    try:
        return int(value)
    except (TypeError, ValueError):
        raise TraceStructureError(
            f"trace {span.get('traceId')}: span {span.get('id')} has non-numeric "
            f"http.status_code {value!r}"
        ) from None


def _trace_from_spans(trace_id: str, group: list[dict]) -> ExecutionTrace:
    invocations = []
    root_span = None
    ids = set()
    for span in group:
        path = f"trace {trace_id}, span {span.get('id')}"
        span_id = _expect(span.get("id"), str, path)
        ids.add(span_id)
        endpoint_obj = span.get("localEndpoint") or {}
        service = endpoint_obj.get("serviceName")
        if not isinstance(service, str) or not service:
            raise TraceParseError(f"{path}: missing localEndpoint.serviceName")
        name = _expect(span.get("name"), str, f"{path}.name")
        duration_us = span.get("duration", 0)
        timestamp_us = span.get("timestamp", 0)
        parent = span.get("parentId")
        if parent is None and root_span is None:
            root_span = span
        elif parent is None and root_span is not None:
            raise TraceStructureError(f"trace {trace_id}: multiple root spans")
        invocations.append(
            Invocation(
                id=span_id,
                parent=parent,
                callee=ServiceEndpoint(service, name),
                status=_span_status(span),
                latency_ms=duration_us / 1000.0,
                body_excerpt="",
                started_at=timestamp_us / 1000.0,
            )
        )
    if root_span is None:
        raise TraceStructureError(f"trace {trace_id}: no root span (every span has a parentId)")
    for inv in invocations:
        if inv.parent is not None and inv.parent not in ids:
            raise TraceStructureError(
                f"trace {trace_id}: span {inv.id} references missing parent {inv.parent}"
            )
    response = ResponseRecord(
        status=_span_status(root_span),
        body="",
        latency_ms=root_span.get("duration", 0) / 1000.0,
    )
    return ExecutionTrace(trace_id=trace_id, invocations=tuple(invocations), user_response=response)
