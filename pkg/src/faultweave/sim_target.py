"""Target-adapter contract and the deterministic microservice simulator.

The simulator evaluates a request depth-first through a configured service
topology, applying an optional injection plan along the way, and returns
both the user response and the full invocation trace. Latencies are
computed arithmetically on a simulated clock — nothing sleeps — so
identical inputs always produce bit-identical outcomes.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Protocol

from .errors import TargetError, TopologyError
from .fault_model import InjectionPlan
from .trace_model import (
    BODY_EXCERPT_LIMIT,
    ExecutionTrace,
    Invocation,
    ResponseRecord,
    ServiceEndpoint,
    TestStep,
)

DEFAULT_RESPONSE_TEMPLATE = "ok: {service}/{endpoint}"
# Uniform, digit-free defaults keep propagated errors byte-identical to the
# origin's error, which is what the reduction rules key on.
DEFAULT_ERROR_TEMPLATE = "fault injected: dependency unavailable"
TIMEOUT_STATUS = 504
TIMEOUT_BODY = "upstream call timed out"


@dataclass(frozen=True)
class ErrorPolicy:
    """What a caller does when a dependency call fails."""

    kind: str  # propagate | fallback | default_value
    fallback: ServiceEndpoint | None = None
    default_body: str | None = None

    KINDS = ("propagate", "fallback", "default_value")

    def __post_init__(self) -> None:
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown error policy {self.kind!r}")
        if self.kind == "fallback" and self.fallback is None:
            raise ValueError("fallback policy requires a target")
        if self.kind == "default_value" and self.default_body is None:
            raise ValueError("default_value policy requires a body")


@dataclass(frozen=True)
class CallSpec:
    target: ServiceEndpoint
    timeout_ms: float
    on_error: ErrorPolicy
    required: bool = True


@dataclass(frozen=True)
class EndpointSpec:
    name: str
    base_latency_ms: float
    calls: tuple[CallSpec, ...] = ()
    response_template: str = DEFAULT_RESPONSE_TEMPLATE
    error_template: str = DEFAULT_ERROR_TEMPLATE

    def __post_init__(self) -> None:
        if self.base_latency_ms < 0:
            raise ValueError(f"endpoint {self.name}: base_latency_ms must be >= 0")


@dataclass(frozen=True)
class ServiceSpec:
    name: str
    endpoints: tuple[EndpointSpec, ...]

    def __post_init__(self) -> None:
        names = [e.name for e in self.endpoints]
        if len(set(names)) != len(names):
            raise ValueError(f"service {self.name}: endpoint names must be unique")


@dataclass(frozen=True)
class Topology:
    services: tuple[ServiceSpec, ...]
    entry: ServiceEndpoint

    def endpoint(self, point: ServiceEndpoint) -> EndpointSpec | None:
        for service in self.services:
            if service.name == point.service:
                for ep in service.endpoints:
                    if ep.name == point.endpoint:
                        return ep
        return None

    def all_points(self) -> list[ServiceEndpoint]:
        return [
            ServiceEndpoint(s.name, e.name) for s in self.services for e in s.endpoints
        ]


@dataclass(frozen=True)
class TargetOutcome:
    """The raw material one injection experiment produces."""

    response: ResponseRecord
    trace: ExecutionTrace


class Target(Protocol):
    """Adapter contract: execute one test-case step under an optional plan.

    Implementations must be deterministic in (step, plan) and keep no shared
    mutable state between executions beyond declared persistent faults,
    which are confined to one campaign step.
    """

    def execute(self, step: TestStep, plan: InjectionPlan | None) -> TargetOutcome: ...


# ---------------------------------------------------------------------------
# Topology loading


def _policy_from_json(raw: object, path: str) -> ErrorPolicy:
    if raw == "propagate":
        return ErrorPolicy("propagate")
    if isinstance(raw, dict):
        if set(raw) == {"fallback"}:
            return ErrorPolicy("fallback", fallback=ServiceEndpoint.parse(raw["fallback"]))
        if set(raw) == {"default_value"}:
            return ErrorPolicy("default_value", default_body=str(raw["default_value"]))
    raise TopologyError(
        f"{path}: on_error must be 'propagate', {{'fallback': ...}} or {{'default_value': ...}}"
    )


def load_topology(document: str) -> Topology:
    """Parse and validate a topology document (see the JSON schema in README)."""
    try:
        raw = json.loads(document)
    except json.JSONDecodeError as exc:
        raise TopologyError(f"invalid JSON: {exc}") from exc
    return topology_from_dict(raw)


def topology_from_dict(raw: object) -> Topology:
    if not isinstance(raw, dict):
        raise TopologyError("topology document must be a JSON object")
    try:
        entry = ServiceEndpoint.parse(raw["entry"])
    except (KeyError, TypeError, ValueError) as exc:
        raise TopologyError(f"entry: {exc}") from exc

    services = []
    for s_raw in raw.get("services", []):
        endpoints = []
        sname = s_raw.get("name")
        if not sname:
            raise TopologyError("every service needs a name")
        for e_raw in s_raw.get("endpoints", []):
            path = f"{sname}/{e_raw.get('name')}"
            calls = []
            for i, c_raw in enumerate(e_raw.get("calls", [])):
                cpath = f"{path}.calls[{i}]"
                try:
                    target = ServiceEndpoint.parse(c_raw["target"])
                except (KeyError, TypeError, ValueError) as exc:
                    raise TopologyError(f"{cpath}: {exc}") from exc
                policy = _policy_from_json(c_raw.get("on_error", "propagate"), cpath)
                required = bool(c_raw.get("required", True))
                if policy.kind == "default_value" and required:
                    raise TopologyError(
                        f"{cpath}: default_value substitution is only valid for required=false calls"
                    )
                calls.append(
                    CallSpec(
                        target=target,
                        timeout_ms=float(c_raw.get("timeout_ms", 2000.0)),
                        on_error=policy,
                        required=required,
                    )
                )
            try:
                endpoints.append(
                    EndpointSpec(
                        name=e_raw["name"],
                        base_latency_ms=float(e_raw.get("base_latency_ms", 0.0)),
                        calls=tuple(calls),
                        response_template=e_raw.get(
                            "response_template", DEFAULT_RESPONSE_TEMPLATE
                        ),
                        error_template=e_raw.get("error_template", DEFAULT_ERROR_TEMPLATE),
                    )
                )
            except (KeyError, ValueError) as exc:
                raise TopologyError(f"{path}: {exc}") from exc
        try:
            services.append(ServiceSpec(name=sname, endpoints=tuple(endpoints)))
        except ValueError as exc:
            raise TopologyError(str(exc)) from exc

    topology = Topology(services=tuple(services), entry=entry)
    _validate_topology(topology)
    return topology


def _validate_topology(topology: Topology) -> None:
    known = set(topology.all_points())
    if topology.entry not in known:
        raise TopologyError(f"entry endpoint {topology.entry} does not exist")
    edges: dict[ServiceEndpoint, list[ServiceEndpoint]] = {p: [] for p in known}
    for service in topology.services:
        for ep in service.endpoints:
            origin = ServiceEndpoint(service.name, ep.name)
            for call in ep.calls:
                if call.target not in known:
                    raise TopologyError(
                        f"{origin}: call target {call.target} does not exist"
                    )
                edges[origin].append(call.target)
                if call.on_error.kind == "fallback":
                    fb = call.on_error.fallback
                    assert fb is not None
                    if fb not in known:
                        raise TopologyError(f"{origin}: fallback target {fb} does not exist")
                    if fb == call.target:
                        raise TopologyError(
                            f"{origin}: fallback target must differ from {call.target}"
                        )
                    edges[origin].append(fb)

    # acyclicity over call + fallback edges; both are executable at runtime
    WHITE, GREY, BLACK = 0, 1, 2
    color = {p: WHITE for p in known}
    stack_path: list[ServiceEndpoint] = []

    def visit(node: ServiceEndpoint) -> None:
        color[node] = GREY
        stack_path.append(node)
        for nxt in edges[node]:
            if color[nxt] == GREY:
                cycle = stack_path[stack_path.index(nxt) :] + [nxt]
                raise TopologyError(
                    "call graph contains a cycle: " + " -> ".join(str(p) for p in cycle)
                )
            if color[nxt] == WHITE:
                visit(nxt)
        stack_path.pop()
        color[node] = BLACK

    for point in sorted(known):
        if color[point] == WHITE:
            visit(point)


# ---------------------------------------------------------------------------
# Execution


def _render(template: str, point: ServiceEndpoint, status: int = 200) -> str:
    class _Safe(dict):
        def __missing__(self, key: str) -> str:
            return "{" + key + "}"

    return template.format_map(
        _Safe(service=point.service, endpoint=point.endpoint, status=status)
    )


def _percent_draw(seed: int, trace_id: str, ordinal: int) -> float:
    digest = hashlib.sha256(f"{seed}|{trace_id}|{ordinal}".encode()).digest()
    return int.from_bytes(digest[:8], "big") / 2**64 * 100.0


def derive_trace_id(step: TestStep, plan: InjectionPlan | None) -> str:
    params = ",".join(f"{k}={v}" for k, v in step.params)
    plan_sig = (
        "baseline"
        if plan is None
        else f"{plan.fault.name}@{'+'.join(plan.sorted_targets())}#{plan.seed}"
    )
    digest = hashlib.sha256(f"{step.entry}|{params}|{plan_sig}".encode()).hexdigest()
    return f"t-{digest[:12]}"


class _Execution:
    """Single-request evaluation state: clock, ordinal counter, trace rows."""

    def __init__(self, topology: Topology, plan: InjectionPlan | None, trace_id: str):
        self.topology = topology
        self.plan = plan
        self.trace_id = trace_id
        self.ordinal = 0
        self.rows: list[Invocation] = []

    def _injected(self, point: ServiceEndpoint, ordinal: int) -> tuple[float, int | None]:
        """(extra delay ms, abort status or None) for this call."""
        plan = self.plan
        if plan is None or point not in plan.targets:
            return 0.0, None
        delay = 0.0
        abort: int | None = None
        for prim in plan.fault.expansion:
            if plan.fault.persistent:
                applies = True
            else:
                applies = _percent_draw(plan.seed, self.trace_id, ordinal) < prim.percentage
            if not applies:
                continue
            if prim.kind == "delay":
                assert prim.delay_ms is not None
                delay += prim.delay_ms
            elif abort is None:
                abort = prim.abort_status
        return delay, abort

    def call(self, point: ServiceEndpoint, parent_id: str | None, started_at: float):
        """Evaluate one call; returns (invocation id, status, body, observed latency)."""
        self.ordinal += 1
        ordinal = self.ordinal
        inv_id = f"i{ordinal}"
        spec = self.topology.endpoint(point)
        if spec is None:
            raise TargetError(f"unknown endpoint {point}")

        injected_delay, abort_status = self._injected(point, ordinal)
        if abort_status is not None:
            status = abort_status
            body = _render(spec.error_template, point, status)
            latency = injected_delay  # the callee never executes
        else:
            status, body, latency = self._run_endpoint(spec, point, inv_id, started_at)
            latency += injected_delay

        self.rows.append(
            Invocation(
                id=inv_id,
                parent=parent_id,
                callee=point,
                status=status,
                latency_ms=round(latency, 6),
                body_excerpt=body[:BODY_EXCERPT_LIMIT],
                started_at=round(started_at, 6),
            )
        )
        return inv_id, status, body, latency

    def _run_endpoint(
        self, spec: EndpointSpec, point: ServiceEndpoint, inv_id: str, started_at: float
    ) -> tuple[int, str, float]:
        elapsed = spec.base_latency_ms
        for call in spec.calls:
            outcome = self._issue(call, call.target, inv_id, started_at + elapsed)
            elapsed += outcome[3]
            if outcome[0]:  # call succeeded
                continue
            _, eff_status, eff_body, _ = outcome
            policy = call.on_error
            if policy.kind == "fallback":
                assert policy.fallback is not None
                fb = self._issue(call, policy.fallback, inv_id, started_at + elapsed)
                elapsed += fb[3]
                if fb[0]:
                    continue
                # a failed fallback propagates; no second fallback
                return fb[1], fb[2], elapsed
            if policy.kind == "default_value":
                continue  # substituted body, status 200, keep going
            return eff_status, eff_body, elapsed
        return 200, _render(spec.response_template, point), elapsed

    def _issue(
        self, call: CallSpec, target: ServiceEndpoint, parent_id: str, started_at: float
    ) -> tuple[bool, int, str, float]:
        """Issue one dependency call; returns (ok, status, body, caller wait)."""
        _, status, body, observed = self.call(target, parent_id, started_at)
        if observed > call.timeout_ms:
            # the caller abandons the call at the timeout; the failure it
            # handles is a synthesized timeout, not the slow result
            return False, TIMEOUT_STATUS, TIMEOUT_BODY, call.timeout_ms
        if status >= 400:
            return False, status, body, observed
        return True, status, body, observed


def execute(
    topology: Topology, step: TestStep, plan: InjectionPlan | None = None
) -> TargetOutcome:
    """Run one test-case step through the simulator under an optional plan."""
    if topology.endpoint(step.entry) is None:
        raise TargetError(f"unknown entry endpoint {step.entry}")
    trace_id = derive_trace_id(step, plan)
    state = _Execution(topology, plan, trace_id)
    _, status, body, latency = state.call(step.entry, None, 0.0)
    response = ResponseRecord(status=status, body=body, latency_ms=round(latency, 6))
    # rows are appended as calls complete (post-order); present them in call order
    rows = sorted(state.rows, key=lambda inv: int(inv.id[1:]))
    trace = ExecutionTrace(
        trace_id=trace_id, invocations=tuple(rows), user_response=response
    )
    return TargetOutcome(response=response, trace=trace)


class SimulatorTarget:
    """The bundled Target implementation backed by a Topology."""

    def __init__(self, topology: Topology):
        self.topology = topology

    def execute(self, step: TestStep, plan: InjectionPlan | None = None) -> TargetOutcome:
        return execute(self.topology, step, plan)
