"""The two pruning rules that drop provably redundant pending scenarios.

Rule 1: when an injected error propagates unchanged through its callers,
none of those callers handled it, so injecting the same fault at each of
them alone is redundant. Rule 2: once a target set causes a user-visible
failure, every strict superset of it is destined to fail for the same
fault, including supersets that only appear in later solver rounds.
"""

from __future__ import annotations

from dataclasses import dataclass

from .fault_model import FailureScenario, FaultType, InjectionPlan
from .oracle import normalize_signature
from .sim_target import TargetOutcome
from .trace_model import Invocation, RequestClass, ServiceEndpoint


@dataclass(frozen=True)
class PropagationPath:
    """A contiguous parent-link chain carrying one unhandled error.

    `chain` starts at the faulted invocation and walks toward the root;
    every link has the origin's status and normalized body signature.
    """

    origin: ServiceEndpoint
    chain: tuple[str, ...]  # invocation ids, origin first


def _same_error(a: Invocation, b: Invocation) -> bool:
    return a.status == b.status and normalize_signature(a.body_excerpt) == normalize_signature(
        b.body_excerpt
    )


def extract_propagation(outcome: TargetOutcome, plan: InjectionPlan) -> list[PropagationPath]:
    """Maximal same-error chains from each aborted target toward the root.

    Only abort primitives produce an error message that can propagate;
    delay-only faults yield no paths.
    """
    if not any(p.kind == "abort" for p in plan.fault.expansion):
        return []
    by_id = {inv.id: inv for inv in outcome.trace.invocations}
    paths = []
    for inv in outcome.trace.invocations:
        if inv.callee not in plan.targets or inv.status < 400:
            continue
        chain = [inv.id]
        cursor = inv
        while cursor.parent is not None:
            parent = by_id[cursor.parent]
            if not _same_error(inv, parent):
                break
            chain.append(parent.id)
            cursor = parent
        paths.append(PropagationPath(origin=inv.callee, chain=tuple(chain)))
    return paths


def apply_rule1(
    cls: RequestClass,
    paths: list[PropagationPath],
    fault: FaultType,
    outcome: TargetOutcome,
) -> list[FailureScenario]:
    """Drop pending same-fault singletons at callers the error passed through.

    Only singleton target sets are pruned; multi-point solutions containing
    an upstream callee are left to Rule 2 and exhaustion.
    """
    by_id = {inv.id: inv for inv in outcome.trace.invocations}
    pruned = []
    for path in paths:
        for inv_id in path.chain[1:]:
            callee = by_id[inv_id].callee
            key = ((str(callee),), fault.name)
            scenario = cls.fs.pop(key, None)
            cls.pruned.add(key)
            if scenario is not None:
                pruned.append(scenario)
    return pruned


def apply_rule2(
    cls: RequestClass, failed_targets: frozenset[ServiceEndpoint], fault: FaultType
) -> list[FailureScenario]:
    """Drop pending strict supersets of a target set that just failed.

    The (targets, fault) block is recorded so supersets computed by later
    conjunctions are filtered on arrival; the failed set itself is never
    pruned.
    """
    cls.superset_blocks.add((failed_targets, fault.name))
    pruned = []
    for key in sorted(cls.fs):
        scenario = cls.fs[key]
        targets = scenario.plan.targets
        if scenario.plan.fault.name == fault.name and failed_targets < targets:
            del cls.fs[key]
            cls.pruned.add(key)
            pruned.append(scenario)
    return pruned
