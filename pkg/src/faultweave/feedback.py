"""Priority tables and scenario selection.

Three tables steer the campaign: per request class, per fault type within a
class, and per service. After every injection the tables are updated from
the outcome, and the next scenario is drawn by a three-stage roulette
(class, then fault type, then injection-point set) proportional to the
priorities. All draws come from one seeded generator, so a campaign is a
pure function of its configuration.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .fault_model import FailureScenario, FaultType
from .lineage import Solution
from .trace_model import ClassRegistry, Member, RequestClass


@dataclass(frozen=True)
class Weights:
    w1: float = 1.0
    w2: float = 1.0
    w3: float = 1.0

    def __post_init__(self) -> None:
        if min(self.w1, self.w2, self.w3) <= 0:
            raise ValueError("weights must be positive")


@dataclass
class ClassStats:
    num_fs: int = 0
    num_error: int = 0
    num_history: int = 0


@dataclass
class Counts:
    fail_count: int = 0
    inject_count: int = 0


@dataclass
class PriorityState:
    """The mutable feedback state; single-writer (the explorer serializes updates)."""

    rng_seed: int
    weights: Weights = field(default_factory=Weights)
    class_stats: dict[str, ClassStats] = field(default_factory=dict)
    fault_stats: dict[tuple[str, str], Counts] = field(default_factory=dict)
    service_stats: dict[str, Counts] = field(default_factory=dict)
    solution_score: str = "mean"  # or "max"
    rng: random.Random = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.rng = random.Random(self.rng_seed)
        if self.solution_score not in ("mean", "max"):
            raise ValueError("solution_score must be 'mean' or 'max'")


@dataclass(frozen=True)
class Selection:
    """One chosen experiment: who to hit, with what, driven by which request."""

    test_case: Member
    class_id: str
    fault: FaultType
    targets: Solution


def class_priority(stats: ClassStats, weights: Weights) -> float:
    """(w1*FS + w2*errors) / (w3*(history+1)).

    More pending fault space and more exposed failures raise the priority;
    accumulated history lowers it. The +1 smooths the zero-history start.
    """
    return (weights.w1 * stats.num_fs + weights.w2 * stats.num_error) / (
        weights.w3 * (stats.num_history + 1)
    )


def fault_priority(stats: Counts) -> float:
    """fail/inject with an optimistic 1.0 prior for untried fault types."""
    if stats.inject_count == 0:
        return 1.0
    return stats.fail_count / stats.inject_count


def service_priority(stats: Counts) -> float:
    """fail/inject pooled over all of the service's endpoints; 0.5 prior.

    Pooling across endpoints encodes the hypothesis that one team builds a
    service: if one endpoint mishandles a fault, siblings likely do too.
    """
    if stats.inject_count == 0:
        return 0.5
    return stats.fail_count / stats.inject_count


def _roulette(rng: random.Random, weights: list[float]) -> int:
    total = sum(weights)
    if total <= 0:
        return rng.randrange(len(weights))
    r = rng.random() * total
    acc = 0.0
    for i, w in enumerate(weights):
        acc += w
        if r < acc:
            return i
    return len(weights) - 1


def _pending(cls: RequestClass) -> list[FailureScenario]:
    return [cls.fs[key] for key in sorted(cls.fs)]


def _pick_member(rng: random.Random, cls: RequestClass) -> Member:
    return cls.members[rng.randrange(len(cls.members))]


def rand_select(
    state: PriorityState, registry: ClassRegistry, class_id: str
) -> Selection | None:
    """Uniform draw over the class's pending scenarios; None if it has none."""
    cls = registry.classes[class_id]
    pending = _pending(cls)
    if not pending:
        return None
    scenario = pending[state.rng.randrange(len(pending))]
    return Selection(
        test_case=_pick_member(state.rng, cls),
        class_id=cls.id,
        fault=scenario.plan.fault,
        targets=scenario.plan.targets,
    )


def _solution_weight(state: PriorityState, scenario: FailureScenario) -> float:
    scores = [
        service_priority(state.service_stats.get(p.service, Counts()))
        for p in sorted(scenario.plan.targets)
    ]
    return max(scores) if state.solution_score == "max" else sum(scores) / len(scores)


def bias_select(state: PriorityState, registry: ClassRegistry) -> Selection | None:
    """Three-stage priority-weighted roulette; None when every FS is empty.

    Stage weights: class priority, then fault priority restricted to faults
    with pending scenarios, then the pending solutions scored by their
    services' priorities. A zero-weight stage falls back to uniform.
    """
    candidates = [cls for cls in registry.sorted_classes() if cls.fs]
    if not candidates:
        return None
    cls = candidates[
        _roulette(
            state.rng,
            [
                class_priority(state.class_stats.get(c.id, ClassStats()), state.weights)
                for c in candidates
            ],
        )
    ]

    pending = _pending(cls)
    fault_names = sorted({s.plan.fault.name for s in pending})
    name = fault_names[
        _roulette(
            state.rng,
            [
                fault_priority(state.fault_stats.get((cls.id, n), Counts()))
                for n in fault_names
            ],
        )
    ]

    matching = [s for s in pending if s.plan.fault.name == name]
    scenario = matching[
        _roulette(state.rng, [_solution_weight(state, s) for s in matching])
    ]
    return Selection(
        test_case=_pick_member(state.rng, cls),
        class_id=cls.id,
        fault=scenario.plan.fault,
        targets=scenario.plan.targets,
    )


def record_outcome(
    state: PriorityState,
    selection: Selection,
    failed: bool,
    new_failure: bool,
    new_fs_count: int,
) -> PriorityState:
    """Fold one executed injection into the three tables.

    `failed` feeds the fault/service fail counts; `new_failure` (a fresh
    FailureKey) is what advances the class's unique-error count.
    """
    cs = state.class_stats.setdefault(selection.class_id, ClassStats())
    cs.num_history += 1
    if new_failure:
        cs.num_error += 1
    cs.num_fs = new_fs_count

    fc = state.fault_stats.setdefault((selection.class_id, selection.fault.name), Counts())
    fc.inject_count += 1
    if failed:
        fc.fail_count += 1

    for service in sorted({p.service for p in selection.targets}):
        sc = state.service_stats.setdefault(service, Counts())
        sc.inject_count += 1
        if failed:
            sc.fail_count += 1
    return state
