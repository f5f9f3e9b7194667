"""The catalog of injectable faults and the plans handed to targets.

Two primitives exist — abort and delay — and the richer fault types are
composites over them. Only the transient-crash expansion (10% abort 503) is
fixed; the remaining composite expansions are documented defaults and can
be overridden through the campaign config.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Iterable, Sequence

from .errors import CatalogError
from .lineage import Solution
from .trace_model import ServiceEndpoint

if TYPE_CHECKING:  # pragma: no cover
    from .trace_model import RequestClass

FAULT_NAMES = (
    "abort",
    "delay",
    "hang",
    "disconnect",
    "overload",
    "abrupt_crash",
    "transient_crash",
)

DEFAULT_ABORT_STATUS = 503
DEFAULT_DELAY_MS = 1000.0


@dataclass(frozen=True)
class PrimitiveFault:
    """One of the two injectable primitives."""

    kind: str  # abort | delay
    abort_status: int | None = None
    delay_ms: float | None = None
    percentage: float = 100.0

    def __post_init__(self) -> None:
        if self.kind == "abort":
            if self.abort_status is None or not 400 <= self.abort_status <= 599:
                raise ValueError("abort requires a status in 400-599")
        elif self.kind == "delay":
            if self.delay_ms is None or self.delay_ms <= 0:
                raise ValueError("delay requires delay_ms > 0")
        else:
            raise ValueError(f"unknown primitive kind {self.kind!r}")
        if not 0 < self.percentage <= 100:
            raise ValueError("percentage must be in (0, 100]")


@dataclass(frozen=True)
class FaultType:
    """A named fault with its expansion into primitives.

    `persistent` marks faults applied to every matching call for the whole
    campaign step, bypassing percentage sampling (abrupt crash vs the
    sampled transient crash).
    """

    name: str
    expansion: tuple[PrimitiveFault, ...]
    persistent: bool = False

    def __post_init__(self) -> None:
        if not self.expansion:
            raise ValueError(f"fault {self.name}: expansion must be non-empty")


def build_catalog(
    latency_bound_ms: float = 2000.0,
    abort_status: int = DEFAULT_ABORT_STATUS,
    delay_ms: float = DEFAULT_DELAY_MS,
    overrides: dict[str, dict] | None = None,
) -> dict[str, FaultType]:
    """Build the seven-entry fault catalog.

    The hang delay is 2x the oracle latency bound so a hung call provably
    trips either a caller timeout or the latency oracle. `overrides` maps a
    fault name to replacement fields applied to each primitive of matching
    kind, e.g. ``{"delay": {"delay_ms": 250}}``.
    """
    catalog = {
        "abort": FaultType("abort", (PrimitiveFault("abort", abort_status=abort_status),)),
        "delay": FaultType("delay", (PrimitiveFault("delay", delay_ms=delay_ms),)),
        "hang": FaultType(
            "hang", (PrimitiveFault("delay", delay_ms=2.0 * latency_bound_ms),)
        ),
        "disconnect": FaultType(
            "disconnect", (PrimitiveFault("abort", abort_status=abort_status),)
        ),
        "overload": FaultType(
            "overload",
            (
                PrimitiveFault("delay", delay_ms=delay_ms),
                PrimitiveFault("abort", abort_status=abort_status, percentage=20.0),
            ),
        ),
        "abrupt_crash": FaultType(
            "abrupt_crash",
            (PrimitiveFault("abort", abort_status=abort_status),),
            persistent=True,
        ),
        "transient_crash": FaultType(
            "transient_crash",
            (PrimitiveFault("abort", abort_status=503, percentage=10.0),),
        ),
    }
    for name, fields in (overrides or {}).items():
        if name not in catalog:
            raise CatalogError(f"unknown fault type {name!r}")
        fault = catalog[name]
        new_expansion = []
        for prim in fault.expansion:
            applicable = {
                k: v
                for k, v in fields.items()
                if (k == "abort_status" and prim.kind == "abort")
                or (k == "delay_ms" and prim.kind == "delay")
                or k == "percentage"
            }
            new_expansion.append(replace(prim, **applicable) if applicable else prim)
        catalog[name] = replace(fault, expansion=tuple(new_expansion))
    return catalog


def expand(fault: FaultType) -> list[PrimitiveFault]:
    """The catalog expansion of a fault; pure lookup."""
    if fault.name not in FAULT_NAMES:
        raise CatalogError(f"unknown fault type {fault.name!r}")
    return list(fault.expansion)


@dataclass(frozen=True)
class InjectionPlan:
    """What to inject where for one request execution."""

    targets: frozenset[ServiceEndpoint]
    fault: FaultType
    seed: int

    def __post_init__(self) -> None:
        if not self.targets:
            raise ValueError("injection plan requires at least one target")

    def sorted_targets(self) -> list[str]:
        return sorted(str(p) for p in self.targets)


@dataclass(frozen=True)
class FailureScenario:
    """(request class, injection-point set, fault type) — one experiment."""

    class_id: str
    plan: InjectionPlan

    @property
    def key(self) -> tuple[tuple[str, ...], str]:
        return (tuple(self.plan.sorted_targets()), self.plan.fault.name)


def derive_seed(
    campaign_seed: int, class_id: str, targets: Iterable[ServiceEndpoint], fault_name: str
) -> int:
    """Deterministic per-scenario seed for percentage sampling."""
    text = f"{campaign_seed}|{class_id}|{fault_name}|{','.join(sorted(str(p) for p in targets))}"
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "big")


def scenarios_for(
    cls: "RequestClass",
    solutions: Sequence[Solution],
    faults: Sequence[FaultType],
    campaign_seed: int,
) -> list[FailureScenario]:
    """The cartesian product solutions x faults, minus everything this class
    has already tested, pruned, or blocked.

    Rule-2 superset blocks filter new arrivals here: a solution computed by a
    later conjunction may strictly contain an already-failed target set.
    """
    history = cls.history_keys
    out = []
    for solution in sorted(solutions, key=lambda s: tuple(sorted(str(p) for p in s))):
        for fault in faults:
            scenario = FailureScenario(
                class_id=cls.id,
                plan=InjectionPlan(
                    targets=frozenset(solution),
                    fault=fault,
                    seed=derive_seed(campaign_seed, cls.id, solution, fault.name),
                ),
            )
            key = scenario.key
            if key in history or key in cls.pruned or key in cls.fs:
                continue
            if any(
                fault.name == blocked_fault and blocked_targets < solution
                for blocked_targets, blocked_fault in cls.superset_blocks
            ):
                continue
            out.append(scenario)
    return out
