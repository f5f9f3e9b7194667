"""Campaign orchestration: baseline, random seeding, feedback-guided stage.

A campaign starts from a fault-free baseline that classifies requests and
derives each class's initial injection-point solutions. Stage 1 injects one
randomly chosen scenario per class to seed the priority tables; stage 2
repeatedly picks the highest-leverage pending scenario until the injection
budget runs out or every class's fault space is exhausted. Tolerated
injections that reveal a new alternate path grow the lineage formula;
failures land in the unique-failure catalog and trigger the pruning rules.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import BaselineError, ConfigError
from .fault_model import (
    FAULT_NAMES,
    FailureScenario,
    FaultType,
    build_catalog,
    scenarios_for,
)
from .feedback import (
    ClassStats,
    Counts,
    PriorityState,
    Selection,
    Weights,
    bias_select,
    class_priority,
    fault_priority,
    rand_select,
    record_outcome,
    service_priority,
)
from .lineage import (
    DEFAULT_MAX_CARDINALITY,
    LineageFormula,
    conjoin,
    encode,
    minimal_solutions,
)
from .oracle import FailureKey, FailureSymptom, OracleConfig, detect, identity
from .reduction import apply_rule1, apply_rule2, extract_propagation
from .sim_target import SimulatorTarget, TargetOutcome, Topology
from .trace_model import (
    ClassRegistry,
    ExecutionTrace,
    Member,
    RequestClass,
    ScenarioKey,
    TestCase,
    TestStep,
    classify,
    footprint,
)


@dataclass(frozen=True)
class CampaignConfig:
    topology: Topology
    test_cases: tuple[TestCase, ...]
    fault_names: tuple[str, ...] = ("abort",)
    budget: int = 50
    max_cardinality: int = DEFAULT_MAX_CARDINALITY
    weights: Weights = field(default_factory=Weights)
    oracle: OracleConfig = field(default_factory=OracleConfig)
    seed: int = 0
    rule1: bool = True
    rule2: bool = True
    exclude_entry: bool = False
    solution_score: str = "mean"
    fault_overrides: dict | None = None

    def __post_init__(self) -> None:
        if self.budget < 0:
            raise ConfigError("budget must be >= 0")
        if not self.test_cases:
            raise ConfigError("at least one test case is required")
        ids = [tc.id for tc in self.test_cases]
        if len(set(ids)) != len(ids):
            raise ConfigError("test case ids must be unique")
        if not self.fault_names:
            raise ConfigError("at least one fault type is required")
        for name in self.fault_names:
            if name not in FAULT_NAMES:
                raise ConfigError(f"unknown fault type {name!r}")

    def catalog(self) -> dict[str, FaultType]:
        return build_catalog(
            latency_bound_ms=self.oracle.latency_bound_ms, overrides=self.fault_overrides
        )

    def faults(self) -> list[FaultType]:
        catalog = self.catalog()
        return [catalog[name] for name in self.fault_names]

    def step(self, member: Member) -> TestStep:
        for tc in self.test_cases:
            if tc.id == member[0]:
                return tc.steps[member[1]]
        raise KeyError(member)


@dataclass
class CatalogRecord:
    record_id: str
    key: FailureKey
    scenario: FailureScenario
    test_case: Member
    symptom: FailureSymptom
    trace: ExecutionTrace
    ordinal: int
    count: int = 1
    contributing: list[ScenarioKey] = field(default_factory=list)


@dataclass
class FailureCatalog:
    """The crash set: one record per distinct FailureKey, first occurrence wins."""

    records: list[CatalogRecord] = field(default_factory=list)

    def _by_key(self, key: FailureKey) -> CatalogRecord | None:
        for record in self.records:
            if record.key == key:
                return record
        return None

    def add(
        self,
        key: FailureKey,
        scenario: FailureScenario,
        test_case: Member,
        symptom: FailureSymptom,
        trace: ExecutionTrace,
        ordinal: int,
    ) -> bool:
        """Record a detected failure; returns True when the key is fresh."""
        record = self._by_key(key)
        if record is not None:
            record.count += 1
            if scenario.key not in record.contributing:
                record.contributing.append(scenario.key)
            return False
        self.records.append(
            CatalogRecord(
                record_id=f"f-{len(self.records) + 1:02d}",
                key=key,
                scenario=scenario,
                test_case=test_case,
                symptom=symptom,
                trace=trace,
                ordinal=ordinal,
                contributing=[scenario.key],
            )
        )
        return True

    def keys(self) -> set[FailureKey]:
        return {record.key for record in self.records}

    def record(self, record_id: str) -> CatalogRecord | None:
        for record in self.records:
            if record.record_id == record_id:
                return record
        return None


@dataclass
class CampaignLog:
    """Ordered, replayable injection records; serializes to JSON lines."""

    entries: list[dict] = field(default_factory=list)

    def to_jsonlines(self) -> str:
        return "".join(json.dumps(e, sort_keys=True) + "\n" for e in self.entries)

    def pruning_totals(self) -> dict[str, int]:
        totals = {"rule1": 0, "rule2": 0}
        for entry in self.entries:
            for pruning in entry["prunings"]:
                totals[pruning["rule"]] += 1
        return totals


@dataclass
class CampaignResult:
    catalog: FailureCatalog
    log: CampaignLog
    state: PriorityState
    registry: ClassRegistry
    injections: int


def _excluded_for(trace: ExecutionTrace, config: CampaignConfig) -> frozenset:
    if config.exclude_entry:
        return frozenset({trace.root.callee})
    return frozenset()


def baseline(config: CampaignConfig, target: SimulatorTarget | None = None) -> ClassRegistry:
    """Fault-free run of every test-case step; classifies and seeds each class.

    Raises BaselineError if the target is already broken before any injection.
    """
    target = target or SimulatorTarget(config.topology)
    registry = ClassRegistry()
    faults = config.faults()
    traces: list[tuple[ExecutionTrace, Member]] = []
    for tc in config.test_cases:
        for idx, step in enumerate(tc.steps):
            outcome = target.execute(step, None)
            assertions = [step.assertion] if step.assertion else []
            symptom = detect(outcome, assertions, config.oracle)
            if symptom is not None:
                raise BaselineError(
                    f"fault-free run of {tc.id}[{idx}] already fails: "
                    f"{symptom.category}({symptom.detail})"
                )
            member = (tc.id, idx)
            classify(outcome.trace, registry, member)
            traces.append((outcome.trace, member))

    for trace, _ in traces:
        cls = registry.classes[classify(trace, registry)]
        clause = encode(trace, _excluded_for(trace, config))
        cls.formula = (
            conjoin(cls.formula, clause)
            if cls.formula is not None
            else LineageFormula.from_clauses([clause])
        )
    for cls in registry.sorted_classes():
        assert cls.formula is not None
        solutions = minimal_solutions(cls.formula, config.max_cardinality)
        for scenario in scenarios_for(cls, solutions, faults, config.seed):
            cls.fs[scenario.key] = scenario
    return registry


def _scenario_key(selection: Selection) -> ScenarioKey:
    return (tuple(sorted(str(p) for p in selection.targets)), selection.fault.name)


class _Campaign:
    def __init__(self, config: CampaignConfig):
        self.config = config
        self.target = SimulatorTarget(config.topology)
        self.registry = baseline(config, self.target)
        if config.budget < len(self.registry.classes):
            raise BaselineError(
                f"budget {config.budget} cannot cover stage 1: "
                f"{len(self.registry.classes)} request classes"
            )
        self.faults = config.faults()
        self.state = PriorityState(
            rng_seed=config.seed,
            weights=config.weights,
            solution_score=config.solution_score,
        )
        for cls in self.registry.sorted_classes():
            self.state.class_stats[cls.id] = ClassStats(num_fs=len(cls.fs))
        self.catalog = FailureCatalog()
        self.log = CampaignLog()
        self.injections = 0

    def run(self) -> CampaignResult:
        for cls in self.registry.sorted_classes():
            selection = rand_select(self.state, self.registry, cls.id)
            if selection is not None:
                self._inject(selection, stage=1)
        while self.injections < self.config.budget:
            selection = bias_select(self.state, self.registry)
            if selection is None:
                break
            self._inject(selection, stage=2)
        return CampaignResult(
            catalog=self.catalog,
            log=self.log,
            state=self.state,
            registry=self.registry,
            injections=self.injections,
        )

    def _inject(self, selection: Selection, stage: int) -> None:
        config = self.config
        cls = self.registry.classes[selection.class_id]
        scenario = cls.fs.pop(_scenario_key(selection))
        cls.history.append(scenario)
        step = config.step(selection.test_case)
        outcome = self.target.execute(step, scenario.plan)
        assertions = [step.assertion] if step.assertion else []
        symptom = detect(outcome, assertions, config.oracle)
        self.injections += 1

        failed = symptom is not None
        fresh = False
        prunings: list[dict] = []
        new_clause: list[str] | None = None
        no_new_lineage = False

        if symptom is not None:
            key = identity(cls.id, symptom)
            fresh = key not in cls.errors
            cls.errors.add(key)
            self.catalog.add(
                key, scenario, selection.test_case, symptom, outcome.trace, self.injections
            )
            if config.rule2:
                for pruned in apply_rule2(cls, scenario.plan.targets, scenario.plan.fault):
                    prunings.append(_pruning_entry("rule2", pruned))
        else:
            new_clause, no_new_lineage = self._grow(cls, scenario, outcome)

        paths = extract_propagation(outcome, scenario.plan)
        if config.rule1:
            for pruned in apply_rule1(cls, paths, scenario.plan.fault, outcome):
                prunings.append(_pruning_entry("rule1", pruned))

        record_outcome(self.state, selection, failed, fresh, len(cls.fs))
        self.log.entries.append(
            self._log_entry(
                stage, selection, scenario, outcome, symptom, fresh,
                new_clause, no_new_lineage, prunings, cls,
            )
        )

    def _grow(
        self, cls: RequestClass, scenario: FailureScenario, outcome: TargetOutcome
    ) -> tuple[list[str] | None, bool]:
        """Conjoin the alternate path a tolerated injection revealed.

        The faulted targets are excluded from the clause: the dead calls did
        not support the success, the fallback path did. An empty or subsumed
        clause adds nothing ("no new lineage").
        """
        assert cls.formula is not None
        clause = (
            footprint(outcome.trace)
            - scenario.plan.targets
            - _excluded_for(outcome.trace, self.config)
        )
        if not clause:
            return None, True
        grown = conjoin(cls.formula, clause)
        if grown.clauses == cls.formula.clauses:
            return None, True
        cls.formula = grown
        solutions = minimal_solutions(grown, self.config.max_cardinality)
        for new_scenario in scenarios_for(cls, solutions, self.faults, self.config.seed):
            cls.fs[new_scenario.key] = new_scenario
        return sorted(str(p) for p in clause), False

    def _log_entry(
        self,
        stage: int,
        selection: Selection,
        scenario: FailureScenario,
        outcome: TargetOutcome,
        symptom: FailureSymptom | None,
        fresh: bool,
        new_clause: list[str] | None,
        no_new_lineage: bool,
        prunings: list[dict],
        cls: RequestClass,
    ) -> dict:
        services = sorted({p.service for p in selection.targets})
        return {
            "ordinal": self.injections,
            "stage": stage,
            "class_id": cls.id,
            "test_case": list(selection.test_case),
            "fault": selection.fault.name,
            "targets": scenario.plan.sorted_targets(),
            "plan_seed": scenario.plan.seed,
            "trace_id": outcome.trace.trace_id,
            "response": {
                "status": outcome.response.status,
                "latency_ms": round(outcome.response.latency_ms, 3),
            },
            "symptom": None
            if symptom is None
            else {"category": symptom.category, "detail": symptom.detail},
            "new_failure": fresh,
            "new_clause": new_clause,
            "no_new_lineage": no_new_lineage,
            "prunings": prunings,
            "fs_remaining": len(cls.fs),
            "priorities": {
                "class": round(
                    class_priority(self.state.class_stats[cls.id], self.state.weights), 6
                ),
                "fault": round(
                    fault_priority(
                        self.state.fault_stats.get(
                            (cls.id, selection.fault.name), Counts()
                        )
                    ),
                    6,
                ),
                "services": {
                    svc: round(
                        service_priority(self.state.service_stats.get(svc, Counts())), 6
                    )
                    for svc in services
                },
            },
        }


def _pruning_entry(rule: str, scenario: FailureScenario) -> dict:
    return {
        "rule": rule,
        "class_id": scenario.class_id,
        "targets": scenario.plan.sorted_targets(),
        "fault": scenario.plan.fault.name,
    }


def run_campaign(config: CampaignConfig) -> CampaignResult:
    """Execute a full campaign; deterministic in the config (incl. seed)."""
    return _Campaign(config).run()


# ---------------------------------------------------------------------------
# Reporting


def catalog_to_dict(catalog: FailureCatalog) -> dict:
    return {
        "records": [
            {
                "record_id": r.record_id,
                "class_id": r.key.class_id,
                "category": r.key.category,
                "signature": r.key.signature,
                "scenario": {
                    "class_id": r.scenario.class_id,
                    "targets": r.scenario.plan.sorted_targets(),
                    "fault": r.scenario.plan.fault.name,
                    "seed": r.scenario.plan.seed,
                },
                "test_case": list(r.test_case),
                "symptom": {
                    "category": r.symptom.category,
                    "detail": r.symptom.detail,
                    "message": r.symptom.message,
                },
                "trace_id": r.trace.trace_id,
                "ordinal": r.ordinal,
                "count": r.count,
                "contributing": [[list(t), f] for t, f in r.contributing],
            }
            for r in catalog.records
        ]
    }


def _priorities_to_dict(state: PriorityState) -> dict:
    return {
        "weights": {"w1": state.weights.w1, "w2": state.weights.w2, "w3": state.weights.w3},
        "class_stats": {
            cid: {
                "num_fs": s.num_fs,
                "num_error": s.num_error,
                "num_history": s.num_history,
                "priority": round(class_priority(s, state.weights), 6),
            }
            for cid, s in sorted(state.class_stats.items())
        },
        "fault_stats": {
            f"{cid}:{fname}": {
                "fail_count": c.fail_count,
                "inject_count": c.inject_count,
                "priority": round(fault_priority(c), 6),
            }
            for (cid, fname), c in sorted(state.fault_stats.items())
        },
        "service_stats": {
            svc: {
                "fail_count": c.fail_count,
                "inject_count": c.inject_count,
                "priority": round(service_priority(c), 6),
            }
            for svc, c in sorted(state.service_stats.items())
        },
    }


def report(
    catalog: FailureCatalog,
    log: CampaignLog,
    state: PriorityState,
    registry: ClassRegistry | None = None,
) -> tuple[dict, str]:
    """Machine- and human-readable campaign summaries.

    The JSON document carries reproduction plans for every unique failure
    plus the injected-vs-pruned counts; the text form is a terse table.
    """
    totals = log.pruning_totals()
    doc = {
        "summary": {
            "injections": len(log.entries),
            "unique_failures": len(catalog.records),
            "detected_failures": sum(1 for e in log.entries if e["symptom"] is not None),
            "tolerated": sum(1 for e in log.entries if e["symptom"] is None),
            "pruned_rule1": totals["rule1"],
            "pruned_rule2": totals["rule2"],
        },
        "failures": catalog_to_dict(catalog)["records"],
        "priorities": _priorities_to_dict(state),
    }
    if registry is not None:
        doc["classes"] = {
            cls.id: {
                "footprint": sorted(str(p) for p in cls.footprint),
                "members": [list(m) for m in cls.members],
                "clauses": [sorted(str(p) for p in c) for c in cls.formula.sorted_clauses()]
                if cls.formula
                else [],
                "pending": len(cls.fs),
                "tested": len(cls.history),
            }
            for cls in registry.sorted_classes()
        }

    return doc, render_report_text(doc)


def render_report_text(doc: dict) -> str:
    summary = doc["summary"]
    lines = [
        "campaign report",
        f"  injections:      {summary['injections']}",
        f"  unique failures: {summary['unique_failures']}",
        f"  tolerated:       {summary['tolerated']}",
        f"  pruned (rule 1): {summary['pruned_rule1']}",
        f"  pruned (rule 2): {summary['pruned_rule2']}",
        "",
    ]
    if doc["failures"]:
        lines.append("unique failures (with reproduction plans):")
        for r in doc["failures"]:
            targets = ",".join(r["scenario"]["targets"])
            lines.append(
                f"  {r['record_id']}  {r['category']:<19} x{r['count']}  "
                f"fault={r['scenario']['fault']} targets={{{targets}}} "
                f"seed={r['scenario']['seed']} test_case={r['test_case'][0]}[{r['test_case'][1]}]"
            )
    else:
        lines.append("no failures found.")
    return "\n".join(lines) + "\n"
