"""Lineage formulas and minimal injection-point sets.

Each observed successful execution path becomes one clause: the set of
endpoints whose cooperation produced the response. A candidate bug trigger
is a set of injection points that intersects every clause — a hitting set.
All clauses are positive-literal, so the minimal models of the conjunction
are exactly the set-inclusion-minimal hitting sets, which a small
branch-and-bound enumerator computes natively (no external solver).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable

from .errors import EncodingError
from .trace_model import ExecutionTrace, ServiceEndpoint, footprint

Clause = frozenset[ServiceEndpoint]
Solution = frozenset[ServiceEndpoint]

DEFAULT_MAX_CARDINALITY = 4
BRUTE_FORCE_POINT_LIMIT = 20


def _point_names(points: Iterable[ServiceEndpoint]) -> tuple[str, ...]:
    return tuple(sorted(str(p) for p in points))


@dataclass(frozen=True)
class LineageFormula:
    """A conjunction of clauses with the subsumption invariant maintained.

    No clause is a superset of another: conjoining {A} into {{A,B}} leaves
    only {A}, since any set hitting {A} hits {A,B} too.
    """

    clauses: frozenset[Clause] = frozenset()

    @classmethod
    def from_clauses(cls, clauses: Iterable[Clause]) -> "LineageFormula":
        kept: list[Clause] = []
        for clause in clauses:
            if not clause:
                raise EncodingError("clauses must be non-empty")
            if any(existing <= clause for existing in kept):
                continue
            kept = [existing for existing in kept if not clause <= existing]
            kept.append(frozenset(clause))
        return cls(frozenset(kept))

    @property
    def points(self) -> frozenset[ServiceEndpoint]:
        out: set[ServiceEndpoint] = set()
        for clause in self.clauses:
            out |= clause
        return frozenset(out)

    def sorted_clauses(self) -> list[Clause]:
        return sorted(self.clauses, key=lambda c: (len(c), _point_names(c)))

    def __len__(self) -> int:
        return len(self.clauses)


def encode(trace: ExecutionTrace, excluded: frozenset[ServiceEndpoint] = frozenset()) -> Clause:
    """Encode a successful trace as a clause: its footprint minus `excluded`.

    `excluded` supports dropping the user-facing entry endpoint when a
    target's entry point is not an interesting injection site.
    """
    clause = footprint(trace) - excluded
    if not clause:
        raise EncodingError(
            f"trace {trace.trace_id}: clause is empty after excluding {_point_names(excluded)}"
        )
    return clause


def conjoin(formula: LineageFormula, clause: Clause) -> LineageFormula:
    """Add a clause, restoring the subsumption invariant."""
    if not clause:
        raise EncodingError("cannot conjoin an empty clause")
    return LineageFormula.from_clauses(list(formula.clauses) + [clause])


def minimal_solutions(
    formula: LineageFormula, max_cardinality: int = DEFAULT_MAX_CARDINALITY
) -> list[Solution]:
    """All set-inclusion-minimal hitting sets with at most `max_cardinality` points.

    Branch-and-bound over the points in lexicographic name order: each point
    is included (only when it hits a still-unhit clause) or excluded, pruning
    branches that exceed the cardinality bound or leave some clause unreachable
    by the remaining points. A complete assignment is kept only if it is
    irredundant — every chosen point has a clause it alone hits — which for
    the monotone hitting-set property is exactly inclusion-minimality.

    Output order is deterministic: lexicographic by sorted point names.
    """
    if max_cardinality < 1:
        raise ValueError("max_cardinality must be positive")
    clauses = list(formula.clauses)
    if not clauses:
        return []
    points = sorted(formula.points)
    # points remaining at index i and beyond, for the reachability bound
    suffix: list[frozenset[ServiceEndpoint]] = [frozenset()] * (len(points) + 1)
    for i in range(len(points) - 1, -1, -1):
        suffix[i] = suffix[i + 1] | {points[i]}

    results: list[Solution] = []

    def minimal(chosen: frozenset[ServiceEndpoint]) -> bool:
        for p in chosen:
            if any(clause & chosen == {p} for clause in clauses):
                continue
            return False
        return True

    def search(i: int, chosen: tuple[ServiceEndpoint, ...], unhit: list[Clause]) -> None:
        if not unhit:
            candidate = frozenset(chosen)
            if minimal(candidate):
                results.append(candidate)
            return
        if len(chosen) >= max_cardinality or i >= len(points):
            return
        if any(clause.isdisjoint(suffix[i]) for clause in unhit):
            return
        point = points[i]
        if any(point in clause for clause in unhit):
            search(i + 1, chosen + (point,), [c for c in unhit if point not in c])
        search(i + 1, chosen, unhit)

    search(0, (), clauses)
    results.sort(key=_point_names)
    return results


def brute_force_solutions(formula: LineageFormula) -> list[Solution]:
    """Differential-testing oracle: enumerate every subset of the points,
    filter the hitting sets, keep the inclusion-minimal ones.

    Refuses formulas with more than 20 points. Subsets are represented as
    bitmasks so exhaustive enumeration stays cheap; the logic is otherwise
    independent of the branch-and-bound path in :func:`minimal_solutions`.
    """
    points = sorted(formula.points)
    if len(points) > BRUTE_FORCE_POINT_LIMIT:
        raise ValueError(
            f"brute force limited to {BRUTE_FORCE_POINT_LIMIT} points, got {len(points)}"
        )
    if not formula.clauses:
        return []
    index = {p: i for i, p in enumerate(points)}
    clause_masks = [sum(1 << index[p] for p in clause) for clause in formula.clauses]

    hitting = [
        mask for mask in range(1, 1 << len(points)) if all(mask & cm for cm in clause_masks)
    ]
    hitting.sort(key=lambda m: (m.bit_count(), m))
    minimal_masks: list[int] = []
    for mask in hitting:
        if any(kept & mask == kept for kept in minimal_masks):
            continue
        minimal_masks.append(mask)

    results = [
        frozenset(p for p in points if mask & (1 << index[p])) for mask in minimal_masks
    ]
    results.sort(key=_point_names)
    return results


# ---------------------------------------------------------------------------
# Dump format: JSON array of clauses, each an array of "service/endpoint" strings


def formula_to_json(formula: LineageFormula) -> str:
    return json.dumps([list(_point_names(c)) for c in formula.sorted_clauses()])


def formula_from_json(document: str) -> LineageFormula:
    raw = json.loads(document)
    if not isinstance(raw, list):
        raise ValueError("formula dump must be a JSON array of clauses")
    clauses = []
    for clause in raw:
        if not isinstance(clause, list):
            raise ValueError("each clause must be an array of 'service/endpoint' strings")
        clauses.append(frozenset(ServiceEndpoint.parse(p) for p in clause))
    return LineageFormula.from_clauses(clauses)
