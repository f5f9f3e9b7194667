"""Command-line entry point.

Subcommands: run a campaign, solve injection points from trace files,
replay a cataloged failure, re-render a report, validate a config.
Exit codes are a stable contract: run exits 0 with no failures, 2 when
failures were found, 1 on configuration/target errors; replay exits 0 when
the failure reproduces, 3 when it does not.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path

from .config import coerce, load_campaign_config
from .errors import FaultweaveError
from .explorer import render_report_text, report, run_campaign
from .fault_model import InjectionPlan
from .lineage import LineageFormula, conjoin, encode, formula_to_json, minimal_solutions
from .oracle import detect, identity
from .sim_target import SimulatorTarget
from .trace_model import ServiceEndpoint, build_native, ingest_zipkin, serialize_trace


@dataclass(frozen=True)
class CommandInvocation:
    command: str
    config: Path | None
    overrides: tuple[tuple[str, object], ...]
    out_dir: Path


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="faultweave",
        description="feedback-guided, lineage-driven fault injection",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser, config_required: bool = True) -> None:
        p.add_argument("--config", type=Path, required=config_required, help="campaign config file")
        p.add_argument("--out", type=Path, default=Path("fw-out"), help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the campaign seed")
        p.add_argument("--budget", type=int, default=None, help="override the injection budget")
        p.add_argument(
            "--set",
            dest="sets",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override a config key (dotted path), repeatable",
        )
        p.add_argument(
            "--no-reduction",
            action="store_true",
            help="disable both pruning rules (for differential runs)",
        )
        p.add_argument(
            "--rules",
            choices=["rule1", "rule2", "both"],
            default=None,
            help="enable only the given pruning rule(s)",
        )

    run_p = sub.add_parser("run", help="run a full campaign")
    add_common(run_p)

    solve_p = sub.add_parser("solve", help="print minimal injection-point sets for traces")
    solve_p.add_argument("traces", nargs="+", type=Path, help="native or Zipkin trace files")
    solve_p.add_argument("--max-cardinality", type=int, default=4)
    solve_p.add_argument(
        "--exclude",
        action="append",
        default=[],
        metavar="SERVICE/ENDPOINT",
        help="endpoint to exclude from clauses, repeatable",
    )
    solve_p.add_argument("--dump-formula", action="store_true", help="also print the formula JSON")

    replay_p = sub.add_parser("replay", help="re-execute a cataloged failure")
    replay_p.add_argument("record_id", help="catalog record id, e.g. f-01")
    add_common(replay_p)

    report_p = sub.add_parser("report", help="re-render the report of a prior run")
    report_p.add_argument("--out", type=Path, default=Path("fw-out"))

    validate_p = sub.add_parser("validate", help="validate a campaign config")
    validate_p.add_argument("--config", type=Path, required=True)
    return parser


def _collect_overrides(args: argparse.Namespace) -> list[tuple[str, object]]:
    overrides: list[tuple[str, object]] = []
    for item in args.sets:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise FaultweaveError(f"--set expects KEY=VALUE, got {item!r}")
        overrides.append((key, coerce(value)))
    if args.seed is not None:
        overrides.append(("seed", args.seed))
    if args.budget is not None:
        overrides.append(("budget", args.budget))
    if args.no_reduction:
        overrides.append(("reduction.rule1", False))
        overrides.append(("reduction.rule2", False))
    elif args.rules is not None:
        overrides.append(("reduction.rule1", args.rules in ("rule1", "both")))
        overrides.append(("reduction.rule2", args.rules in ("rule2", "both")))
    return overrides


def _cmd_run(args: argparse.Namespace) -> int:
    inv = CommandInvocation("run", args.config, tuple(_collect_overrides(args)), args.out)
    config = load_campaign_config(inv.config, list(inv.overrides))
    result = run_campaign(config)
    doc, text = report(result.catalog, result.log, result.state, result.registry)

    out = inv.out_dir
    out.mkdir(parents=True, exist_ok=True)
    (out / "campaign_log.jsonl").write_text(result.log.to_jsonlines())
    catalog_doc = {"records": doc["failures"]}
    (out / "catalog.json").write_text(json.dumps(catalog_doc, sort_keys=True, indent=2) + "\n")
    (out / "report.json").write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    (out / "report.txt").write_text(text)
    traces_dir = out / "traces"
    traces_dir.mkdir(exist_ok=True)
    for record in result.catalog.records:
        (traces_dir / f"{record.record_id}.json").write_text(serialize_trace(record.trace) + "\n")

    sys.stdout.write(text)
    return 2 if result.catalog.records else 0


def _load_traces(path: Path) -> list:
    text = path.read_text()
    if text.lstrip().startswith("["):
        return ingest_zipkin(text)
    return [build_native(text)]


def _cmd_solve(args: argparse.Namespace) -> int:
    excluded = frozenset(ServiceEndpoint.parse(e) for e in args.exclude)
    formula = LineageFormula()
    for path in args.traces:
        for trace in _load_traces(path):
            formula = conjoin(formula, encode(trace, excluded))
    solutions = minimal_solutions(formula, args.max_cardinality)
    for solution in solutions:
        print("{" + ", ".join(sorted(str(p) for p in solution)) + "}")
    if args.dump_formula:
        print(formula_to_json(formula))
    return 0


def _cmd_replay(args: argparse.Namespace) -> int:
    inv = CommandInvocation("replay", args.config, tuple(_collect_overrides(args)), args.out)
    catalog_path = inv.out_dir / "catalog.json"
    if not catalog_path.exists():
        print(f"no catalog at {catalog_path}", file=sys.stderr)
        return 1
    records = json.loads(catalog_path.read_text())["records"]
    record = next((r for r in records if r["record_id"] == args.record_id), None)
    if record is None:
        print(f"unknown record id {args.record_id!r}", file=sys.stderr)
        return 1

    config = load_campaign_config(inv.config, list(inv.overrides))
    fault = config.catalog()[record["scenario"]["fault"]]
    plan = InjectionPlan(
        targets=frozenset(ServiceEndpoint.parse(t) for t in record["scenario"]["targets"]),
        fault=fault,
        seed=record["scenario"]["seed"],
    )
    tc_id, step_idx = record["test_case"]
    step = config.step((tc_id, step_idx))
    outcome = SimulatorTarget(config.topology).execute(step, plan)
    assertions = [step.assertion] if step.assertion else []
    symptom = detect(outcome, assertions, config.oracle)
    if symptom is None:
        print("scenario no longer fails", file=sys.stderr)
        return 3
    key = identity(record["class_id"], symptom)
    if key.category == record["category"] and key.signature == record["signature"]:
        print(f"{args.record_id}: reproduced {key.category}({symptom.detail})")
        return 0
    print(
        f"{args.record_id}: failure differs: got {key.category}({symptom.detail})",
        file=sys.stderr,
    )
    return 3


def _cmd_report(args: argparse.Namespace) -> int:
    report_path = args.out / "report.json"
    if not report_path.exists():
        print(f"no report at {report_path}", file=sys.stderr)
        return 1
    sys.stdout.write(render_report_text(json.loads(report_path.read_text())))
    return 0


def _cmd_validate(args: argparse.Namespace) -> int:
    config = load_campaign_config(args.config)
    services = len(config.topology.services)
    print(
        f"configuration ok: {len(config.test_cases)} test case(s), "
        f"{services} service(s), faults={list(config.fault_names)}, budget={config.budget}"
    )
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "solve": _cmd_solve,
        "replay": _cmd_replay,
        "report": _cmd_report,
        "validate": _cmd_validate,
    }
    try:
        return handlers[args.command](args)
    except FaultweaveError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (KeyError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
