"""Campaign configuration files and override plumbing.

One JSON document describes a whole campaign: topology, test cases, fault
subset, oracle, feedback weights, budget and seed. Values can be overridden
by FW_-prefixed environment variables (FW_ORACLE__LATENCY_BOUND_MS maps to
oracle.latency_bound_ms) and by repeatable --set key=value flags.
"""

from __future__ import annotations

import json
import os
from importlib.resources import files
from pathlib import Path
from typing import Any, Mapping

from .errors import ConfigError
from .explorer import CampaignConfig
from .feedback import Weights
from .oracle import OracleConfig
from .sim_target import Topology, load_topology, topology_from_dict
from .trace_model import Assertion, ServiceEndpoint, TestCase, TestStep

KNOWN_KEYS = {
    "topology",
    "testcases",
    "faults",
    "fault_overrides",
    "oracle",
    "feedback",
    "budget",
    "seed",
    "max_cardinality",
    "exclude_entry",
    "reduction",
}

ENV_PREFIX = "FW_"


def fixture_path(name: str) -> Path:
    """Path of a bundled fixture file (topologies, campaign configs, traces)."""
    return Path(str(files("faultweave") / "fixtures" / name))


def coerce(text: str) -> Any:
    """Parse an override value as JSON when possible, else keep the string."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def set_dotted(doc: dict, dotted: str, value: Any) -> None:
    parts = dotted.split(".")
    node = doc
    for part in parts[:-1]:
        nxt = node.get(part)
        if not isinstance(nxt, dict):
            nxt = {}
            node[part] = nxt
        node = nxt
    node[parts[-1]] = value


def env_overrides(env: Mapping[str, str] | None = None) -> list[tuple[str, Any]]:
    env = os.environ if env is None else env
    out = []
    for key in sorted(env):
        if key.startswith(ENV_PREFIX) and len(key) > len(ENV_PREFIX):
            dotted = key[len(ENV_PREFIX) :].lower().replace("__", ".")
            out.append((dotted, coerce(env[key])))
    return out


def _parse_assertion(raw: Any, where: str) -> Assertion | None:
    if raw is None:
        return None
    if not isinstance(raw, dict) or "kind" not in raw or "argument" not in raw:
        raise ConfigError(f"{where}: assertion needs 'kind' and 'argument'")
    try:
        return Assertion(kind=raw["kind"], argument=raw["argument"])
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _parse_test_cases(raw: Any) -> tuple[TestCase, ...]:
    if not isinstance(raw, list) or not raw:
        raise ConfigError("testcases must be a non-empty array")
    cases = []
    for tc in raw:
        tc_id = tc.get("id")
        if not tc_id:
            raise ConfigError("every test case needs an id")
        steps = []
        for i, step in enumerate(tc.get("steps", [])):
            where = f"testcases[{tc_id}].steps[{i}]"
            try:
                entry = ServiceEndpoint.parse(step["entry"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigError(f"{where}: {exc}") from exc
            params = tuple(sorted((str(k), str(v)) for k, v in (step.get("params") or {}).items()))
            steps.append(
                TestStep(
                    entry=entry,
                    params=params,
                    assertion=_parse_assertion(step.get("assert"), where),
                )
            )
        try:
            cases.append(TestCase(id=tc_id, steps=tuple(steps)))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    return tuple(cases)


def _parse_topology(raw: Any, base_dir: Path) -> Topology:
    if isinstance(raw, str):
        path = Path(raw)
        if not path.is_absolute():
            path = base_dir / path
        if not path.exists():
            raise ConfigError(f"topology file not found: {path}")
        return load_topology(path.read_text())
    if isinstance(raw, dict):
        return topology_from_dict(raw)
    raise ConfigError("topology must be a file path or an inline object")


def config_from_dict(doc: dict, base_dir: Path = Path(".")) -> CampaignConfig:
    unknown = set(doc) - KNOWN_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "topology" not in doc:
        raise ConfigError("config needs a topology")
    topology = _parse_topology(doc["topology"], base_dir)
    test_cases = _parse_test_cases(doc.get("testcases"))
    for tc in test_cases:
        for i, step in enumerate(tc.steps):
            if topology.endpoint(step.entry) is None:
                raise ConfigError(
                    f"testcases[{tc.id}].steps[{i}]: entry {step.entry} not in topology"
                )

    oracle_raw = doc.get("oracle") or {}
    try:
        oracle = OracleConfig(
            latency_bound_ms=float(oracle_raw.get("latency_bound_ms", 2000.0)),
            keywords=tuple(oracle_raw.get("keywords", ("error", "exception"))),
        )
    except ValueError as exc:
        raise ConfigError(f"oracle: {exc}") from exc

    feedback_raw = doc.get("feedback") or {}
    weights_raw = feedback_raw.get("weights") or {}
    try:
        weights = Weights(
            w1=float(weights_raw.get("w1", 1.0)),
            w2=float(weights_raw.get("w2", 1.0)),
            w3=float(weights_raw.get("w3", 1.0)),
        )
    except ValueError as exc:
        raise ConfigError(f"feedback.weights: {exc}") from exc

    reduction = doc.get("reduction") or {}
    return CampaignConfig(
        topology=topology,
        test_cases=test_cases,
        fault_names=tuple(doc.get("faults", ("abort",))),
        budget=int(doc.get("budget", 50)),
        max_cardinality=int(doc.get("max_cardinality", 4)),
        weights=weights,
        oracle=oracle,
        seed=int(doc.get("seed", 0)),
        rule1=bool(reduction.get("rule1", True)),
        rule2=bool(reduction.get("rule2", True)),
        exclude_entry=bool(doc.get("exclude_entry", False)),
        solution_score=feedback_raw.get("solution_score", "mean"),
        fault_overrides=doc.get("fault_overrides"),
    )


def load_campaign_config(
    path: str | Path,
    overrides: list[tuple[str, Any]] | None = None,
    env: Mapping[str, str] | None = None,
) -> CampaignConfig:
    """Load a campaign config file, applying env then explicit overrides."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    for dotted, value in env_overrides(env):
        set_dotted(doc, dotted, value)
    for dotted, value in overrides or []:
        set_dotted(doc, dotted, value)
    return config_from_dict(doc, base_dir=path.parent)
