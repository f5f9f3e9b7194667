"""faultweave: feedback-guided, lineage-driven fault injection.

Finds fault-tolerance bugs in microservice-style request flows by encoding
observed call graphs as positive-literal clauses, enumerating minimal
injection-point sets, and steering a budgeted injection campaign with
dynamically updated priorities and pruning rules. A deterministic
microservice simulator ships as the default injection target.
"""

from .config import fixture_path, load_campaign_config
from .errors import (
    BaselineError,
    CatalogError,
    ConfigError,
    EncodingError,
    FaultweaveError,
    TargetError,
    TopologyError,
    TraceParseError,
    TraceStructureError,
)
from .explorer import (
    CampaignConfig,
    CampaignLog,
    CampaignResult,
    FailureCatalog,
    baseline,
    report,
    run_campaign,
)
from .fault_model import (
    FailureScenario,
    FaultType,
    InjectionPlan,
    PrimitiveFault,
    build_catalog,
    expand,
    scenarios_for,
)
from .feedback import (
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
    LineageFormula,
    brute_force_solutions,
    conjoin,
    encode,
    minimal_solutions,
)
from .oracle import FailureKey, FailureSymptom, OracleConfig, detect, identity
from .reduction import PropagationPath, apply_rule1, apply_rule2, extract_propagation
from .sim_target import (
    SimulatorTarget,
    Target,
    TargetOutcome,
    Topology,
    execute,
    load_topology,
)
from .trace_model import (
    Assertion,
    ClassRegistry,
    ExecutionTrace,
    Invocation,
    RequestClass,
    ResponseRecord,
    ServiceEndpoint,
    TestCase,
    TestStep,
    build_native,
    classify,
    footprint,
    ingest_zipkin,
    serialize_trace,
)

__version__ = "0.1.0"
