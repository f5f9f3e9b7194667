"""Exception hierarchy shared across the engine."""

from __future__ import annotations


class FaultweaveError(Exception):
    """Base class for all engine errors."""


class TraceParseError(FaultweaveError):
    """A trace document could not be parsed or fails schema validation."""


class TraceStructureError(FaultweaveError):
    """A parsed trace violates structural invariants (roots, parents, ids)."""


class EncodingError(FaultweaveError):
    """A trace could not be encoded as a non-empty clause."""


class CatalogError(FaultweaveError):
    """Unknown fault type name."""


class TopologyError(FaultweaveError):
    """A topology document is invalid (cycles, dangling targets, schema)."""


class TargetError(FaultweaveError):
    """The target could not execute a step (e.g. unknown entry endpoint)."""


class ConfigError(FaultweaveError):
    """A campaign configuration is invalid."""


class BaselineError(FaultweaveError):
    """The fault-free baseline failed, or the budget cannot cover stage 1."""
