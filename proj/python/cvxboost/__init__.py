"""Gradient boosting as convex optimization, with per-iteration certificates."""

from ._cvxboost import (
    AssumptionError,
    CapacityError,
    CertificateError,
    ConfigError,
    DimensionError,
    Error,
    FitResult,
    Loss,
    Model,
    ParseError,
    SchemaError,
    Trace,
    UnboundedError,
    UnsupportedGenerator,
    bayes_reference,
    check_assumptions,
    check_schedule,
    fit,
    run_consistency,
    verify_trace,
)

__all__ = [name for name in dir() if not name.startswith("_")]
