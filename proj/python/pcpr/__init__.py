"""Conditional-probability representations for high-cardinality categoricals."""

from ._pcpr import (  # noqa: F401
    ConfigError,
    CprTable,
    Error,
    NumericError,
    ShapeError,
    __version__,
    gradcheck,
    propagate_labels,
    run_experiment,
    synthesize,
    validate_config,
)

__all__ = [
    "ConfigError",
    "CprTable",
    "Error",
    "NumericError",
    "ShapeError",
    "gradcheck",
    "propagate_labels",
    "run_experiment",
    "synthesize",
    "validate_config",
]
