"""Python bindings for the SlowFast toolkit (sfkit)."""

from ._core import (
    ConfigError,
    DataError,
    InvalidArgument,
    NotFoundError,
    PredictionRecord,
    SfkError,
    StructuralError,
    TriageStore,
    accuracy,
    allocate_counts,
    argmax,
    combine_view_scores,
    confusion_matrix,
    error_rate,
    feature_shapes,
    make_splits,
    preset,
    preset_names,
    read_predictions,
    run_cli,
    validate_config,
)

__all__ = [
    "ConfigError",
    "DataError",
    "InvalidArgument",
    "NotFoundError",
    "PredictionRecord",
    "SfkError",
    "StructuralError",
    "TriageStore",
    "accuracy",
    "allocate_counts",
    "argmax",
    "combine_view_scores",
    "confusion_matrix",
    "error_rate",
    "feature_shapes",
    "make_splits",
    "preset",
    "preset_names",
    "read_predictions",
    "run_cli",
    "validate_config",
]
