"""Multivariate vehicle-telemetry anomaly detection.

Three-stage pipeline: sliding-window preprocessing of sensor channels,
a dilated causal convolution forecaster predicting the next observation
across all channels, and a Mahalanobis-distance detector over the
prediction errors with a G-mean-selected threshold.
"""

from .datagen import DriveCycleConfig, generate
from .detector import (
    ErrorModel,
    ScoredWindow,
    classify,
    fit_error_model,
    mahalanobis,
    score_windows,
    select_threshold,
)
from .errors import (
    ConfigError,
    DataError,
    EmptyDataError,
    NumericError,
    ParseError,
    SchemaError,
    SingularCovarianceError,
    TcndetectError,
    TrainingDivergedError,
)
from .metrics import (
    ConfusionCounts,
    DetectionReport,
    accuracy,
    build_report,
    confusion_matrix,
    per_scenario_breakdown,
    rates,
    roc_auc,
)
from .pipeline import RunConfig, load_bundle, run_evaluate, run_generate, run_train, save_bundle
from .scenarios import (
    Direction,
    InjectionConfig,
    ScenarioCase,
    assign_scenarios,
    catalog,
    decode_label,
    encode_label,
    inject,
)
from .schema import (
    Channel,
    ChannelFrame,
    ChannelSchema,
    ScalerParams,
    apply_scaler,
    clean,
    default_schema,
    fit_scaler,
    load_csv,
    scaler_from_values,
    write_csv,
)
from .tcn import TcnConfig, TcnModel, dilated_causal_conv, receptive_field, train
from .windowing import (
    SplitSet,
    WindowConfig,
    WindowSet,
    load_windows,
    make_windows,
    save_windows,
    split_windows,
    to_supervised,
)

__version__ = "0.1.0"

__all__ = [
    "Channel",
    "ChannelFrame",
    "ChannelSchema",
    "ConfigError",
    "ConfusionCounts",
    "DataError",
    "DetectionReport",
    "Direction",
    "DriveCycleConfig",
    "EmptyDataError",
    "ErrorModel",
    "InjectionConfig",
    "NumericError",
    "ParseError",
    "RunConfig",
    "ScalerParams",
    "ScenarioCase",
    "SchemaError",
    "ScoredWindow",
    "SingularCovarianceError",
    "SplitSet",
    "TcnConfig",
    "TcnModel",
    "TcndetectError",
    "TrainingDivergedError",
    "WindowConfig",
    "WindowSet",
    "accuracy",
    "apply_scaler",
    "assign_scenarios",
    "build_report",
    "catalog",
    "classify",
    "clean",
    "confusion_matrix",
    "decode_label",
    "default_schema",
    "dilated_causal_conv",
    "encode_label",
    "fit_error_model",
    "fit_scaler",
    "generate",
    "inject",
    "load_bundle",
    "load_csv",
    "load_windows",
    "mahalanobis",
    "make_windows",
    "per_scenario_breakdown",
    "rates",
    "receptive_field",
    "roc_auc",
    "run_evaluate",
    "run_generate",
    "run_train",
    "save_bundle",
    "save_windows",
    "scaler_from_values",
    "score_windows",
    "select_threshold",
    "split_windows",
    "to_supervised",
    "train",
    "write_csv",
]
