"""End-to-end orchestration: run configuration, train and evaluate
stages, and the model bundle format.

The bundle is a single versioned JSON document holding the forecaster
config and weights, the scaler the model was trained with, the fitted
error distribution, the training history, and a snapshot of the run
configuration. Loading a bundle and running the forecaster reproduces
the saved model's outputs exactly.
"""

from __future__ import annotations

import json
import logging
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import datagen, scenarios
from .detector import ErrorModel, ScoredWindow, classify, fit_error_model, score_windows, select_threshold
from .errors import ConfigError, DataError, TcndetectError
from .metrics import DetectionReport, build_report, write_roc_csv
from .schema import (
    ChannelFrame,
    ChannelSchema,
    ScalerParams,
    clean,
    default_schema,
    fit_scaler,
    load_csv,
    scaler_from_values,
    write_csv,
)
from .tcn import TcnConfig, TcnModel, train
from .windowing import SplitSet, WindowConfig, WindowSet, make_windows, split_windows, to_supervised

logger = logging.getLogger(__name__)

BUNDLE_FORMAT_VERSION = 1

SCALER_SCOPES = ("train_only", "full")
SPLIT_MODES = ("random", "chronological")
THRESHOLD_SOURCES = ("test", "calibration")

# sub-seed derivation offsets from the global seed (applied when a
# section does not pin its own seed)
_SEED_DATAGEN = 1
_SEED_WINDOW = 2
_SEED_TCN = 3
_SEED_INJECTION = 4
_SEED_CALIBRATION = 5


@dataclass
class RunConfig:
    """Aggregate configuration for the full pipeline.

    ``tcn`` holds forecaster hyperparameter overrides; the channel
    counts are filled in from the schema when the model is built. All
    section seeds are derived from the global ``seed`` unless a section
    sets its own.
    """

    seed: int = 0
    out_dir: str = "out"
    data_csv: str = "fleet.csv"
    bundle: str = "bundle.json"
    report: str = "report.json"
    roc_csv: str = "roc.csv"
    manifest: str = "injections.jsonl"
    scaler_scope: str = "train_only"
    split_mode: str = "random"
    threshold_source: str = "test"
    datagen: datagen.DriveCycleConfig = field(default_factory=datagen.DriveCycleConfig)
    window: WindowConfig = field(default_factory=WindowConfig)
    injection: scenarios.InjectionConfig = field(default_factory=scenarios.InjectionConfig)
    tcn: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.scaler_scope not in SCALER_SCOPES:
            raise ConfigError(f"scaler_scope must be one of {SCALER_SCOPES}")
        if self.split_mode not in SPLIT_MODES:
            raise ConfigError(f"split_mode must be one of {SPLIT_MODES}")
        if self.threshold_source not in THRESHOLD_SOURCES:
            raise ConfigError(f"threshold_source must be one of {THRESHOLD_SOURCES}")

    # -- paths ----------------------------------------------------------

    def path(self, name: str) -> Path:
        raw = Path(getattr(self, name))
        return raw if raw.is_absolute() else Path(self.out_dir) / raw

    # -- (de)serialization -----------------------------------------------

    @classmethod
    def from_json(cls, doc: dict) -> "RunConfig":
        doc = dict(doc)
        seed = int(doc.pop("seed", 0))

        def section(key: str, default_seed: int) -> dict:
            sec = dict(doc.pop(key, {}))
            sec.setdefault("seed", default_seed)
            return sec

        try:
            dg = datagen.DriveCycleConfig(**section("datagen", seed + _SEED_DATAGEN))
            win = WindowConfig(**section("window", seed + _SEED_WINDOW))
            inj = scenarios.InjectionConfig(**section("injection", seed + _SEED_INJECTION))
        except TypeError as exc:
            raise ConfigError(f"invalid config section: {exc}") from exc
        tcn_overrides = dict(doc.pop("tcn", {}))
        tcn_overrides.setdefault("seed", seed + _SEED_TCN)

        known = {
            "out_dir", "data_csv", "bundle", "report", "roc_csv", "manifest",
            "scaler_scope", "split_mode", "threshold_source",
        }
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(
            seed=seed,
            datagen=dg,
            window=win,
            injection=inj,
            tcn=tcn_overrides,
            **{k: doc[k] for k in known if k in doc},
        )

    def to_json(self) -> dict:
        dg = self.datagen
        win = self.window
        inj = self.injection
        return {
            "seed": self.seed,
            "out_dir": self.out_dir,
            "data_csv": self.data_csv,
            "bundle": self.bundle,
            "report": self.report,
            "roc_csv": self.roc_csv,
            "manifest": self.manifest,
            "scaler_scope": self.scaler_scope,
            "split_mode": self.split_mode,
            "threshold_source": self.threshold_source,
            "datagen": {
                "duration_s": dg.duration_s,
                "seed": dg.seed,
                "noise_scale": dg.noise_scale,
                "gap_rate": dg.gap_rate,
                "idle_segments": [list(seg) for seg in dg.idle_segments],
            },
            "window": {
                "w": win.w,
                "stride": win.stride,
                "dr": win.dr,
                "dt": win.dt,
                "split_fraction": win.split_fraction,
                "seed": win.seed,
            },
            "injection": {
                "rate": inj.rate,
                "magnitudes": list(inj.magnitudes),
                "magnitude_mode": inj.magnitude_mode,
                "seed": inj.seed,
            },
            "tcn": dict(self.tcn),
        }


@contextmanager
def _stage(name: str):
    """Attach the failing stage's name to propagated toolkit errors."""
    try:
        yield
    except TcndetectError as exc:
        raise type(exc)(f"[{name}] {exc}") from exc


# -- bundle ---------------------------------------------------------------


def save_bundle(
    path: str | Path,
    model: TcnModel,
    error_model: ErrorModel,
    run_config: RunConfig,
) -> None:
    doc = {
        "version": BUNDLE_FORMAT_VERSION,
        **model.to_json(),
        "detector": error_model.to_json(),
        "run_config": run_config.to_json(),
    }
    Path(path).write_text(json.dumps(doc, indent=2), encoding="utf-8")


def load_bundle(path: str | Path) -> tuple[TcnModel, ErrorModel, dict]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DataError(f"bundle not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"bundle is not valid JSON: {path}: {exc}") from None
    if doc.get("version") != BUNDLE_FORMAT_VERSION:
        raise DataError(f"unsupported bundle version {doc.get('version')!r}")
    model = TcnModel.from_json(doc)
    error_model = ErrorModel.from_json(doc["detector"])
    return model, error_model, doc.get("run_config", {})


# -- stages ---------------------------------------------------------------


def run_generate(cfg: RunConfig, schema: ChannelSchema | None = None) -> tuple[Path, int]:
    """Generate the synthetic fleet CSV; returns (path, row count)."""
    schema = schema or default_schema()
    frame = datagen.generate(cfg.datagen, schema)
    out = cfg.path("data_csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(frame, out)
    logger.info("generated %d rows -> %s", frame.n_rows, out)
    return out, frame.n_rows


def _ingest(cfg: RunConfig, schema: ChannelSchema) -> ChannelFrame:
    with _stage("ingest"):
        path = cfg.path("data_csv")
        if not path.exists():
            raise DataError(f"input CSV not found: {path}")
        return clean(load_csv(path, schema))


def _window_and_split(cfg: RunConfig, frame: ChannelFrame) -> SplitSet:
    with _stage("window"):
        ws = make_windows(frame, cfg.window)
        if ws.n_windows == 0:
            raise DataError("no valid windows produced from the input frame")
        return split_windows(ws, cfg.window, mode=cfg.split_mode)


def _fit_scope_scaler(cfg: RunConfig, frame: ChannelFrame, split: SplitSet) -> ScalerParams:
    if cfg.scaler_scope == "train_only":
        return scaler_from_values(frame.schema.feature_names, split.train.data)
    return fit_scaler(frame)


def _scaled_supervised(ws: WindowSet, params: ScalerParams) -> tuple[np.ndarray, np.ndarray]:
    scaled = WindowSet(
        data=params.transform(ws.data),
        start_timestamps=ws.start_timestamps,
        labels=ws.labels,
    )
    return to_supervised(scaled)


def run_train(cfg: RunConfig, schema: ChannelSchema | None = None) -> tuple[TcnModel, ErrorModel, Path]:
    """Ingest, window, split, train, fit the error model, write bundle."""
    schema = schema or default_schema()
    frame = _ingest(cfg, schema)
    split = _window_and_split(cfg, frame)
    with _stage("scale"):
        params = _fit_scope_scaler(cfg, frame, split)
        x_trn, y_trn = _scaled_supervised(split.train, params)

    with _stage("train"):
        try:
            tcn_cfg = TcnConfig(
                input_channels=schema.n_features,
                output_units=schema.n_features,
                **cfg.tcn,
            )
        except TypeError as exc:
            raise ConfigError(f"invalid tcn config: {exc}") from exc
        model = TcnModel.build(tcn_cfg, scaler=params)
        train(model, x_trn, y_trn)

    with _stage("error-model"):
        errors = y_trn - model.predict(x_trn)
        error_model = fit_error_model(errors)

    bundle_path = cfg.path("bundle")
    bundle_path.parent.mkdir(parents=True, exist_ok=True)
    save_bundle(bundle_path, model, error_model, cfg)
    logger.info("bundle written -> %s", bundle_path)
    return model, error_model, bundle_path


def _check_bundle_compatibility(cfg: RunConfig, snapshot: dict, schema: ChannelSchema, model: TcnModel) -> None:
    if model.scaler is None or tuple(model.scaler.names) != schema.feature_names:
        raise DataError("bundle scaler does not match the channel schema")
    if snapshot:
        saved = RunConfig.from_json(snapshot)
        if saved.window != cfg.window or saved.split_mode != cfg.split_mode:
            raise ConfigError(
                "window/split configuration differs from the one the bundle "
                "was trained with; the test split would not be reproducible"
            )
        if saved.data_csv != cfg.data_csv:
            logger.warning(
                "evaluating with data_csv %r but bundle was trained on %r",
                cfg.data_csv, saved.data_csv,
            )


def run_evaluate(
    cfg: RunConfig,
    bundle_path: str | Path | None = None,
    schema: ChannelSchema | None = None,
) -> tuple[DetectionReport, dict[str, Path]]:
    """Reproduce the test split, inject anomalies, score, select the
    threshold, classify, and write the report artifacts."""
    schema = schema or default_schema()
    with _stage("bundle"):
        model, error_model, snapshot = load_bundle(bundle_path or cfg.path("bundle"))
        _check_bundle_compatibility(cfg, snapshot, schema, model)

    frame = _ingest(cfg, schema)
    split = _window_and_split(cfg, frame)
    with _stage("scale"):
        x_tst, y_tst = _scaled_supervised(split.test, model.scaler)

    with _stage("inject"):
        y_injected, labels, manifest = scenarios.inject(y_tst, schema, cfg.injection)

    with _stage("score"):
        errors = y_injected - model.predict(x_tst)
        scored = score_windows(errors, labels, error_model)

    with _stage("threshold"):
        if cfg.threshold_source == "test":
            threshold = select_threshold(scored)
            evaluated = classify(scored, threshold)
            manifest_used = manifest
        else:
            rng = np.random.default_rng(cfg.seed + _SEED_CALIBRATION)
            perm = rng.permutation(len(scored))
            half = len(scored) // 2
            calibration = [scored[i] for i in perm[:half]]
            held_out = [scored[i] for i in perm[half:]]
            threshold = select_threshold(calibration)
            evaluated = classify(held_out, threshold)
            keep = {s.index for s in held_out}
            manifest_used = [rec for rec in manifest if rec["window_index"] in keep]

    with _stage("report"):
        report = build_report(
            evaluated,
            manifest_used,
            threshold,
            lam=error_model.lam,
            extras={
                "n_test_windows": len(scored),
                "n_evaluated": len(evaluated),
                "n_injected": len(manifest),
                "threshold_source": cfg.threshold_source,
            },
        )

    out_report = cfg.path("report")
    out_report.parent.mkdir(parents=True, exist_ok=True)
    report.save(out_report)
    write_roc_csv(report.roc, cfg.path("roc_csv"))
    scenarios.write_manifest(manifest, cfg.path("manifest"))
    logger.info(
        "evaluation: auc %.4f, accuracy %.4f, threshold %.4g -> %s",
        report.auc, report.accuracy, report.threshold, out_report,
    )
    return report, {
        "report": out_report,
        "roc_csv": cfg.path("roc_csv"),
        "manifest": cfg.path("manifest"),
    }


def score_targets(
    model: TcnModel,
    error_model: ErrorModel,
    inputs: np.ndarray,
    targets: np.ndarray,
    labels: np.ndarray,
) -> list[ScoredWindow]:
    """Convenience scorer for pre-windowed, pre-scaled data."""
    errors = np.asarray(targets, dtype=np.float64) - model.predict(inputs)
    return score_windows(errors, labels, error_model)
