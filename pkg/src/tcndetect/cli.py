"""Command-line front end.

Subcommands: ``generate`` (synthetic fleet CSV), ``train`` (fit the
forecaster and error model, write the bundle), ``evaluate`` (inject
anomalies, score, threshold, write report artifacts), ``report``
(pretty-print a saved report), ``catalog`` (dump the scenario catalog).

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
failure. On error, one machine-parseable JSON line goes to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from contextlib import contextmanager
from pathlib import Path

from .errors import ConfigError, DataError, NumericError
from .metrics import DetectionReport
from .pipeline import RunConfig, run_evaluate, run_generate, run_train
from .scenarios import catalog

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="run configuration JSON")
    common.add_argument("--seed", type=int, help="override the global seed")
    common.add_argument("--out", type=Path, help="override the output directory")
    common.add_argument(
        "--threads", type=int, default=0,
        help="cap BLAS threads (0 = automatic)",
    )
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = argparse.ArgumentParser(
        prog="tcndetect",
        description="Vehicle sensor-channel anomaly detection pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common], help="write a synthetic fleet CSV")
    sub.add_parser("train", parents=[common], help="train the forecaster and write the bundle")
    evaluate = sub.add_parser("evaluate", parents=[common], help="inject, score and report")
    evaluate.add_argument("--bundle", type=Path, help="bundle path override")
    report = sub.add_parser("report", parents=[common], help="pretty-print a saved report")
    report.add_argument("path", nargs="?", type=Path, help="report JSON (default from config)")
    sub.add_parser("catalog", parents=[common], help="dump the scenario catalog as JSON")
    return parser


def _load_config(args: argparse.Namespace) -> RunConfig:
    doc: dict = {}
    if args.config is not None:
        try:
            doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {args.config}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.out is not None:
        doc["out_dir"] = str(args.out)
    return RunConfig.from_json(doc)


@contextmanager
def _thread_limit(n: int):
    if n <= 0:
        yield
        return
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        logging.getLogger(__name__).warning(
            "--threads requested but threadpoolctl is not installed; ignoring"
        )
        yield
        return
    with threadpool_limits(limits=n):
        yield


def _cmd_generate(cfg: RunConfig) -> None:
    path, rows = run_generate(cfg)
    print(f"wrote {rows} rows -> {path}")


def _cmd_train(cfg: RunConfig) -> None:
    model, _, bundle_path = run_train(cfg)
    best_val = min(model.history["val_loss"])
    print(f"final validation loss: {best_val:.6g}")
    print(f"bundle -> {bundle_path}")


def _cmd_evaluate(cfg: RunConfig, bundle: Path | None) -> None:
    report, files = run_evaluate(cfg, bundle_path=bundle)
    c = report.confusion
    print(
        f"auc {report.auc:.4f}  accuracy {report.accuracy:.4f}  "
        f"threshold {report.threshold:.6g}  "
        f"tp {c.tp} fp {c.fp} tn {c.tn} fn {c.fn}"
    )
    print(f"report -> {files['report']}")


def _cmd_report(cfg: RunConfig, path: Path | None) -> None:
    source = path if path is not None else cfg.path("report")
    if not Path(source).exists():
        raise DataError(f"report not found: {source}")
    report = DetectionReport.load(source)
    c = report.confusion
    print(f"report: {source}")
    print(f"  threshold      {report.threshold:.6g} (g-mean {report.g_mean:.4f})")
    print(f"  auc            {report.auc:.4f}")
    print(f"  accuracy       {report.accuracy:.4f}")
    print(f"  tpr / fpr      {report.tpr:.4f} / {report.fpr:.4f}")
    print("  confusion      predicted-normal  predicted-anomaly")
    print(f"    actual-normal   {c.tn:>12d}  {c.fp:>12d}")
    print(f"    actual-anomaly  {c.fn:>12d}  {c.tp:>12d}")
    for scenario, entry in sorted(report.per_scenario.items()):
        print(
            f"  scenario {scenario}: injected {entry['injected']}, "
            f"detected {entry['detected']}, missed {entry['missed']}"
        )


def _cmd_catalog() -> None:
    doc = [
        {
            "scenario": case.scenario_id,
            "case": case.case_id,
            "directions": {name: d.value for name, d in case.directions.items()},
            "is_anomaly": case.is_anomaly,
        }
        for case in catalog()
    ]
    print(json.dumps(doc, indent=2))


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=logging.INFO,
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        with _thread_limit(args.threads):
            if args.command == "catalog":
                _cmd_catalog()
                return EXIT_OK
            cfg = _load_config(args)
            if args.command == "generate":
                _cmd_generate(cfg)
            elif args.command == "train":
                _cmd_train(cfg)
            elif args.command == "evaluate":
                _cmd_evaluate(cfg, args.bundle)
            elif args.command == "report":
                _cmd_report(cfg, args.path)
        return EXIT_OK
    except ConfigError as exc:
        _emit_error("config", exc)
        return EXIT_CONFIG
    except DataError as exc:
        _emit_error("data", exc)
        return EXIT_DATA
    except NumericError as exc:
        _emit_error("numeric", exc)
        return EXIT_NUMERIC


def _emit_error(category: str, exc: Exception) -> None:
    print(json.dumps({"error": category, "message": str(exc)}), file=sys.stderr)


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
