"""Detection quality metrics: confusion matrix, accuracy, ROC/AUC, and
per-scenario miss breakdown.

The ROC sweeps thresholds over the distinct scores (descending) with
strict-inequality classification, appending the (0,0) and (1,1)
endpoints; trapezoidal AUC over that curve equals the Mann-Whitney pair
statistic with half credit for ties.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .detector import ScoredWindow
from .errors import DataError

REPORT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def confusion_matrix(scored: list[ScoredWindow]) -> ConfusionCounts:
    """Count predictions against ground truth; every window must have a
    predicted label."""
    tp = fp = tn = fn = 0
    for s in scored:
        if s.predicted is None:
            raise DataError(f"window {s.index} has no predicted label")
        if s.is_anomalous:
            tp += s.predicted
            fn += not s.predicted
        else:
            fp += s.predicted
            tn += not s.predicted
    return ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn)


def accuracy(counts: ConfusionCounts) -> float:
    """(TP + TN) / (TP + FP + TN + FN)."""
    if counts.total == 0:
        raise DataError("accuracy is undefined for zero scored windows")
    return (counts.tp + counts.tn) / counts.total


def rates(counts: ConfusionCounts) -> tuple[float, float]:
    """(TPR, FPR) = (TP/(TP+FN), FP/(FP+TN))."""
    pos = counts.tp + counts.fn
    neg = counts.fp + counts.tn
    if pos == 0 or neg == 0:
        raise DataError("TPR/FPR need both classes present")
    return counts.tp / pos, counts.fp / neg


def roc_auc(
    scores: np.ndarray, is_anomaly: np.ndarray
) -> tuple[list[tuple[float, float, float]], float]:
    """ROC points (fpr, tpr, threshold) and trapezoidal AUC.

    Thresholds descend over the distinct score values; a window counts
    as predicted-anomalous when its score strictly exceeds the threshold.
    """
    scores = np.asarray(scores, dtype=np.float64)
    flags = np.asarray(is_anomaly, dtype=bool)
    if scores.shape != flags.shape or scores.ndim != 1:
        raise DataError("scores and labels must be matching 1-D arrays")
    n_pos = int(flags.sum())
    n_neg = flags.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DataError("ROC needs both normal and anomalous windows")

    pos = np.sort(scores[flags])
    neg = np.sort(scores[~flags])
    thresholds = np.unique(scores)[::-1]
    tpr = (n_pos - np.searchsorted(pos, thresholds, side="right")) / n_pos
    fpr = (n_neg - np.searchsorted(neg, thresholds, side="right")) / n_neg

    points = [(0.0, 0.0, np.inf)]
    points += [(float(f), float(t), float(th)) for f, t, th in zip(fpr, tpr, thresholds)]
    points.append((1.0, 1.0, -np.inf))

    auc = 0.0
    for (f0, t0, _), (f1, t1, _) in zip(points[:-1], points[1:]):
        auc += (f1 - f0) * (t1 + t0) / 2.0
    return points, float(auc)


def per_scenario_breakdown(
    scored: list[ScoredWindow], manifest: list[dict]
) -> dict[int, dict[str, int]]:
    """Per scenario: injected count, detected count, missed = difference.

    The manifest must cover exactly the anomalous scored windows.
    """
    by_index = {s.index: s for s in scored}
    anomalous_indices = {s.index for s in scored if s.is_anomalous}
    manifest_indices = {rec["window_index"] for rec in manifest}
    if manifest_indices != anomalous_indices:
        raise DataError(
            "injection manifest does not match the anomalous scored windows: "
            f"{len(manifest_indices)} manifest vs {len(anomalous_indices)} scored"
        )
    breakdown: dict[int, dict[str, int]] = {}
    for rec in manifest:
        entry = breakdown.setdefault(rec["scenario"], {"injected": 0, "detected": 0, "missed": 0})
        entry["injected"] += 1
        window = by_index[rec["window_index"]]
        if window.predicted is None:
            raise DataError(f"window {window.index} has no predicted label")
        if window.predicted:
            entry["detected"] += 1
        else:
            entry["missed"] += 1
    return breakdown


@dataclass
class DetectionReport:
    """Full evaluation summary emitted by the pipeline."""

    confusion: ConfusionCounts
    accuracy: float
    tpr: float
    fpr: float
    roc: list[tuple[float, float, float]]
    auc: float
    per_scenario: dict[int, dict[str, int]]
    threshold: float
    g_mean: float
    lam: float | None = None
    extras: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "version": REPORT_FORMAT_VERSION,
            "confusion": {
                "tp": self.confusion.tp,
                "fp": self.confusion.fp,
                "tn": self.confusion.tn,
                "fn": self.confusion.fn,
            },
            "accuracy": self.accuracy,
            "tpr": self.tpr,
            "fpr": self.fpr,
            "roc": [list(p) for p in self.roc],
            "auc": self.auc,
            "per_scenario": {str(k): v for k, v in sorted(self.per_scenario.items())},
            "threshold": self.threshold,
            "g_mean": self.g_mean,
            "lambda": self.lam,
            "extras": self.extras,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "DetectionReport":
        if doc.get("version") != REPORT_FORMAT_VERSION:
            raise DataError(f"unsupported report version {doc.get('version')!r}")
        return cls(
            confusion=ConfusionCounts(**doc["confusion"]),
            accuracy=doc["accuracy"],
            tpr=doc["tpr"],
            fpr=doc["fpr"],
            roc=[tuple(p) for p in doc["roc"]],
            auc=doc["auc"],
            per_scenario={int(k): v for k, v in doc["per_scenario"].items()},
            threshold=doc["threshold"],
            g_mean=doc["g_mean"],
            lam=doc.get("lambda"),
            extras=doc.get("extras", {}),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "DetectionReport":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def build_report(
    scored: list[ScoredWindow],
    manifest: list[dict],
    threshold: float,
    lam: float | None = None,
    extras: dict | None = None,
) -> DetectionReport:
    """Assemble the full report from classified windows and the
    injection manifest."""
    counts = confusion_matrix(scored)
    acc = accuracy(counts)
    tpr, fpr = rates(counts)
    mds = np.array([s.md for s in scored])
    flags = np.array([s.is_anomalous for s in scored])
    roc, auc = roc_auc(mds, flags)
    return DetectionReport(
        confusion=counts,
        accuracy=acc,
        tpr=tpr,
        fpr=fpr,
        roc=roc,
        auc=auc,
        per_scenario=per_scenario_breakdown(scored, manifest),
        threshold=threshold,
        g_mean=float(np.sqrt(tpr * (1.0 - fpr))),
        lam=lam,
        extras=extras or {},
    )


def write_roc_csv(roc: list[tuple[float, float, float]], path: str | Path) -> None:
    """Plot-ready CSV of (fpr, tpr, threshold) rows."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fpr", "tpr", "threshold"])
        for fpr, tpr, threshold in roc:
            writer.writerow([repr(fpr), repr(tpr), repr(threshold)])


def read_roc_csv(path: str | Path) -> list[tuple[float, float, float]]:
    points = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            points.append((float(row[0]), float(row[1]), float(row[2])))
    return points
