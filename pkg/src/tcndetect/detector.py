"""Gaussian error model over forecaster residuals and MD thresholding.

Training prediction errors are modeled as a multivariate Gaussian; a
test window's anomaly score is the Mahalanobis distance of its
prediction error from that distribution,

    MD = sqrt((e - mu)^T Sigma^{-1} (e - mu)),

computed through a Cholesky factorization of the ridge-regularized
covariance. The operating threshold maximizes the geometric mean of
sensitivity and specificity over the ROC candidate cuts, and windows
with MD strictly above the threshold are classified anomalous.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular

from .errors import DataError, SingularCovarianceError

logger = logging.getLogger(__name__)

# Ridge factor applied to the covariance diagonal: lam = RIDGE_SCALE *
# trace(sigma) / P, floored so an all-zero covariance stays invertible.
RIDGE_SCALE = 1e-6
RIDGE_FLOOR = 1e-12

LABEL_NORMAL = 0


@dataclass
class ErrorModel:
    """Fitted error distribution: mean, covariance, regularized inverse.

    ``sigma`` is the raw (unregularized) sample covariance; ``chol`` is
    the lower Cholesky factor of ``sigma + lam * I`` used for distance
    computation, and ``sigma_inv`` its explicit inverse. ``threshold``
    stays None until selected.
    """

    mu: np.ndarray  # (P,)
    sigma: np.ndarray  # (P, P)
    lam: float
    chol: np.ndarray  # (P, P) lower
    sigma_inv: np.ndarray  # (P, P)
    threshold: float | None = None

    @property
    def dim(self) -> int:
        return self.mu.shape[0]

    def to_json(self) -> dict:
        return {
            "mu": self.mu.tolist(),
            "sigma": self.sigma.tolist(),
            "lambda": self.lam,
            "threshold": self.threshold,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ErrorModel":
        mu = np.asarray(doc["mu"], dtype=np.float64)
        sigma = np.asarray(doc["sigma"], dtype=np.float64)
        model = _assemble(mu, sigma, float(doc["lambda"]))
        model.threshold = doc.get("threshold")
        return model


def _assemble(mu: np.ndarray, sigma: np.ndarray, lam: float) -> ErrorModel:
    p = mu.shape[0]
    regularized = sigma + lam * np.eye(p)
    try:
        chol = cholesky(regularized, lower=True)
    except np.linalg.LinAlgError as exc:
        raise SingularCovarianceError(
            f"covariance not positive definite even with ridge lambda={lam:g}"
        ) from exc
    sigma_inv = cho_solve((chol, True), np.eye(p))
    return ErrorModel(mu=mu, sigma=sigma, lam=lam, chol=chol, sigma_inv=sigma_inv)


def fit_error_model(train_errors: np.ndarray, lam: float | None = None) -> ErrorModel:
    """Fit mean and unbiased sample covariance of training errors.

    ``lam`` defaults to ``RIDGE_SCALE * trace(sigma) / P`` (floored at
    ``RIDGE_FLOOR``); pass an explicit value to override.
    """
    errors = np.asarray(train_errors, dtype=np.float64)
    if errors.ndim != 2:
        raise DataError("train errors must be a 2-D array (N, P)")
    n, p = errors.shape
    if n < 2:
        raise DataError(f"need at least 2 error vectors to fit a covariance, got {n}")
    if not np.all(np.isfinite(errors)):
        raise DataError("train errors contain non-finite values")
    if n <= p:
        logger.warning(
            "only %d error vectors for %d dimensions: covariance is singular, "
            "relying on ridge regularization", n, p,
        )
    mu = errors.mean(axis=0)
    centered = errors - mu
    sigma = centered.T @ centered / (n - 1)
    if lam is None:
        lam = max(RIDGE_SCALE * float(np.trace(sigma)) / p, RIDGE_FLOOR)
    return _assemble(mu, sigma, float(lam))


def mahalanobis(zeta: np.ndarray, em: ErrorModel) -> np.ndarray | float:
    """Distance of one error vector (P,) or a batch (N, P) from the
    fitted distribution, via a triangular solve on the Cholesky factor."""
    zeta = np.asarray(zeta, dtype=np.float64)
    single = zeta.ndim == 1
    if zeta.shape[-1] != em.dim:
        raise ValueError(f"error vector has dim {zeta.shape[-1]}, model has {em.dim}")
    delta = np.atleast_2d(zeta) - em.mu
    z = solve_triangular(em.chol, delta.T, lower=True)
    md = np.sqrt(np.sum(z * z, axis=0))
    return float(md[0]) if single else md


@dataclass(frozen=True)
class ScoredWindow:
    """One scored test window: its MD, ground-truth label code
    (0 = normal, else 10 * scenario + case), and predicted flag."""

    index: int
    md: float
    actual: int = LABEL_NORMAL
    predicted: bool | None = None

    @property
    def is_anomalous(self) -> bool:
        return self.actual != LABEL_NORMAL


def score_windows(errors: np.ndarray, labels: np.ndarray, em: ErrorModel) -> list[ScoredWindow]:
    """Score a batch of test errors against the fitted model."""
    mds = mahalanobis(errors, em)
    return [
        ScoredWindow(index=i, md=float(md), actual=int(lab))
        for i, (md, lab) in enumerate(zip(np.atleast_1d(mds), labels))
    ]


def _rates_at(thresholds: np.ndarray, pos: np.ndarray, neg: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(TPR, FPR) for `score > threshold` classification, vectorized over
    an ascending threshold array; pos/neg must be sorted ascending."""
    tp = pos.size - np.searchsorted(pos, thresholds, side="right")
    fp = neg.size - np.searchsorted(neg, thresholds, side="right")
    return tp / pos.size, fp / neg.size


def select_threshold(scores: list[ScoredWindow]) -> float:
    """Pick the MD cutoff maximizing sqrt(TPR * (1 - FPR)).

    Candidates are the midpoints between consecutive distinct sorted MD
    values plus -inf/+inf sentinels, which covers every operating point
    achievable with strict-inequality classification. Ties break toward
    the larger threshold (fewer false positives).
    """
    mds = np.array([s.md for s in scores], dtype=np.float64)
    flags = np.array([s.is_anomalous for s in scores], dtype=bool)
    if not flags.any() or flags.all():
        raise DataError("threshold selection needs both normal and anomalous windows")
    pos = np.sort(mds[flags])
    neg = np.sort(mds[~flags])
    distinct = np.unique(mds)
    candidates = np.concatenate(
        ([-np.inf], (distinct[:-1] + distinct[1:]) / 2.0, [np.inf])
    )
    tpr, fpr = _rates_at(candidates, pos, neg)
    gmean = np.sqrt(tpr * (1.0 - fpr))
    best = np.flatnonzero(gmean == gmean.max()).max()
    logger.info(
        "selected threshold %.6g (g-mean %.4f, tpr %.4f, fpr %.4f)",
        candidates[best], gmean[best], tpr[best], fpr[best],
    )
    return float(candidates[best])


def classify(scores: list[ScoredWindow], threshold: float) -> list[ScoredWindow]:
    """Label each window anomalous iff its MD strictly exceeds the
    threshold (a window exactly at the threshold stays normal)."""
    return [replace(s, predicted=bool(s.md > threshold)) for s in scores]
