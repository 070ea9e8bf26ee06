"""Classification metrics, ensemble averaging and F1 threshold calibration.

Throughout the package a sample is predicted positive iff ``p >= threshold``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import CalibrationError, MetricError, PreconditionError, ShapeError

__all__ = [
    "CalibrationResult",
    "ConfusionMatrix",
    "OverallScore",
    "RocCurve",
    "calibrate_threshold",
    "candidate_thresholds",
    "confusion_counts",
    "ensemble_average",
    "f1_at",
    "overall_score",
    "precision_recall_f1",
    "roc_auc",
]

OVERALL_WEIGHTS = (0.5, 0.3, 0.7)


@dataclass(frozen=True)
class ConfusionMatrix:
    tn: int
    fp: int
    fn: int
    tp: int

    @property
    def n(self) -> int:
        return self.tn + self.fp + self.fn + self.tp

    def to_dict(self) -> dict:
        p, r, f1 = precision_recall_f1(self)
        return {"tn": self.tn, "fp": self.fp, "fn": self.fn, "tp": self.tp,
                "precision": p, "recall": r, "f1": f1}


def _aligned(labels, probabilities):
    y = np.asarray(labels).astype(np.int64).ravel()
    p = np.asarray(probabilities, dtype=np.float64).ravel()
    if y.shape != p.shape:
        raise ShapeError(f"{y.size} labels but {p.size} probabilities")
    return y, p


def confusion_counts(labels, probabilities, threshold: float) -> ConfusionMatrix:
    y, p = _aligned(labels, probabilities)
    pred = p >= threshold
    pos = y == 1
    tp = int(np.sum(pred & pos))
    fp = int(np.sum(pred & ~pos))
    fn = int(np.sum(~pred & pos))
    return ConfusionMatrix(tn=int(y.size - tp - fp - fn), fp=fp, fn=fn, tp=tp)


def _prf(tp, fp, fn):
    # works elementwise on arrays as well as on scalars
    tp, fp, fn = (np.asarray(v, dtype=np.float64) for v in (tp, fp, fn))
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(tp + fp > 0, tp / np.where(tp + fp > 0, tp + fp, 1.0), 0.0)
        r = np.where(tp + fn > 0, tp / np.where(tp + fn > 0, tp + fn, 1.0), 0.0)
        f1 = np.where(p + r > 0, 2.0 * p * r / np.where(p + r > 0, p + r, 1.0), 0.0)
    return p, r, f1


def precision_recall_f1(cm: ConfusionMatrix):
    """Precision, recall and F1 with 0 substituted for every 0/0."""
    p, r, f1 = _prf(cm.tp, cm.fp, cm.fn)
    return float(p), float(r), float(f1)


def f1_at(labels, probabilities, threshold: float) -> float:
    return precision_recall_f1(confusion_counts(labels, probabilities, threshold))[2]


@dataclass(frozen=True)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: float

    def trapezoid_auc(self) -> float:
        return float(np.sum(np.diff(self.fpr) * (self.tpr[1:] + self.tpr[:-1]) / 2.0))


def roc_auc(labels, probabilities) -> RocCurve:
    """ROC curve over the distinct scores and the Mann-Whitney AUC.

    Ties between a positive and a negative score earn half credit.  The
    first point has threshold ``+inf`` (nothing predicted positive).
    """
    y, p = _aligned(labels, probabilities)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("ROC/AUC needs both classes present")
    ranks = rankdata(p, method="average")
    auc = (ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)

    order = np.argsort(-p, kind="stable")
    ps, ys = p[order], y[order]
    distinct = np.r_[np.nonzero(np.diff(ps))[0], ps.size - 1]
    tps = np.cumsum(ys)[distinct]
    fps = (distinct + 1) - tps
    fpr = np.r_[0.0, fps / n_neg]
    tpr = np.r_[0.0, tps / n_pos]
    thresholds = np.r_[np.inf, ps[distinct]]
    return RocCurve(fpr, tpr, thresholds, float(auc))


def ensemble_average(prob_vectors, weights=None) -> np.ndarray:
    vectors = [np.asarray(v, dtype=np.float64).ravel() for v in prob_vectors]
    if not vectors:
        raise PreconditionError("ensemble needs at least one probability vector")
    lengths = {v.size for v in vectors}
    if len(lengths) != 1:
        raise ShapeError(f"probability vectors differ in length: {sorted(lengths)}")
    if weights is None:
        weights = np.full(len(vectors), 1.0 / len(vectors))
    weights = np.asarray(weights, dtype=np.float64)
    if weights.size != len(vectors) or (weights < 0).any() or abs(weights.sum() - 1.0) > 1e-9:
        raise PreconditionError("weights must be non-negative, one per model, and sum to 1")
    if len(vectors) == 1:
        return vectors[0].copy()
    # summing the sorted terms makes the result independent of model order
    terms = np.sort(weights[:, None] * np.vstack(vectors), axis=0)
    return np.clip(terms.sum(axis=0), 0.0, 1.0)


@dataclass(frozen=True)
class CalibrationResult:
    threshold: float
    f1: float
    thresholds: np.ndarray
    f1_scores: np.ndarray

    def sweep(self):
        return list(zip(self.thresholds.tolist(), self.f1_scores.tolist()))


def candidate_thresholds(probabilities) -> np.ndarray:
    """Midpoints of consecutive distinct scores, the 0.01 grid, and 0.5."""
    u = np.unique(np.asarray(probabilities, dtype=np.float64))
    mids = (u[:-1] + u[1:]) / 2.0
    grid = np.round(np.arange(1, 100) / 100.0, 2)
    return np.unique(np.concatenate([mids, grid, [0.5]]))


def _sweep_f1(y, p, thresholds):
    ps = np.sort(p)
    pos_sorted = y[np.argsort(p, kind="stable")]
    # number of samples with score >= t, and positives among them
    first = np.searchsorted(ps, thresholds, side="left")
    pos_suffix = np.r_[np.cumsum(pos_sorted[::-1])[::-1], 0]
    predicted = p.size - first
    tp = pos_suffix[first]
    fp = predicted - tp
    fn = int(y.sum()) - tp
    return _prf(tp, fp, fn)[2]


def calibrate_threshold(labels, oof_probabilities) -> CalibrationResult:
    """F1-maximizing threshold over :func:`candidate_thresholds`.

    Ties go to the candidate closest to 0.5, then to the smaller one.
    """
    y, p = _aligned(labels, oof_probabilities)
    if y.sum() == 0 or y.sum() == y.size:
        raise CalibrationError("threshold calibration needs both classes present")
    cands = candidate_thresholds(p)
    f1 = _sweep_f1(y, p, cands)
    best = f1.max()
    tied = np.nonzero(f1 == best)[0]
    pick = min(tied, key=lambda i: (abs(cands[i] - 0.5), cands[i]))
    return CalibrationResult(float(cands[pick]), float(best), cands, f1)


@dataclass(frozen=True)
class OverallScore:
    oof: float
    public_lb: float
    private_lb: float
    overall: float
    weights: tuple = OVERALL_WEIGHTS

    def to_dict(self) -> dict:
        return {"oof": self.oof, "public_lb": self.public_lb, "private_lb": self.private_lb,
                "overall": self.overall, "weights": list(self.weights)}


def overall_score(oof: float, public_lb: float, private_lb: float) -> OverallScore:
    """Half OOF, half leaderboard; the leaderboard half splits 30/70 public/private."""
    for v in (oof, public_lb, private_lb):
        if not 0.0 <= v <= 1.0:
            raise PreconditionError(f"score {v} outside [0, 1]")
    half, pub, priv = OVERALL_WEIGHTS
    total = half * oof + (1.0 - half) * (pub * public_lb + priv * private_lb)
    return OverallScore(oof, public_lb, private_lb, total)
