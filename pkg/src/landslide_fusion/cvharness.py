"""Stratified folds, out-of-fold assembly, ensembles and ablation runs."""
from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .dataio import INDEX_NAMES, LAYOUT, PatchStack
from .errors import PreconditionError, ShapeError, TrainingError
from .evalcal import (
    CalibrationResult,
    calibrate_threshold,
    confusion_counts,
    ensemble_average,
    f1_at,
    precision_recall_f1,
    roc_auc,
)
from .features import FeatureTable, filter_columns, parse_column
from .fusionnet import FusionConfig, TrainConfig, train_nn
from .gbm import FeatureImportance, GbmConfig, compute_feature_importance, fit_gbm, predict_gbm, quantile_bin

__all__ = [
    "AblationPlan",
    "CvResult",
    "FoldAssignment",
    "GbmSpec",
    "NnSpec",
    "OofBundle",
    "read_oof_csv",
    "run_ablation",
    "run_cv",
    "run_ensemble",
    "stratified_kfold",
    "write_oof_csv",
]


@dataclass(frozen=True)
class FoldAssignment:
    folds: np.ndarray
    k: int
    seed: int = 0

    def __len__(self):
        return len(self.folds)

    def held_out(self, f: int) -> np.ndarray:
        return np.nonzero(self.folds == f)[0]


def stratified_kfold(labels, k: int = 5, seed: int = 0) -> FoldAssignment:
    """Shuffle each class with a seeded RNG and deal it round-robin into ``k`` folds.

    The dealing position carries over from one class to the next, so fold
    sizes differ by at most one overall as well as per class.  A class may
    be smaller than ``k`` (some folds then hold none of it) but needs at
    least two members so that every training split still contains it.
    """
    y = np.asarray(getattr(labels, "labels", labels)).astype(np.int64)
    if k < 2:
        raise PreconditionError("need k >= 2 folds")
    classes, counts = np.unique(y, return_counts=True)
    if classes.size < 2:
        raise PreconditionError("stratification needs both classes present")
    if (counts < 2).any():
        small = classes[counts < 2].tolist()
        raise PreconditionError(f"class(es) {small} have fewer than 2 samples")
    if y.size < k:
        raise PreconditionError(f"{y.size} samples cannot fill k={k} folds")
    rng = np.random.default_rng(seed)
    folds = np.full(y.size, -1, dtype=np.int64)
    pos = 0
    for c in sorted(classes, reverse=True):
        members = rng.permutation(np.nonzero(y == c)[0])
        folds[members] = (pos + np.arange(members.size)) % k
        pos = (pos + members.size) % k
    return FoldAssignment(folds, k, seed)


@dataclass(frozen=True)
class GbmSpec:
    config: GbmConfig
    name: str = "gbm"
    drop_stats: tuple = ()
    drop_channels: tuple = ()
    n_jobs: int = 1

    def describe(self) -> dict:
        return {"kind": "gbm", "name": self.name, "config": asdict(self.config),
                "drop_stats": list(self.drop_stats), "drop_channels": list(self.drop_channels)}


@dataclass(frozen=True)
class NnSpec:
    fusion: FusionConfig
    train: TrainConfig
    name: str = "nn"

    def describe(self) -> dict:
        return {"kind": "nn", "name": self.name, "fusion": self.fusion.to_dict(),
                "train": self.train.to_dict()}


@dataclass
class CvResult:
    name: str
    oof: np.ndarray
    labels: np.ndarray
    folds: np.ndarray
    calibration: CalibrationResult
    auc: float
    per_fold: list
    spec: dict
    models: list = field(default_factory=list)
    importance: FeatureImportance = None
    started: float = 0.0
    finished: float = 0.0

    @property
    def threshold(self) -> float:
        return self.calibration.threshold

    @property
    def f1(self) -> float:
        return self.calibration.f1

    def record(self, seed=None) -> dict:
        cm = confusion_counts(self.labels, self.oof, self.threshold)
        return {
            "spec": self.spec,
            "seed": seed,
            "folds": self.folds.tolist(),
            "per_fold": self.per_fold,
            "pooled": {"f1": self.f1, "auc": self.auc, "threshold": self.threshold,
                       **cm.to_dict()},
            "timestamps": {"started": self.started, "finished": self.finished},
        }


def _check_folds(folds, n):
    folds = np.asarray(getattr(folds, "folds", folds)).astype(np.int64)
    if folds.size != n:
        raise ShapeError(f"fold assignment has {folds.size} entries for {n} samples")
    if (folds < 0).any():
        raise PreconditionError("fold assignment leaves samples uncovered")
    ids = np.unique(folds)
    if ids.size < 2:
        raise PreconditionError("fold assignment needs at least two folds")
    return folds


def _feature_view(table: FeatureTable, spec: GbmSpec) -> FeatureTable:
    if not spec.drop_stats and not spec.drop_channels:
        return table
    out = filter_columns(table, spec.drop_stats, spec.drop_channels)
    if out.shape[1] == 0:
        raise PreconditionError("ablation leaves no features")
    return out


def _cv_gbm(spec: GbmSpec, table: FeatureTable, y, folds):
    view = _feature_view(table, spec)
    x = view.matrix
    oof = np.full(y.size, np.nan)
    models = []
    gain = np.zeros(x.shape[1])
    splits = np.zeros(x.shape[1], dtype=np.int64)
    for f in np.unique(folds):
        held = folds == f
        try:
            binned = quantile_bin(x[~held], spec.config.n_bins)
            model = fit_gbm(binned, y[~held], spec.config, feature_names=view.column_names,
                            n_jobs=spec.n_jobs)
        except TrainingError as exc:
            raise TrainingError(f"fold {f}: {exc}") from exc
        oof[held] = predict_gbm(model, x[held])
        imp = compute_feature_importance(model)
        gain += imp.gain
        splits += imp.splits
        models.append(model)
    return oof, models, FeatureImportance(gain, splits, view.column_names)


def run_cv(spec, data, labels, folds) -> CvResult:
    """Train one model per fold and assemble the out-of-fold vector.

    ``spec`` is a :class:`GbmSpec` (``data`` a FeatureTable) or an
    :class:`NnSpec` (``data`` a PatchStack, already enriched/scaled).
    """
    y = np.asarray(getattr(labels, "labels", labels)).astype(np.int64)
    n = len(y)
    folds = _check_folds(folds, n)
    started = time.time()
    if isinstance(spec, GbmSpec):
        if not isinstance(data, FeatureTable):
            raise PreconditionError("GBM cross-validation needs a FeatureTable")
        if data.shape[0] != n:
            raise ShapeError("feature rows and labels are misaligned")
        oof, models, importance = _cv_gbm(spec, data, y, folds)
    elif isinstance(spec, NnSpec):
        x = data.data if isinstance(data, PatchStack) else np.asarray(data)
        if x.shape[0] != n:
            raise ShapeError("patches and labels are misaligned")
        models, oof = train_nn(x, y, spec.fusion, spec.train, folds)
        importance = None
    else:
        raise PreconditionError(f"unsupported model spec {type(spec).__name__}")
    if np.isnan(oof).any():
        raise PreconditionError("out-of-fold assembly left samples without a prediction")

    cal = calibrate_threshold(y, oof)
    per_fold = []
    for f in np.unique(folds):
        held = folds == f
        row = {"fold": int(f), "n": int(held.sum()), "f1": f1_at(y[held], oof[held], cal.threshold)}
        if 0 < y[held].sum() < held.sum():
            row["auc"] = roc_auc(y[held], oof[held]).auc
        per_fold.append(row)
    return CvResult(spec.name, oof, y, folds, cal, roc_auc(y, oof).auc, per_fold,
                    spec.describe(), models, importance, started, time.time())


# ---------------------------------------------------------------------------
# bundles and ensembles
# ---------------------------------------------------------------------------

@dataclass
class OofBundle:
    ids: tuple
    labels: np.ndarray
    folds: np.ndarray
    models: dict = field(default_factory=dict)
    importance: dict = field(default_factory=dict)
    ensemble: np.ndarray = None
    calibration: CalibrationResult = None
    members: tuple = ()

    def add(self, name: str, oof, importance: FeatureImportance = None) -> None:
        oof = np.asarray(oof, dtype=np.float64)
        if oof.shape != self.labels.shape:
            raise ShapeError(f"OOF vector for {name!r} is not aligned with the labels")
        self.models[name] = oof
        if importance is not None:
            self.importance[name] = importance

    def add_result(self, result: CvResult) -> None:
        if not np.array_equal(result.folds, self.folds):
            raise PreconditionError(f"{result.name!r} was trained on a different fold split")
        self.add(result.name, result.oof, result.importance)

    def to_dict(self) -> dict:
        d = {
            "ids": list(self.ids),
            "labels": self.labels.tolist(),
            "folds": self.folds.tolist(),
            "models": {k: v.tolist() for k, v in self.models.items()},
            "importance": {k: {"names": list(v.names), "gain": v.gain.tolist(),
                               "splits": v.splits.tolist()} for k, v in self.importance.items()},
            "members": list(self.members),
        }
        if self.ensemble is not None:
            d["ensemble"] = self.ensemble.tolist()
        if self.calibration is not None:
            d["calibration"] = {"threshold": self.calibration.threshold,
                                "f1": self.calibration.f1}
        return d

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)

    @classmethod
    def load(cls, path) -> "OofBundle":
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
        b = cls(tuple(d["ids"]), np.asarray(d["labels"], dtype=np.int64),
                np.asarray(d["folds"], dtype=np.int64))
        for name, v in d["models"].items():
            b.models[name] = np.asarray(v, dtype=np.float64)
        for name, v in d.get("importance", {}).items():
            b.importance[name] = FeatureImportance(np.asarray(v["gain"], float),
                                                   np.asarray(v["splits"], np.int64),
                                                   tuple(v["names"]))
        b.members = tuple(d.get("members", ()))
        if "ensemble" in d:
            b.ensemble = np.asarray(d["ensemble"], dtype=np.float64)
            b.calibration = calibrate_threshold(b.labels, b.ensemble)
        return b


@dataclass(frozen=True)
class EnsembleResult:
    members: tuple
    probabilities: np.ndarray
    calibration: CalibrationResult
    predictions: np.ndarray
    report: dict


def run_ensemble(bundle: OofBundle, subset=None, weights=None) -> EnsembleResult:
    """Average the chosen members' OOF vectors and calibrate the threshold."""
    names = tuple(subset) if subset is not None else tuple(bundle.models)
    if not names:
        raise PreconditionError("ensemble subset is empty")
    for n in names:
        if n not in bundle.models:
            raise KeyError(f"no OOF vector for model {n!r}")
    probs = ensemble_average([bundle.models[n] for n in names], weights)
    y = bundle.labels
    cal = calibrate_threshold(y, probs)
    cm = confusion_counts(y, probs, cal.threshold)
    p, r, f1 = precision_recall_f1(cm)
    report = {
        "members": list(names),
        "threshold": cal.threshold,
        "f1": f1,
        "precision": p,
        "recall": r,
        "f1_at_0.5": f1_at(y, probs, 0.5),
        "auc": roc_auc(y, probs).auc,
        "member_auc": {n: roc_auc(y, bundle.models[n]).auc for n in names},
        "confusion": cm.to_dict(),
    }
    bundle.ensemble, bundle.calibration, bundle.members = probs, cal, names
    return EnsembleResult(names, probs, cal, (probs >= cal.threshold).astype(np.int64), report)


# ---------------------------------------------------------------------------
# ablations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AblationPlan:
    """``variant`` is ``drop-modality``, ``drop-stat``, ``drop-index`` or ``none``."""

    variant: str
    names: tuple = ()
    base: object = None

    def __post_init__(self):
        if self.variant not in ("drop-modality", "drop-stat", "drop-index", "none"):
            raise PreconditionError(f"unknown ablation variant {self.variant!r}")
        names = (self.names,) if isinstance(self.names, str) else tuple(self.names)
        object.__setattr__(self, "names", names)
        if self.variant == "drop-modality":
            for g in names:
                LAYOUT.channels_of([g])
        if self.variant == "drop-index":
            for g in names:
                if g not in INDEX_NAMES:
                    raise KeyError(f"unknown index {g!r}")

    @property
    def label(self) -> str:
        return "baseline" if self.variant == "none" else f"{self.variant}:{'+'.join(self.names)}"


def _ablated_spec(plan: AblationPlan, data):
    base = plan.base
    if plan.variant == "none":
        return base
    if isinstance(base, GbmSpec):
        present = {parse_column(c)[0] for c in data.column_names}
        if plan.variant == "drop-stat":
            return GbmSpec(base.config, f"{base.name}-{plan.label}",
                           tuple(base.drop_stats) + plan.names, base.drop_channels, base.n_jobs)
        if plan.variant == "drop-index":
            chans = tuple(LAYOUT.indices[i] for i in plan.names)
        else:
            chans = tuple(c for c in LAYOUT.channels_of(plan.names) if c in present)
        return GbmSpec(base.config, f"{base.name}-{plan.label}", base.drop_stats,
                       tuple(base.drop_channels) + chans, base.n_jobs)
    if isinstance(base, NnSpec):
        if plan.variant != "drop-modality":
            raise PreconditionError("neural-net ablations only support drop-modality")
        dropped = set(plan.names)
        kept = tuple(tuple(g for g in groups if g not in dropped)
                     for groups in base.fusion.modality_assignment)
        kept = tuple(g for g in kept if g)
        if not kept:
            raise PreconditionError("ablation removes every encoder")
        fusion = FusionConfig(kept, base.fusion.encoder, base.fusion.head_width, base.fusion.dropout)
        return NnSpec(fusion, base.train, f"{base.name}-{plan.label}")
    raise PreconditionError("ablation plan needs a GbmSpec or NnSpec base")


def run_ablation(plan: AblationPlan, data, labels, folds, baseline: CvResult = None) -> dict:
    """Cross-validate the ablated model and compare its OOF F1 with the baseline.

    Both runs share ``folds`` and the base spec's seeds.
    """
    spec = _ablated_spec(plan, data)
    if baseline is None:
        baseline = run_cv(plan.base, data, labels, folds)
    result = baseline if plan.variant == "none" else run_cv(spec, data, labels, folds)
    return {
        "variant": plan.label,
        "oof_f1": result.f1,
        "oof_auc": result.auc,
        "threshold": result.threshold,
        "baseline_f1": baseline.f1,
        "delta_f1": result.f1 - baseline.f1,
        "result": result,
    }


# ---------------------------------------------------------------------------
# OOF CSV
# ---------------------------------------------------------------------------

def write_oof_csv(path, ids, folds, oof, labels) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["ID", "fold", "probability", "label"])
        for row in zip(ids, np.asarray(folds), np.asarray(oof), np.asarray(labels)):
            w.writerow([row[0], int(row[1]), repr(float(row[2])), int(row[3])])


def read_oof_csv(path):
    """Returns ``(ids, folds, probabilities, labels)``."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["ID", "fold", "probability", "label"]:
            raise PreconditionError(f"{path}: header must be 'ID,fold,probability,label'")
        rows = [r for r in reader if r]
    ids = tuple(r[0] for r in rows)
    folds = np.array([int(r[1]) for r in rows], dtype=np.int64)
    probs = np.array([float(r[2]) for r in rows], dtype=np.float64)
    labels = np.array([int(r[3]) for r in rows], dtype=np.int64)
    return ids, folds, probs, labels
