"""Second-order logistic boosting over histogram-binned features.

Trees are grown leaf-wise: the leaf with the largest split gain is split
next until the leaf budget, the depth cap or the minimum leaf size binds.
For a node with gradient sum ``G`` and hessian sum ``H`` the leaf value is
``-G / (H + lambda)`` and a split scores

    0.5 * (GL**2 / (HL + lambda) + GR**2 / (HR + lambda) - G**2 / (H + lambda)).
"""
from __future__ import annotations

import heapq
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from ..errors import PreconditionError, ShapeError, TrainingError
from .binning import MAX_BINS, BinnedMatrix, apply_bins

__all__ = [
    "PRESETS",
    "FeatureImportance",
    "GbmConfig",
    "GbmModel",
    "Tree",
    "compute_feature_importance",
    "fit_gbm",
    "logistic_grad_hess",
    "predict_gbm",
    "weighted_logloss",
]


@dataclass(frozen=True)
class GbmConfig:
    learning_rate: float = 0.1
    n_rounds: int = 100
    num_leaves: int = 31
    max_depth: int = 6
    subsample: float = 1.0
    colsample: float = 1.0
    scale_pos_weight: float = 1.0
    l2_lambda: float = 1.0
    min_samples_leaf: int = 20
    n_bins: int = MAX_BINS
    seed: int = 0

    def __post_init__(self):
        checks = [
            (self.learning_rate > 0, "learning_rate must be > 0"),
            (self.n_rounds >= 0, "n_rounds must be >= 0"),
            (self.num_leaves >= 2, "num_leaves must be >= 2"),
            (self.max_depth >= 1, "max_depth must be >= 1"),
            (0 < self.subsample <= 1, "subsample must lie in (0, 1]"),
            (0 < self.colsample <= 1, "colsample must lie in (0, 1]"),
            (self.scale_pos_weight > 0, "scale_pos_weight must be > 0"),
            (self.l2_lambda >= 0, "l2_lambda must be >= 0"),
            (self.min_samples_leaf >= 1, "min_samples_leaf must be >= 1"),
            (2 <= self.n_bins <= MAX_BINS, f"n_bins must lie in [2, {MAX_BINS}]"),
        ]
        for ok, msg in checks:
            if not ok:
                raise PreconditionError(msg)

    def with_(self, **changes) -> "GbmConfig":
        return replace(self, **changes)


PRESETS = {
    "boost-a": GbmConfig(learning_rate=0.02, n_rounds=4000, max_depth=6, num_leaves=63,
                         subsample=0.8, colsample=0.8, scale_pos_weight=1.5, l2_lambda=1.2),
    "boost-b": GbmConfig(learning_rate=0.005, n_rounds=12000, num_leaves=24, max_depth=12,
                         subsample=0.6, colsample=0.5, scale_pos_weight=1.5, l2_lambda=0.3),
}


@dataclass
class Tree:
    """Flat node arrays; leaves carry ``feature == -1``."""

    feature: np.ndarray
    threshold: np.ndarray      # bin index: go left iff code <= threshold
    cut: np.ndarray            # raw value of the threshold bin's upper edge
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray
    depth: np.ndarray

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    @property
    def max_depth(self) -> int:
        return int(self.depth.max())

    def predict_codes(self, codes: np.ndarray) -> np.ndarray:
        node = np.zeros(codes.shape[0], dtype=np.int64)
        rows = np.arange(codes.shape[0])
        active = self.feature[node] >= 0
        while active.any():
            r, nd = rows[active], node[active]
            go_left = codes[r, self.feature[nd]] <= self.threshold[nd]
            node[r] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.feature[node] >= 0
        return self.value[node]

    def to_records(self) -> list:
        recs = []
        for i in range(len(self.feature)):
            if self.feature[i] < 0:
                recs.append({"id": i, "depth": int(self.depth[i]), "leaf": True,
                             "value": float(self.value[i])})
            else:
                recs.append({"id": i, "depth": int(self.depth[i]), "leaf": False,
                             "feature": int(self.feature[i]), "bin": int(self.threshold[i]),
                             "cut": float(self.cut[i]), "left": int(self.left[i]),
                             "right": int(self.right[i]), "gain": float(self.gain[i])})
        return recs

    @classmethod
    def from_records(cls, recs: list) -> "Tree":
        n = len(recs)
        t = cls(np.full(n, -1, np.int64), np.zeros(n, np.int64), np.zeros(n), np.full(n, -1, np.int64),
                np.full(n, -1, np.int64), np.zeros(n), np.zeros(n), np.zeros(n, np.int64))
        for r in recs:
            i = r["id"]
            t.depth[i] = r["depth"]
            if r["leaf"]:
                t.value[i] = r["value"]
            else:
                t.feature[i], t.threshold[i], t.cut[i] = r["feature"], r["bin"], r["cut"]
                t.left[i], t.right[i], t.gain[i] = r["left"], r["right"], r["gain"]
        return t


@dataclass(frozen=True)
class FeatureImportance:
    gain: np.ndarray
    splits: np.ndarray
    names: tuple = ()

    @property
    def normalized_gain(self) -> np.ndarray:
        total = self.gain.sum()
        return self.gain / total if total > 0 else np.zeros_like(self.gain)

    def ranked(self, top_k=None) -> list:
        """``(name, gain, splits)`` sorted by gain descending, ties by position."""
        order = sorted(range(len(self.gain)), key=lambda j: (-self.gain[j], j))
        names = self.names or tuple(f"f{j}" for j in range(len(self.gain)))
        rows = [(names[j], float(self.gain[j]), int(self.splits[j])) for j in order]
        return rows[:top_k] if top_k is not None else rows


@dataclass
class GbmModel:
    config: GbmConfig
    base_score: float
    bin_edges: tuple
    trees: list = field(default_factory=list)
    gain: np.ndarray = None
    splits: np.ndarray = None
    feature_names: tuple = ()
    train_loss: list = field(default_factory=list)

    @property
    def n_features(self) -> int:
        return len(self.bin_edges)

    def to_dict(self) -> dict:
        return {
            "format": "landslide-gbm/1",
            "config": asdict(self.config),
            "base_score": float(self.base_score),
            "feature_names": list(self.feature_names),
            "bin_edges": [[float(v) for v in e] for e in self.bin_edges],
            "trees": [t.to_records() for t in self.trees],
            "importance": {"gain": [float(v) for v in self.gain],
                           "splits": [int(v) for v in self.splits]},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    @classmethod
    def from_dict(cls, d: dict) -> "GbmModel":
        if d.get("format") != "landslide-gbm/1":
            raise ValueError("not a landslide-gbm/1 model document")
        return cls(
            config=GbmConfig(**d["config"]),
            base_score=float(d["base_score"]),
            bin_edges=tuple(np.asarray(e, dtype=np.float64) for e in d["bin_edges"]),
            trees=[Tree.from_records(t) for t in d["trees"]],
            gain=np.asarray(d["importance"]["gain"], dtype=np.float64),
            splits=np.asarray(d["importance"]["splits"], dtype=np.int64),
            feature_names=tuple(d.get("feature_names", ())),
        )

    @classmethod
    def load(cls, path) -> "GbmModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def logistic_grad_hess(scores, labels, scale_pos_weight: float = 1.0):
    """Per-sample weighted gradient and hessian of the logistic loss."""
    y = np.asarray(labels, dtype=np.float64)
    w = np.where(y == 1, scale_pos_weight, 1.0)
    p = _sigmoid(np.asarray(scores, dtype=np.float64))
    return w * (p - y), w * p * (1.0 - p)


def weighted_logloss(scores, labels, scale_pos_weight: float = 1.0) -> float:
    y = np.asarray(labels, dtype=np.float64)
    s = np.asarray(scores, dtype=np.float64)
    w = np.where(y == 1, scale_pos_weight, 1.0)
    # log(1 + exp(-s)) for positives, log(1 + exp(s)) for negatives
    z = np.where(y == 1, -s, s)
    return float(np.sum(w * np.logaddexp(0.0, z)) / np.sum(w))


class _Histogrammer:
    def __init__(self, codes, n_bins, n_jobs):
        self.codes = codes
        self.n_bins = n_bins
        self.n_jobs = max(1, int(n_jobs))
        self._pool = ThreadPoolExecutor(self.n_jobs) if self.n_jobs > 1 else None

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()

    def _block(self, rows, cols, g, h):
        b = self.codes[np.ix_(rows, cols)].astype(np.int64)
        flat = (b + np.arange(len(cols)) * self.n_bins).ravel()
        size = len(cols) * self.n_bins
        shape = (len(cols), self.n_bins)
        gw = np.broadcast_to(g[rows, None], b.shape).ravel()
        hw = np.broadcast_to(h[rows, None], b.shape).ravel()
        return (np.bincount(flat, weights=gw, minlength=size).reshape(shape),
                np.bincount(flat, weights=hw, minlength=size).reshape(shape),
                np.bincount(flat, minlength=size).reshape(shape))

    def build(self, rows, cols, g, h):
        """Per-feature (gradient, hessian, count) histograms, ``len(cols) x n_bins``."""
        if self._pool is None:
            return self._block(rows, cols, g, h)
        chunks = [c for c in np.array_split(cols, self.n_jobs) if len(c)]
        parts = list(self._pool.map(lambda c: self._block(rows, c, g, h), chunks))
        return tuple(np.concatenate([p[k] for p in parts], axis=0) for k in range(3))


@dataclass
class _Node:
    rows: np.ndarray
    hist: tuple
    G: float
    H: float
    depth: int
    nid: int
    split: tuple = None       # (gain, col_pos, bin)


def _best_split(node, cols, cfg):
    hg, hh, hc = node.hist
    lam = cfg.l2_lambda
    GL = np.cumsum(hg, axis=1)[:, :-1]
    HL = np.cumsum(hh, axis=1)[:, :-1]
    NL = np.cumsum(hc, axis=1)[:, :-1]
    n = len(node.rows)
    GR, HR, NR = node.G - GL, node.H - HL, n - NL
    valid = (NL >= cfg.min_samples_leaf) & (NR >= cfg.min_samples_leaf)
    if not valid.any():
        return None
    parent = node.G * node.G / (node.H + lam)
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = 0.5 * (GL * GL / (HL + lam) + GR * GR / (HR + lam) - parent)
    gain = np.where(valid & np.isfinite(gain), gain, -np.inf)
    flat = int(np.argmax(gain))
    best = gain.flat[flat]
    if not best > 0.0:
        return None
    j, b = divmod(flat, gain.shape[1])
    return float(best), j, b


def _grow_tree(codes, g, h, rows, cols, cfg, hist, edges, gain_acc, split_acc):
    feature, threshold, cut, left, right, value, gains, depth = ([] for _ in range(8))

    def new_node(d):
        for lst, v in ((feature, -1), (threshold, 0), (cut, 0.0), (left, -1), (right, -1),
                       (value, 0.0), (gains, 0.0), (depth, d)):
            lst.append(v)
        return len(feature) - 1

    def leaf_value(G, H):
        return -G / (H + cfg.l2_lambda) * cfg.learning_rate

    def consider(node, heap):
        if node.depth < cfg.max_depth and len(node.rows) >= 2 * cfg.min_samples_leaf:
            node.split = _best_split(node, cols, cfg)
            if node.split is not None:
                heapq.heappush(heap, (-node.split[0], node.nid, node))

    root_hist = hist.build(rows, cols, g, h)
    root = _Node(rows, root_hist, float(g[rows].sum()), float(h[rows].sum()), 0, new_node(0))
    value[root.nid] = leaf_value(root.G, root.H)
    heap = []
    consider(root, heap)
    n_leaves = 1
    while heap and n_leaves < cfg.num_leaves:
        _, _, node = heapq.heappop(heap)
        gain_val, j, b = node.split
        f = int(cols[j])
        mask = codes[node.rows, f] <= b
        lrows, rrows = node.rows[mask], node.rows[~mask]
        small, large = (lrows, rrows) if len(lrows) <= len(rrows) else (rrows, lrows)
        small_hist = hist.build(small, cols, g, h)
        large_hist = tuple(p - s for p, s in zip(node.hist, small_hist))
        lh, rh = (small_hist, large_hist) if small is lrows else (large_hist, small_hist)
        children = []
        for crow, chist in ((lrows, lh), (rrows, rh)):
            cid = new_node(node.depth + 1)
            G, H = float(g[crow].sum()), float(h[crow].sum())
            value[cid] = leaf_value(G, H)
            children.append(_Node(crow, chist, G, H, node.depth + 1, cid))
        feature[node.nid], threshold[node.nid] = f, b
        cut[node.nid] = float(edges[f][b])
        left[node.nid], right[node.nid] = children[0].nid, children[1].nid
        gains[node.nid] = gain_val
        value[node.nid] = 0.0
        gain_acc[f] += gain_val
        split_acc[f] += 1
        n_leaves += 1
        for child in children:
            consider(child, heap)

    return Tree(np.array(feature, np.int64), np.array(threshold, np.int64), np.array(cut),
                np.array(left, np.int64), np.array(right, np.int64), np.array(value),
                np.array(gains), np.array(depth, np.int64))


def fit_gbm(binned: BinnedMatrix, labels, config: GbmConfig, *, feature_names=(),
            n_jobs: int = 1, record_loss: bool = False) -> GbmModel:
    """Boost ``config.n_rounds`` trees on a binned matrix.

    ``n_jobs`` threads share histogram construction across features; every
    reduction runs in a fixed order so the fitted model does not depend on it.
    """
    codes = binned.codes
    y = np.asarray(labels, dtype=np.float64).ravel()
    n, nf = codes.shape
    if y.size != n:
        raise ShapeError(f"{n} rows but {y.size} labels")
    if not np.isin(y, (0.0, 1.0)).all():
        raise PreconditionError("labels must be 0 or 1")
    n_pos = float(y.sum())
    if n < 2 or n_pos == 0 or n_pos == n:
        raise TrainingError("fit_gbm needs at least two samples and both classes")
    cfg = config
    spw = cfg.scale_pos_weight
    base = math.log(spw * n_pos / (n - n_pos))
    scores = np.full(n, base)
    rng = np.random.default_rng(cfg.seed)
    n_bins = int(max(len(e) for e in binned.bin_edges) + 1) if nf else 1
    hist = _Histogrammer(codes, n_bins, n_jobs)
    gain_acc = np.zeros(nf)
    split_acc = np.zeros(nf, dtype=np.int64)
    model = GbmModel(cfg, base, binned.bin_edges, [], gain_acc, split_acc, tuple(feature_names))
    if record_loss:
        model.train_loss.append(weighted_logloss(scores, y, spw))
    n_rows = max(1, int(round(cfg.subsample * n)))
    n_cols = max(1, int(round(cfg.colsample * nf)))
    try:
        for _ in range(cfg.n_rounds):
            g, h = logistic_grad_hess(scores, y, spw)
            assert np.isfinite(g).all() and np.isfinite(h).all(), "non-finite gradient"
            rows = (np.sort(rng.choice(n, n_rows, replace=False)) if n_rows < n
                    else np.arange(n))
            cols = (np.sort(rng.choice(nf, n_cols, replace=False)) if n_cols < nf
                    else np.arange(nf))
            tree = _grow_tree(codes, g, h, rows, cols, cfg, hist, binned.bin_edges,
                              gain_acc, split_acc)
            model.trees.append(tree)
            scores = scores + tree.predict_codes(codes)
            if record_loss:
                model.train_loss.append(weighted_logloss(scores, y, spw))
    finally:
        hist.close()
    return model


def _codes_for(model: GbmModel, X) -> np.ndarray:
    if isinstance(X, BinnedMatrix):
        codes = X.codes
    else:
        codes = apply_bins(X, model.bin_edges)
    if codes.ndim != 2 or codes.shape[1] != model.n_features:
        raise ShapeError(f"model expects {model.n_features} features, got {codes.shape}")
    return codes


def predict_raw(model: GbmModel, X) -> np.ndarray:
    codes = _codes_for(model, X)
    score = np.full(codes.shape[0], model.base_score)
    for tree in model.trees:
        score = score + tree.predict_codes(codes)
    return score


def predict_gbm(model: GbmModel, X) -> np.ndarray:
    """Probabilities for binned rows or raw rows (binned with the stored edges)."""
    return _sigmoid(predict_raw(model, X))


def compute_feature_importance(model: GbmModel) -> FeatureImportance:
    return FeatureImportance(np.asarray(model.gain, dtype=np.float64).copy(),
                             np.asarray(model.splits, dtype=np.int64).copy(),
                             tuple(model.feature_names))
