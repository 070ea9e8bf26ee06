"""Index channels, band scaling and per-patch statistical descriptors."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .dataio import CHANNEL_NAMES, INDEX_NAMES, LAYOUT, PatchStack
from .errors import FormatError, PreconditionError, ShapeError

__all__ = [
    "INDEX_PAIRS",
    "STATS",
    "FeatureTable",
    "ScalerParams",
    "apply_scaler",
    "compute_indices",
    "compute_patch_statistics",
    "filter_columns",
    "fit_scaler",
    "load_feature_table",
    "normalized_difference",
    "save_feature_table",
]

EPS = 1e-10
SCALE_FLOOR = 1e-12
MOMENT_FLOOR = 1e-24
STATS = ("min", "mean", "median", "max", "std", "skew", "kurt")

# (a, b) raw optical channels for index(a, b) = (a - b) / (a + b + eps)
INDEX_PAIRS = {
    "NDVI": (3, 0),
    "NDWI": (3, 1),
    "NIRBlue": (3, 2),
    "BlueGreen": (2, 1),
    "BlueRed": (2, 0),
    "GreenRed": (1, 0),
}


def normalized_difference(a, b, eps: float = EPS):
    return (a - b) / (a + b + eps)


def compute_indices(stack: PatchStack) -> PatchStack:
    """Append the six index channels (12..17) to a raw 12-channel stack."""
    if stack.channels != 12:
        raise ShapeError(f"compute_indices needs a 12-channel stack, got {stack.channels}")
    raw = stack.data
    idx = [normalized_difference(raw[..., a], raw[..., b]) for a, b in INDEX_PAIRS.values()]
    enriched = np.concatenate([raw, np.stack(idx, axis=-1).astype(raw.dtype)], axis=-1)
    return PatchStack(enriched)


@dataclass(frozen=True)
class ScalerParams:
    mode: str
    center: np.ndarray
    scale: np.ndarray
    fitted_on: str = ""

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "center": [float(v) for v in self.center],
            "scale": [float(v) for v in self.scale],
            "fitted_on": self.fitted_on,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScalerParams":
        return cls(d["mode"], np.asarray(d["center"], float), np.asarray(d["scale"], float),
                   d.get("fitted_on", ""))

    @property
    def mean(self):
        return self.center

    @property
    def std(self):
        return self.scale

    @property
    def p5(self):
        return self.center

    @property
    def p95(self):
        return self.center + self.scale


def fit_scaler(stacks, mode: str = "standard") -> ScalerParams:
    """Per-channel statistics over the pooled pixels of all ``stacks``.

    ``standard`` stores mean and population std; ``robust`` stores the 5th
    percentile as center and ``p95 - p5`` as scale (linear interpolation).
    """
    if isinstance(stacks, PatchStack):
        stacks = [stacks]
    stacks = list(stacks)
    if not stacks:
        raise PreconditionError("fit_scaler needs at least one stack")
    channels = {s.channels for s in stacks}
    if len(channels) != 1:
        raise ShapeError(f"stacks disagree on channel count: {sorted(channels)}")
    (c,) = channels
    pooled = np.concatenate([s.data.reshape(-1, c) for s in stacks], axis=0).astype(np.float64)
    described = "+".join(f"N={s.n}" for s in stacks)
    if mode == "standard":
        mu = pooled.mean(axis=0)
        sigma = pooled.std(axis=0)
        return ScalerParams("standard", mu, sigma, described)
    if mode == "robust":
        p5, p95 = np.percentile(pooled, [5, 95], axis=0, method="linear")
        return ScalerParams("robust", p5, p95 - p5, described)
    if mode == "none":
        return ScalerParams("none", np.zeros(c), np.ones(c), described)
    raise PreconditionError(f"unknown scaler mode {mode!r}")


def apply_scaler(stack: PatchStack, params: ScalerParams) -> PatchStack:
    if params.mode == "none":
        return stack
    if len(params.center) != stack.channels:
        raise ShapeError(
            f"scaler fitted on {len(params.center)} channels, stack has {stack.channels}")
    scale = np.maximum(params.scale, SCALE_FLOOR)
    out = (stack.data.astype(np.float64) - params.center) / scale
    return PatchStack(out.astype(stack.data.dtype))


@dataclass(frozen=True)
class FeatureTable:
    matrix: np.ndarray
    column_names: tuple
    ids: tuple = ()

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[1] != len(self.column_names):
            raise ShapeError(f"matrix {m.shape} does not match {len(self.column_names)} names")
        if len(set(self.column_names)) != len(self.column_names):
            raise ShapeError("column names must be unique")
        if not np.isfinite(m).all():
            raise ValueError("feature matrix must be finite")
        ids = tuple(self.ids) if self.ids else tuple(str(i) for i in range(m.shape[0]))
        if len(ids) != m.shape[0]:
            raise ShapeError(f"{len(ids)} ids for {m.shape[0]} rows")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "column_names", tuple(self.column_names))
        object.__setattr__(self, "ids", ids)

    @property
    def shape(self):
        return self.matrix.shape

    def subset(self, rows) -> "FeatureTable":
        rows = np.asarray(rows)
        return FeatureTable(self.matrix[rows], self.column_names, tuple(self.ids[i] for i in rows))


def column_name(channel: int, stat: str) -> str:
    return f"ch{channel}_{stat}"


def parse_column(name: str):
    ch, stat = name.split("_", 1)
    return int(ch[2:]), stat


def compute_patch_statistics(stack: PatchStack, ids=None) -> FeatureTable:
    """Seven descriptors per channel, columns ordered channel-major.

    Moments use population conventions: ``std`` with ddof=0, Fisher skewness
    ``m3 / m2**1.5`` and excess kurtosis ``m4 / m2**2 - 3``; both are zero when
    ``m2 < 1e-24``.
    """
    n, h, w, c = stack.data.shape
    x = stack.data.reshape(n, h * w, c).astype(np.float64)
    mean = x.mean(axis=1)
    dev = x - mean[:, None, :]
    m2 = np.mean(dev ** 2, axis=1)
    m3 = np.mean(dev ** 3, axis=1)
    m4 = np.mean(dev ** 4, axis=1)
    flat = m2 < MOMENT_FLOOR
    safe = np.where(flat, 1.0, m2)
    skew = np.where(flat, 0.0, m3 / safe ** 1.5)
    kurt = np.where(flat, 0.0, m4 / safe ** 2 - 3.0)
    stats = {
        "min": x.min(axis=1),
        "mean": mean,
        "median": np.median(x, axis=1),
        "max": x.max(axis=1),
        "std": np.sqrt(m2),
        "skew": skew,
        "kurt": kurt,
    }
    matrix = np.stack([stats[s] for s in STATS], axis=2).reshape(n, c * len(STATS))
    names = tuple(column_name(ch, s) for ch in range(c) for s in STATS)
    return FeatureTable(matrix, names, tuple(ids) if ids is not None else ())


def _channel_number(name) -> int:
    if isinstance(name, (int, np.integer)):
        return int(name)
    table = LAYOUT.indices
    if name in table:
        return table[name]
    raise KeyError(f"unknown channel {name!r}")


def filter_columns(table: FeatureTable, drop_stats=(), drop_channels=()) -> FeatureTable:
    """Remove every column whose statistic or channel is listed."""
    present = [parse_column(n) for n in table.column_names]
    known_stats = {s for _, s in present}
    known_channels = {c for c, _ in present}
    drop_stats = set(drop_stats)
    for s in drop_stats:
        if s not in known_stats:
            raise KeyError(f"unknown statistic {s!r}")
    chans = {_channel_number(c) for c in drop_channels}
    for c in chans:
        if c not in known_channels:
            raise KeyError(f"channel {c} not present in table")
    keep = [i for i, (c, s) in enumerate(present) if s not in drop_stats and c not in chans]
    return FeatureTable(table.matrix[:, keep], tuple(table.column_names[i] for i in keep), table.ids)


def save_feature_table(table: FeatureTable, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["ID", *table.column_names])
        for pid, row in zip(table.ids, table.matrix):
            writer.writerow([pid, *("%.9g" % v for v in row)])


def load_feature_table(path) -> FeatureTable:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "ID":
            raise FormatError(f"{path}: feature table must start with an ID column")
        ids, rows = [], []
        for row in reader:
            if row:
                ids.append(row[0])
                rows.append([float(v) for v in row[1:]])
    matrix = np.array(rows, dtype=np.float64).reshape(len(rows), len(header) - 1)
    return FeatureTable(matrix, tuple(header[1:]), tuple(ids))


def channel_label(channel: int) -> str:
    names = CHANNEL_NAMES + INDEX_NAMES
    return names[channel] if channel < len(names) else f"ch{channel}"
