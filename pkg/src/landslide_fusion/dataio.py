"""Patch-stack and label I/O plus the seeded synthetic landslide generator.

Patch stacks live on disk as version-1.0 ``.npy`` containers holding a
little-endian float32, C-ordered ``(N, 64, 64, C)`` array.  Label and
prediction tables are small UTF-8 CSV files with fixed headers.
"""
from __future__ import annotations

import ast
import csv
import math
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import DataError, FormatError, PreconditionError, ShapeError

__all__ = [
    "CHANNEL_NAMES",
    "INDEX_NAMES",
    "MODALITY_GROUPS",
    "ChannelLayout",
    "LabelTable",
    "PatchStack",
    "SyntheticSpec",
    "generate_synthetic_dataset",
    "load_labels",
    "load_patch_stack",
    "positive_count",
    "save_labels",
    "save_predictions",
    "write_patch_stack",
]

CHANNEL_NAMES = (
    "Red", "Green", "Blue", "NIR",
    "DescVV", "DescVH", "DescDiffVV", "DescDiffVH",
    "AscVV", "AscVH", "AscDiffVV", "AscDiffVH",
)
INDEX_NAMES = ("NDVI", "NDWI", "NIRBlue", "BlueGreen", "BlueRed", "GreenRed")

MODALITY_GROUPS = {
    "RGBN": (0, 1, 2, 3),
    "SAR": (4, 5, 8, 9),
    "SARdiff": (6, 7, 10, 11),
    "Indices": (12, 13, 14, 15, 16, 17),
}

PATCH_SIZE = 64
_NPY_MAGIC = b"\x93NUMPY"


@dataclass(frozen=True)
class ChannelLayout:
    names: tuple = CHANNEL_NAMES + INDEX_NAMES
    groups: dict = field(default_factory=lambda: dict(MODALITY_GROUPS))

    @property
    def indices(self) -> dict:
        return {name: i for i, name in enumerate(self.names)}

    def channels_of(self, groups) -> tuple:
        """Sorted channel positions covered by the named modality groups."""
        out = set()
        for g in groups:
            if g not in self.groups:
                raise KeyError(f"unknown modality group {g!r}")
            out.update(self.groups[g])
        return tuple(sorted(out))


LAYOUT = ChannelLayout()


@dataclass(frozen=True)
class PatchStack:
    """Immutable ``N x H x W x C`` stack of multi-band patches."""

    data: np.ndarray

    def __post_init__(self):
        data = np.ascontiguousarray(self.data)
        if data.ndim != 4:
            raise ShapeError(f"patch stack must be rank 4 (N,H,W,C), got shape {data.shape}")
        if data.shape[0] < 1:
            raise PreconditionError("patch stack must contain at least one patch")
        if data.shape[3] not in (12, 18):
            raise ShapeError(f"channel count must be 12 or 18, got {data.shape[3]}")
        if data.dtype not in (np.float32, np.float64):
            data = data.astype(np.float32)
        bad = ~np.isfinite(data)
        if bad.any():
            first = tuple(int(i) for i in np.argwhere(bad)[0])
            raise DataError(f"non-finite value at index {first}")
        if data.flags.writeable:
            data = data.copy() if data is self.data else data
            data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def channels(self) -> int:
        return self.data.shape[3]

    def __len__(self):
        return self.n

    def subset(self, idx) -> "PatchStack":
        return PatchStack(self.data[np.asarray(idx)])


@dataclass(frozen=True, eq=False)
class LabelTable:
    ids: tuple
    labels: np.ndarray

    def __post_init__(self):
        ids = tuple(str(i) for i in self.ids)
        labels = np.asarray(self.labels, dtype=np.int64).copy()
        if len(ids) != len(labels):
            raise ShapeError(f"{len(ids)} ids but {len(labels)} labels")
        if len(set(ids)) != len(ids):
            raise DataError("patch ids must be unique")
        if not np.isin(labels, (0, 1)).all():
            raise DataError("labels must be 0 or 1")
        labels.setflags(write=False)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return len(self.ids)

    def __eq__(self, other):
        if not isinstance(other, LabelTable):
            return NotImplemented
        return self.ids == other.ids and np.array_equal(self.labels, other.labels)

    __hash__ = None

    @property
    def positives(self) -> int:
        return int(self.labels.sum())


@dataclass(frozen=True)
class SyntheticSpec:
    n: int = 400
    pos_ratio: float = 0.175
    difficulty: float = 0.3
    seed: int = 0
    size: int = PATCH_SIZE

    def __post_init__(self):
        if self.n < 2:
            raise PreconditionError("synthetic dataset needs n >= 2")
        if not 0.0 <= self.pos_ratio <= 1.0:
            raise PreconditionError("pos_ratio must lie in [0, 1]")
        if not 0.0 <= self.difficulty <= 1.0:
            raise PreconditionError("difficulty must lie in [0, 1]")
        if positive_count(self.n, self.pos_ratio) < 1:
            raise PreconditionError("spec yields no positive samples")


def positive_count(n: int, pos_ratio: float) -> int:
    """Round-half-up of ``n * pos_ratio``."""
    return int(math.floor(n * pos_ratio + 0.5))


# ---------------------------------------------------------------------------
# .npy container
# ---------------------------------------------------------------------------

def _npy_header(shape) -> bytes:
    header = "{'descr': '<f4', 'fortran_order': False, 'shape': %r, }" % (tuple(shape),)
    # magic(6) + version(2) + u16 length(2) + header must be a multiple of 64
    total = 10 + len(header) + 1
    header += " " * ((64 - total % 64) % 64) + "\n"
    return _NPY_MAGIC + b"\x01\x00" + struct.pack("<H", len(header)) + header.encode("latin1")


def write_patch_stack(stack: PatchStack, path) -> None:
    """Write ``stack`` as a v1.0 ``.npy`` file of little-endian float32."""
    data = stack.data if isinstance(stack, PatchStack) else np.asarray(stack)
    if data.ndim != 4 or data.shape[0] == 0:
        raise PreconditionError(f"refusing to write empty or non rank-4 stack {data.shape}")
    payload = np.ascontiguousarray(data, dtype="<f4")
    path = Path(path)
    try:
        with open(path, "wb") as fh:
            fh.write(_npy_header(payload.shape))
            fh.write(payload.tobytes(order="C"))
    except OSError as exc:
        raise OSError(f"cannot write patch stack to {path}: {exc}") from exc


def _read_npy_header(fh, path):
    magic = fh.read(6)
    if magic != _NPY_MAGIC:
        raise FormatError(f"{path}: not an .npy container (bad magic)")
    version = fh.read(2)
    if version != b"\x01\x00":
        raise FormatError(f"{path}: unsupported .npy version {tuple(version)}, expected (1, 0)")
    raw_len = fh.read(2)
    if len(raw_len) != 2:
        raise FormatError(f"{path}: truncated header")
    (hlen,) = struct.unpack("<H", raw_len)
    text = fh.read(hlen)
    if len(text) != hlen:
        raise FormatError(f"{path}: truncated header")
    try:
        header = ast.literal_eval(text.decode("latin1"))
    except (ValueError, SyntaxError) as exc:
        raise FormatError(f"{path}: unparsable header dict") from exc
    if not isinstance(header, dict) or set(header) != {"descr", "fortran_order", "shape"}:
        raise FormatError(f"{path}: header must hold exactly descr, fortran_order, shape")
    if header["descr"] != "<f4":
        raise FormatError(f"{path}: dtype must be '<f4', got {header['descr']!r}")
    if header["fortran_order"] is not False:
        raise FormatError(f"{path}: fortran_order arrays are not supported")
    shape = header["shape"]
    if not isinstance(shape, tuple) or not all(isinstance(s, int) and s >= 0 for s in shape):
        raise FormatError(f"{path}: malformed shape {shape!r}")
    return shape


def load_patch_stack(path, *, size: int = PATCH_SIZE) -> PatchStack:
    """Read a ``(N, 64, 64, C)`` float32 stack written by :func:`write_patch_stack`."""
    path = Path(path)
    with open(path, "rb") as fh:
        shape = _read_npy_header(fh, path)
        if len(shape) != 4:
            raise ShapeError(f"{path}: expected rank-4 (N,{size},{size},C), got shape {shape}")
        if shape[1] != size or shape[2] != size:
            raise ShapeError(f"{path}: patches must be {size}x{size}, got {shape[1]}x{shape[2]}")
        if shape[3] not in (12, 18):
            raise ShapeError(f"{path}: channel count must be 12 or 18, got {shape[3]}")
        count = int(np.prod(shape))
        buf = fh.read(count * 4)
        if len(buf) != count * 4:
            raise FormatError(f"{path}: payload truncated ({len(buf)} of {count * 4} bytes)")
    data = np.frombuffer(buf, dtype="<f4").reshape(shape).astype(np.float32)
    try:
        return PatchStack(data)
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None


# ---------------------------------------------------------------------------
# CSV tables
# ---------------------------------------------------------------------------

def load_labels(path) -> LabelTable:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["ID", "label"]:
            raise FormatError(f"{path}: header must be 'ID,label', got {header!r}")
        ids, labels, seen = [], [], set()
        for row_no, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != 2:
                raise FormatError(f"{path}: row {row_no} has {len(row)} fields")
            pid, raw = row
            if pid in seen:
                raise DataError(f"{path}: duplicate ID {pid!r} at row {row_no}")
            if raw.strip() not in ("0", "1"):
                raise DataError(f"{path}: label {raw!r} at row {row_no} is not 0 or 1")
            seen.add(pid)
            ids.append(pid)
            labels.append(int(raw))
    return LabelTable(tuple(ids), np.array(labels, dtype=np.int64))


def save_labels(table: LabelTable, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["ID", "label"])
        for pid, y in zip(table.ids, table.labels):
            writer.writerow([pid, int(y)])


def save_predictions(ids, probabilities, threshold: float, path) -> None:
    """Write ``ID,probability,label`` rows; label is 1 iff probability >= threshold."""
    probs = np.asarray(probabilities, dtype=np.float64)
    ids = list(ids)
    if len(ids) != len(probs):
        raise ShapeError(f"{len(ids)} ids but {len(probs)} probabilities")
    if probs.size and (not np.isfinite(probs).all() or probs.min() < 0.0 or probs.max() > 1.0):
        raise ValueError("probabilities must lie in [0, 1]")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["ID", "probability", "label"])
        for pid, p in zip(ids, probs):
            writer.writerow([pid, repr(float(p)), int(p >= threshold)])


# ---------------------------------------------------------------------------
# synthetic generator
# ---------------------------------------------------------------------------

def _smooth_fields(rng, n, channels, size, sigma=4.0):
    noise = rng.standard_normal((n, size, size, channels))
    field = gaussian_filter(noise, sigma=(0, sigma, sigma, 0), mode="wrap")
    field /= field.std(axis=(1, 2), keepdims=True) + 1e-12
    return field


def _ellipse_mask(rng, size):
    cy, cx = rng.uniform(0.25 * size, 0.75 * size, 2)
    a, b = rng.uniform(0.1 * size, 0.25 * size, 2)
    theta = rng.uniform(0, np.pi)
    yy, xx = np.mgrid[0:size, 0:size] + 0.5
    dy, dx = yy - cy, xx - cx
    u = (dx * np.cos(theta) + dy * np.sin(theta)) / a
    v = (-dx * np.sin(theta) + dy * np.cos(theta)) / b
    r = np.sqrt(u * u + v * v)
    # soft rim so the region has no single-pixel step
    return np.clip((1.0 - r) / 0.15 + 0.5, 0.0, 1.0)


def _plant_optical(patch, mask, strength):
    m = mask * strength
    patch[..., 3] *= 1.0 - 0.55 * m
    patch[..., 0] += 0.09 * m
    patch[..., 1] += 0.05 * m
    patch[..., 2] += 0.04 * m


def _plant_sar(patch, mask, strength, rng):
    m = mask * strength
    size = mask.shape[0]
    for c in MODALITY_GROUPS["SARdiff"]:
        # variance-coded change: speckle burst plus a small mean drop
        patch[..., c] += m * (1.3 * rng.standard_normal((size, size)) - 0.3)
    for c in MODALITY_GROUPS["SAR"]:
        patch[..., c] -= 0.8 * m


def generate_synthetic_dataset(spec: SyntheticSpec, *, return_regions: bool = False):
    """Seeded stack of vegetated scenes with planted landslide scars.

    Positives get an elliptical region with depressed NIR and raised visible
    reflectance (an NDVI drop) plus a localized speckle burst in the SAR
    difference channels.  ``difficulty`` raises pixel noise, weakens the
    planted signal and introduces single-modality distractors into negatives
    (bare soil without radar change, radar change without soil exposure).

    Returns ``(PatchStack, LabelTable)``, or additionally the per-sample
    region masks (drawn for every sample, planted only where applicable)
    when ``return_regions`` is true.
    """
    rng = np.random.default_rng(spec.seed)
    n, size, d = spec.n, spec.size, spec.difficulty
    n_pos = positive_count(n, spec.pos_ratio)
    labels = np.zeros(n, dtype=np.int64)
    labels[:n_pos] = 1
    rng.shuffle(labels)

    field = _smooth_fields(rng, n, 12, size)
    data = np.empty((n, size, size, 12), dtype=np.float64)
    regions = np.empty((n, size, size), dtype=np.float64)

    opt_noise = 0.006 + 0.03 * d
    sar_noise = 0.4 + 1.2 * d
    diff_noise = 0.25 + 0.5 * d
    p_distract = 0.6 * d
    for i in range(n):
        f = field[i]
        patch = np.empty((size, size, 12))
        nir0 = rng.uniform(0.22, 0.38)
        patch[..., 0] = 0.05 + 0.012 * f[..., 0]
        patch[..., 1] = 0.08 + 0.012 * f[..., 1]
        patch[..., 2] = 0.05 + 0.010 * f[..., 2]
        patch[..., 3] = nir0 + 0.04 * f[..., 3]
        for c, level in zip((4, 5, 8, 9), (-9.0, -16.0, -9.5, -16.5)):
            patch[..., c] = level + 1.5 * f[..., c]
        for c in MODALITY_GROUPS["SARdiff"]:
            patch[..., c] = 0.6 * f[..., c]

        mask = _ellipse_mask(rng, size)
        regions[i] = mask
        strength = rng.uniform(0.6, 1.0) * (1.0 - 0.5 * d)
        soil, radar = rng.random(2)
        if labels[i] == 1:
            _plant_optical(patch, mask, strength)
            _plant_sar(patch, mask, strength, rng)
        else:
            if soil < p_distract:
                _plant_optical(patch, mask, strength * rng.uniform(0.3, 0.8))
            if radar < p_distract:
                _plant_sar(patch, mask, strength * rng.uniform(0.5, 1.0), rng)

        patch[..., :4] += opt_noise * rng.standard_normal((size, size, 4))
        sar_idx = list(MODALITY_GROUPS["SAR"])
        patch[..., sar_idx] += sar_noise * rng.standard_normal((size, size, 4))
        diff_idx = list(MODALITY_GROUPS["SARdiff"])
        patch[..., diff_idx] += diff_noise * rng.standard_normal((size, size, 4))
        patch[..., :4] = np.maximum(patch[..., :4], 0.002)
        data[i] = patch

    width = len(str(n - 1))
    ids = tuple(f"ID_{i:0{width}d}" for i in range(n))
    stack = PatchStack(data.astype(np.float32))
    table = LabelTable(ids, labels)
    if return_regions:
        return stack, table, regions
    return stack, table
