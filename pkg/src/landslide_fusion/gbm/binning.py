"""Quantile binning of a real feature matrix into small integer codes.

Cuts are placed on observed values: a value ``x`` falls in bin ``b`` when
``cuts[b-1] < x <= cuts[b]``.  Because every cut is itself a data value, a
strictly increasing transform of a feature maps the cuts onto the transformed
cuts exactly and leaves every bin index unchanged.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError

MAX_BINS = 256


@dataclass(frozen=True)
class BinnedMatrix:
    codes: np.ndarray          # N x F uint8/uint16
    bin_edges: tuple           # per feature, ascending cut values

    @property
    def shape(self):
        return self.codes.shape

    @property
    def n_bins(self) -> np.ndarray:
        return np.array([len(e) + 1 for e in self.bin_edges])

    def take(self, rows) -> "BinnedMatrix":
        return BinnedMatrix(self.codes[np.asarray(rows)], self.bin_edges)


def _as_matrix(table) -> np.ndarray:
    m = getattr(table, "matrix", table)
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D feature matrix, got shape {m.shape}")
    return m


def feature_cuts(values: np.ndarray, n_bins: int) -> np.ndarray:
    """Cut points at evenly spaced quantiles of the distinct values."""
    u = np.unique(values)
    m = u.size
    if m <= 1:
        return np.empty(0)
    if m <= n_bins:
        return u[:-1].copy()
    # j-th cut closes the lower bin after round(j*m/n_bins) distinct values
    counts = np.floor(np.arange(1, n_bins) * m / n_bins + 0.5).astype(np.int64)
    counts = np.unique(np.clip(counts, 1, m - 1))
    return u[counts - 1]


def apply_bins(matrix, bin_edges) -> np.ndarray:
    m = _as_matrix(matrix)
    if m.shape[1] != len(bin_edges):
        raise ShapeError(f"matrix has {m.shape[1]} features, binning expects {len(bin_edges)}")
    widest = max((len(e) for e in bin_edges), default=0) + 1
    dtype = np.uint8 if widest <= 256 else np.uint16
    codes = np.empty(m.shape, dtype=dtype)
    for j, edges in enumerate(bin_edges):
        # values above the last cut land in the top bin
        codes[:, j] = np.searchsorted(edges, m[:, j], side="left")
    return codes


def quantile_bin(table, n_bins: int = MAX_BINS) -> BinnedMatrix:
    if not 2 <= n_bins <= 65536:
        raise ValueError("n_bins must lie in [2, 65536]")
    m = _as_matrix(table)
    if not np.isfinite(m).all():
        raise ValueError("quantile_bin needs a finite matrix")
    edges = tuple(feature_cuts(m[:, j], n_bins) for j in range(m.shape[1]))
    return BinnedMatrix(apply_bins(m, edges), edges)
