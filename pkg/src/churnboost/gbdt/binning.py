"""Global quantile binning of feature columns.

Finite values go to bins ``0..len(edges)``: bin ``i`` holds values in
``(edges[i-1], edges[i]]``. Every feature's missing values share the final
bin index ``n_bins``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def quantile_bins(column, n_bins: int) -> np.ndarray:
    """Ascending upper bin edges (at most ``n_bins - 1``) from the finite values.

    Columns with at most ``n_bins`` distinct values get one bin per value.
    Otherwise edges sit at evenly spaced quantiles. Edges at or above the
    column maximum are dropped since they would leave an empty top bin.
    """
    if n_bins < 2:
        raise ValueError("n_bins must be >= 2")
    x = np.asarray(column, dtype=np.float64)
    x = x[np.isfinite(x)]
    if x.size == 0:
        return np.empty(0)
    distinct = np.unique(x)
    if distinct.size <= n_bins:
        return distinct[:-1].copy()
    qs = np.quantile(x, np.arange(1, n_bins) / n_bins)
    edges = np.unique(qs)
    return edges[edges < distinct[-1]]


@dataclass
class BinMap:
    edges: list[np.ndarray]
    n_bins: int

    @property
    def missing_bin(self) -> int:
        return self.n_bins

    @classmethod
    def fit(cls, values: np.ndarray, n_bins: int) -> "BinMap":
        values = np.asarray(values, dtype=np.float64)
        return cls([quantile_bins(values[:, j], n_bins) for j in range(values.shape[1])], n_bins)

    def transform(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=np.float64)
        if values.shape[1] != len(self.edges):
            raise ValueError(f"expected {len(self.edges)} columns, got {values.shape[1]}")
        out = np.empty(values.shape, dtype=np.uint16)
        for j, edges in enumerate(self.edges):
            col = values[:, j]
            b = np.searchsorted(edges, col, side="left")
            out[:, j] = np.where(np.isnan(col), self.missing_bin, b)
        return out
