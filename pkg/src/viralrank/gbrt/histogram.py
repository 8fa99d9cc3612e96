"""Gradient/Hessian histograms over pre-binned features.

A histogram set holds, for every feature and bin, the sum of gradients,
the sum of hessians and the number of rows of a node falling in that bin.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _build(rows, binned, gradients, hessians, n_bins):
    n_features = binned.shape[1]
    sum_g = np.zeros((n_features, n_bins))
    sum_h = np.zeros((n_features, n_bins))
    count = np.zeros((n_features, n_bins), dtype=np.int64)
    for k in range(rows.shape[0]):
        i = rows[k]
        g = gradients[i]
        h = hessians[i]
        for f in range(n_features):
            b = binned[i, f]
            sum_g[f, b] += g
            sum_h[f, b] += h
            count[f, b] += 1
    return sum_g, sum_h, count


@dataclass
class Histogram:
    sum_gradient: np.ndarray  # (n_features, n_bins)
    sum_hessian: np.ndarray
    count: np.ndarray

    def __sub__(self, other: "Histogram") -> "Histogram":
        return Histogram(
            self.sum_gradient - other.sum_gradient,
            self.sum_hessian - other.sum_hessian,
            self.count - other.count,
        )

    def __add__(self, other: "Histogram") -> "Histogram":
        return Histogram(
            self.sum_gradient + other.sum_gradient,
            self.sum_hessian + other.sum_hessian,
            self.count + other.count,
        )


def build_histograms(
    rows: np.ndarray,
    gradients: np.ndarray,
    hessians: np.ndarray,
    binned: np.ndarray,
    n_bins: int = 256,
) -> Histogram:
    """Accumulate per-bin sums over ``rows`` (visited in the given order)."""
    rows = np.ascontiguousarray(rows, dtype=np.int64)
    binned = np.ascontiguousarray(binned, dtype=np.uint8)
    g = np.ascontiguousarray(gradients, dtype=np.float64)
    h = np.ascontiguousarray(hessians, dtype=np.float64)
    return Histogram(*_build(rows, binned, g, h, n_bins))
