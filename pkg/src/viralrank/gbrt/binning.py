"""Quantile binning of feature columns into at most 256 bins."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_BINS = 256


def _upper_bounds(values: np.ndarray, max_bins: int) -> np.ndarray:
    distinct, counts = np.unique(values, return_counts=True)
    k = len(distinct)
    if k <= max_bins:
        cut = np.arange(k - 1)
    else:
        # equi-frequency: cut after the distinct value where the running
        # count first reaches each quantile level
        cum = np.cumsum(counts)
        levels = np.arange(1, max_bins) * (len(values) / max_bins)
        cut = np.unique(np.searchsorted(cum, levels, side="left"))
        cut = cut[cut < k - 1]
    lo = distinct[cut]
    hi = distinct[cut + 1]
    mid = lo + (hi - lo) / 2.0
    # midpoint can round onto the upper neighbour for adjacent floats
    mid = np.where(mid >= hi, lo, mid)
    return np.append(mid, np.inf)


@dataclass
class BinMapper:
    """Per-feature bin layout learned once on the training matrix.

    Numeric features map ``x`` to the first bin whose upper bound is
    ``>= x``, so ``bin(x) <= b`` exactly when ``x <= upper_bounds[b]``.
    Categorical features use their integer code as the bin.
    """

    is_categorical: np.ndarray
    upper_bounds: list[np.ndarray]
    n_bins: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray, is_categorical: np.ndarray, max_bins: int = 255) -> "BinMapper":
        X = np.asarray(X, dtype=np.float64)
        if not 2 <= max_bins <= MAX_BINS:
            raise ValueError(f"max_bins must lie in [2, {MAX_BINS}]")
        if not np.all(np.isfinite(X)):
            raise ValueError("feature values must be finite")
        is_categorical = np.asarray(is_categorical, dtype=bool)
        bounds: list[np.ndarray] = []
        n_bins = np.zeros(X.shape[1], dtype=np.int64)
        for j in range(X.shape[1]):
            col = X[:, j]
            if is_categorical[j]:
                codes = col.astype(np.int64)
                if np.any(codes != col) or np.any(codes < 0):
                    raise ValueError(f"categorical feature {j} needs non-negative integer codes")
                n = int(codes.max()) + 1 if len(codes) else 1
                if n > max_bins:
                    raise ValueError(f"categorical feature {j} has {n} codes, max_bins is {max_bins}")
                bounds.append(np.empty(0))
                n_bins[j] = n
            else:
                ub = _upper_bounds(col, max_bins) if len(col) else np.array([np.inf])
                bounds.append(ub)
                n_bins[j] = len(ub)
        return cls(is_categorical=is_categorical, upper_bounds=bounds, n_bins=n_bins)

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        out = np.empty(X.shape, dtype=np.uint8)
        for j in range(X.shape[1]):
            if self.is_categorical[j]:
                codes = X[:, j].astype(np.int64)
                if np.any(codes >= self.n_bins[j]) or np.any(codes < 0):
                    raise ValueError(f"categorical feature {j} has codes outside the training range")
                out[:, j] = codes
            else:
                out[:, j] = np.searchsorted(self.upper_bounds[j], X[:, j], side="left")
        return out

    def threshold(self, feature: int, bin_index: int) -> float:
        return float(self.upper_bounds[feature][bin_index])
