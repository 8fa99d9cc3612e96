"""Second-order split search over histograms and capped leaf values."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .histogram import Histogram
from .objective import EPS


@njit(cache=True, nogil=True)
def split_gain(g_left, h_left, g_right, h_right, g_parent, h_parent, eps):
    return (
        g_left * g_left / (h_left + eps)
        + g_right * g_right / (h_right + eps)
        - g_parent * g_parent / (h_parent + eps)
    )


@njit(cache=True, nogil=True)
def _category_order(sum_g, sum_h, count, f, n_bins):
    present = 0
    for b in range(n_bins):
        if count[f, b] > 0:
            present += 1
    codes = np.empty(present, dtype=np.int64)
    ratio = np.empty(present)
    k = 0
    for b in range(n_bins):
        if count[f, b] > 0:
            codes[k] = b
            h = sum_h[f, b]
            g = sum_g[f, b]
            if h > 0.0:
                ratio[k] = g / h
            elif g > 0.0:
                ratio[k] = np.inf
            elif g < 0.0:
                ratio[k] = -np.inf
            else:
                ratio[k] = 0.0
            k += 1
    order = np.argsort(ratio, kind="mergesort")
    return codes[order]


@njit(cache=True, nogil=True)
def _find_best(sum_g, sum_h, count, n_bins_per_feature, is_categorical,
               g_parent, h_parent, c_parent, min_samples_leaf, min_hessian, eps):
    best_gain = 0.0
    best_feature = -1
    best_pos = -1
    best_gl = 0.0
    best_hl = 0.0
    best_cl = 0
    n_features = sum_g.shape[0]
    for f in range(n_features):
        nb = n_bins_per_feature[f]
        if is_categorical[f]:
            codes = _category_order(sum_g, sum_h, count, f, nb)
            steps = codes.shape[0] - 1
        else:
            codes = np.arange(nb)
            steps = nb - 1
        gl = 0.0
        hl = 0.0
        cl = 0
        for p in range(steps):
            b = codes[p]
            gl += sum_g[f, b]
            hl += sum_h[f, b]
            cl += count[f, b]
            cr = c_parent - cl
            if cr < min_samples_leaf:
                break
            if cl < min_samples_leaf:
                continue
            hr = h_parent - hl
            if hl < min_hessian or hr < min_hessian:
                continue
            gain = split_gain(gl, hl, g_parent - gl, hr, g_parent, h_parent, eps)
            if gain > best_gain:
                best_gain = gain
                best_feature = f
                best_pos = p
                best_gl = gl
                best_hl = hl
                best_cl = cl
    return best_feature, best_pos, best_gain, best_gl, best_hl, best_cl


@dataclass(frozen=True)
class SplitCandidate:
    """Best split of a node.

    ``left_bins`` lists the bins sent left: ``0..b`` for a numeric threshold
    at bin ``b``, the chosen category codes for a categorical feature.
    """

    feature: int
    gain: float
    categorical: bool
    bin_threshold: int  # numeric: last bin on the left; categorical: prefix length - 1
    left_bins: np.ndarray
    sum_gradient_left: float
    sum_hessian_left: float
    count_left: int
    sum_gradient_right: float
    sum_hessian_right: float
    count_right: int

    def left_mask(self, n_bins: int = 256) -> np.ndarray:
        mask = np.zeros(n_bins, dtype=bool)
        mask[self.left_bins] = True
        return mask


def best_split(
    histogram: Histogram,
    n_bins_per_feature: np.ndarray,
    is_categorical: np.ndarray,
    sum_gradient: float,
    sum_hessian: float,
    count: int,
    min_samples_leaf: int = 1,
    min_sum_hessian_leaf: float = 0.0,
) -> SplitCandidate | None:
    """Maximal-gain split of a node, or ``None`` when no split has positive gain.

    Numeric features split on bin thresholds (left = bins ``<= b``);
    categorical features order their present categories by gradient/hessian
    ratio and scan prefixes. Ties keep the lowest feature, then the lowest
    threshold.
    """
    n_bins_per_feature = np.asarray(n_bins_per_feature, dtype=np.int64)
    is_categorical = np.asarray(is_categorical, dtype=np.bool_)
    f, pos, gain, gl, hl, cl = _find_best(
        histogram.sum_gradient, histogram.sum_hessian, histogram.count,
        n_bins_per_feature, is_categorical,
        float(sum_gradient), float(sum_hessian), int(count),
        int(min_samples_leaf), float(min_sum_hessian_leaf), EPS,
    )
    if f < 0:
        return None
    if is_categorical[f]:
        order = _category_order(
            histogram.sum_gradient, histogram.sum_hessian, histogram.count, f, n_bins_per_feature[f]
        )
        left = np.sort(order[: pos + 1])
    else:
        left = np.arange(pos + 1)
    return SplitCandidate(
        feature=int(f),
        gain=float(gain),
        categorical=bool(is_categorical[f]),
        bin_threshold=int(pos),
        left_bins=left,
        sum_gradient_left=gl,
        sum_hessian_left=hl,
        count_left=int(cl),
        sum_gradient_right=float(sum_gradient) - gl,
        sum_hessian_right=float(sum_hessian) - hl,
        count_right=int(count) - int(cl),
    )


def leaf_value(sum_gradient: float, sum_hessian: float, leaf_cap: float = 1.5) -> float:
    """Newton step ``-G / (H + eps)`` clamped to ``[-leaf_cap, leaf_cap]``."""
    if sum_hessian < 0:
        raise ValueError("sum of hessians must be non-negative")
    value = -sum_gradient / (sum_hessian + EPS)
    return min(leaf_cap, max(-leaf_cap, value)) + 0.0
