"""Regression trees and leaf-wise (best-first) growth."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
from numba import njit

from .binning import BinMapper
from .histogram import Histogram, build_histograms
from .split import SplitCandidate, best_split, leaf_value

N_BINS = 256


@dataclass
class RegressionTree:
    """Binary tree stored as parallel node arrays; node 0 is the root.

    Internal nodes have ``feature >= 0``; numeric nodes send ``x <= threshold``
    left, categorical nodes send codes in ``categories`` left. Leaves carry
    ``value`` (before the learning rate).
    """

    feature: list[int] = field(default_factory=list)
    threshold: list[float] = field(default_factory=list)
    categories: list[list[int] | None] = field(default_factory=list)
    left: list[int] = field(default_factory=list)
    right: list[int] = field(default_factory=list)
    value: list[float] = field(default_factory=list)
    gain: list[float] = field(default_factory=list)
    count: list[int] = field(default_factory=list)

    def add_leaf(self, value: float, count: int) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.categories.append(None)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(value)
        self.gain.append(0.0)
        self.count.append(count)
        return len(self.feature) - 1

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_leaves(self) -> int:
        return sum(1 for f in self.feature if f < 0)

    def leaf_values(self) -> list[float]:
        return [v for f, v in zip(self.feature, self.value) if f < 0]

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Leaf value reached by each row of ``X``."""
        packed = PackedForest.from_trees([self])
        return packed.leaf_outputs(np.asarray(X, dtype=np.float64))

    # -- nested JSON -------------------------------------------------------

    def to_nested(self, node: int = 0) -> dict[str, Any]:
        if self.feature[node] < 0:
            return {"leaf": self.value[node], "count": self.count[node]}
        out: dict[str, Any] = {"feature": self.feature[node], "gain": self.gain[node], "count": self.count[node]}
        if self.categories[node] is not None:
            out["categories"] = list(self.categories[node])
        else:
            out["threshold"] = self.threshold[node]
        out["left"] = self.to_nested(self.left[node])
        out["right"] = self.to_nested(self.right[node])
        return out

    @classmethod
    def from_nested(cls, data: dict[str, Any]) -> "RegressionTree":
        tree = cls()
        pending = [(data, tree.add_leaf(0.0, 0))]
        while pending:
            node, idx = pending.pop()
            tree.count[idx] = int(node.get("count", 0))
            if "leaf" in node:
                tree.value[idx] = float(node["leaf"])
                continue
            tree.feature[idx] = int(node["feature"])
            tree.gain[idx] = float(node.get("gain", 0.0))
            if "categories" in node:
                tree.categories[idx] = [int(c) for c in node["categories"]]
            else:
                tree.threshold[idx] = float(node["threshold"])
            tree.left[idx] = tree.add_leaf(0.0, 0)
            tree.right[idx] = tree.add_leaf(0.0, 0)
            pending.append((node["right"], tree.right[idx]))
            pending.append((node["left"], tree.left[idx]))
        return tree


@njit(cache=True, nogil=True)
def _accumulate(X, roots, feature, threshold, cat_index, bitmap, left, value, scale, out):
    # right child is always stored at left + 1
    n = X.shape[0]
    for t in range(roots.shape[0]):
        root = roots[t]
        for i in range(n):
            node = root
            f = feature[node]
            while f >= 0:
                x = X[i, f]
                c = cat_index[node]
                if c < 0:
                    go_right = x > threshold[node]
                else:
                    go_right = True
                    if x >= 0.0 and x < 256.0:
                        code = int(x)
                        if code == x and bitmap[c, code]:
                            go_right = False
                node = left[node] + np.int64(go_right)
                f = feature[node]
            out[i] += scale * value[node]


@dataclass
class PackedForest:
    """All trees flattened into contiguous arrays for fast traversal."""

    roots: np.ndarray
    feature: np.ndarray
    threshold: np.ndarray
    cat_index: np.ndarray
    bitmap: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @classmethod
    def from_trees(cls, trees: list[RegressionTree]) -> "PackedForest":
        roots, feature, threshold, cat_index, left, right, value = [], [], [], [], [], [], []
        bitmaps: list[np.ndarray] = []
        offset = 0
        for tree in trees:
            roots.append(offset)
            for k in range(tree.n_nodes):
                if tree.feature[k] >= 0 and tree.right[k] != tree.left[k] + 1:
                    raise ValueError("tree layout requires right child at left + 1")
                feature.append(tree.feature[k])
                threshold.append(tree.threshold[k])
                cats = tree.categories[k]
                if cats is not None:
                    row = np.zeros(N_BINS, dtype=np.bool_)
                    row[[c for c in cats if 0 <= c < N_BINS]] = True
                    cat_index.append(len(bitmaps))
                    bitmaps.append(row)
                else:
                    cat_index.append(-1)
                left.append(tree.left[k] + offset if tree.left[k] >= 0 else -1)
                right.append(tree.right[k] + offset if tree.right[k] >= 0 else -1)
                value.append(tree.value[k])
            offset += tree.n_nodes
        return cls(
            roots=np.array(roots, dtype=np.int64),
            feature=np.array(feature, dtype=np.int64),
            threshold=np.array(threshold, dtype=np.float64),
            cat_index=np.array(cat_index, dtype=np.int64),
            bitmap=np.array(bitmaps, dtype=np.bool_).reshape(len(bitmaps), N_BINS),
            left=np.array(left, dtype=np.int64),
            right=np.array(right, dtype=np.int64),
            value=np.array(value, dtype=np.float64),
        )

    def accumulate(self, X: np.ndarray, out: np.ndarray, scale: float) -> None:
        """Add ``scale * leaf value`` of every tree, in tree order, to ``out``."""
        if len(self.roots) == 0:
            return
        _accumulate(
            np.ascontiguousarray(X, dtype=np.float64), self.roots, self.feature, self.threshold,
            self.cat_index, self.bitmap, self.left, self.value, float(scale), out,
        )

    def leaf_outputs(self, X: np.ndarray) -> np.ndarray:
        out = np.zeros(X.shape[0])
        self.accumulate(X, out, 1.0)
        return out


@dataclass(eq=False)
class _Leaf:
    node: int
    rows: np.ndarray
    histogram: Histogram
    sum_gradient: float
    sum_hessian: float
    split: SplitCandidate | None = None


def grow_tree(
    binned: np.ndarray,
    gradients: np.ndarray,
    hessians: np.ndarray,
    rows: np.ndarray,
    mapper: BinMapper,
    *,
    max_leaves: int,
    min_samples_leaf: int,
    min_sum_hessian_leaf: float,
    leaf_cap: float,
) -> tuple[RegressionTree, list[tuple[int, np.ndarray]]]:
    """Grow one tree best-first until ``max_leaves`` or no positive-gain split.

    Returns the tree and, for every leaf, the training rows that reached it.
    """
    rows = np.asarray(rows, dtype=np.int64)

    def find(hist: Histogram, g_sum: float, h_sum: float, count: int) -> SplitCandidate | None:
        return best_split(
            hist, mapper.n_bins, mapper.is_categorical, g_sum, h_sum, count,
            min_samples_leaf, min_sum_hessian_leaf,
        )

    hist_bins = int(mapper.n_bins.max())
    tree = RegressionTree()
    g_root = float(np.sum(gradients[rows]))
    h_root = float(np.sum(hessians[rows]))
    root = _Leaf(tree.add_leaf(0.0, len(rows)), rows, build_histograms(rows, gradients, hessians, binned, hist_bins), g_root, h_root)
    if max_leaves > 1:
        root.split = find(root.histogram, g_root, h_root, len(rows))
    leaves = [root]

    while len(leaves) < max_leaves:
        candidates = [leaf for leaf in leaves if leaf.split is not None]
        if not candidates:
            break
        # max gain, ties to the earliest-created node
        parent = max(candidates, key=lambda leaf: (leaf.split.gain, -leaf.node))
        split = parent.split
        go_left = split.left_mask(N_BINS)[binned[parent.rows, split.feature]]
        left_rows = parent.rows[go_left]
        right_rows = parent.rows[~go_left]

        if len(left_rows) <= len(right_rows):
            left_hist = build_histograms(left_rows, gradients, hessians, binned, hist_bins)
            right_hist = parent.histogram - left_hist
        else:
            right_hist = build_histograms(right_rows, gradients, hessians, binned, hist_bins)
            left_hist = parent.histogram - right_hist

        k = parent.node
        tree.feature[k] = split.feature
        tree.gain[k] = split.gain
        if split.categorical:
            tree.categories[k] = [int(c) for c in split.left_bins]
        else:
            tree.threshold[k] = mapper.threshold(split.feature, split.bin_threshold)
        left = _Leaf(tree.add_leaf(0.0, len(left_rows)), left_rows, left_hist,
                     split.sum_gradient_left, split.sum_hessian_left)
        right = _Leaf(tree.add_leaf(0.0, len(right_rows)), right_rows, right_hist,
                      split.sum_gradient_right, split.sum_hessian_right)
        tree.left[k] = left.node
        tree.right[k] = right.node

        leaves.remove(parent)
        leaves.extend([left, right])
        if len(leaves) < max_leaves:
            for child in (left, right):
                child.split = find(child.histogram, child.sum_gradient, child.sum_hessian, len(child.rows))

    leaf_rows = []
    for leaf in leaves:
        tree.value[leaf.node] = leaf_value(leaf.sum_gradient, leaf.sum_hessian, leaf_cap)
        leaf_rows.append((leaf.node, leaf.rows))
    return tree, leaf_rows
