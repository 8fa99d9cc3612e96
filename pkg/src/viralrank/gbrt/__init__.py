"""Histogram gradient-boosted regression trees with a Poisson objective."""

from .binning import BinMapper
from .config import TrainConfig
from .ensemble import Ensemble, SchemaMismatchError, fit, fit_arrays, predict
from .goss import goss_sample
from .histogram import Histogram, build_histograms
from .objective import EPS, base_score, grad_hess, poisson_loss, total_loss
from .split import SplitCandidate, best_split, leaf_value, split_gain
from .tree import PackedForest, RegressionTree, grow_tree

__all__ = [
    "BinMapper",
    "EPS",
    "Ensemble",
    "Histogram",
    "PackedForest",
    "RegressionTree",
    "SchemaMismatchError",
    "SplitCandidate",
    "TrainConfig",
    "base_score",
    "best_split",
    "build_histograms",
    "fit",
    "fit_arrays",
    "goss_sample",
    "grad_hess",
    "grow_tree",
    "leaf_value",
    "poisson_loss",
    "predict",
    "split_gain",
    "total_loss",
]
