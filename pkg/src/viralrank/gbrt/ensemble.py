"""Stagewise boosting with the Poisson objective, prediction and model files."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .binning import BinMapper
from .config import TrainConfig
from .goss import goss_sample
from .objective import base_score, grad_hess, total_loss
from .tree import PackedForest, RegressionTree, grow_tree

logger = logging.getLogger(__name__)

MODEL_FORMAT = "viralrank-gbrt"
MODEL_VERSION = 1


class SchemaMismatchError(ValueError):
    pass


def schema_hash(names: Sequence[str], kinds: Sequence[str]) -> str:
    blob = json.dumps([list(names), list(kinds)], separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class Ensemble:
    """Trained model: ``F(x) = base_score + sum(learning_rate * tree(x))``."""

    trees: list[RegressionTree]
    base_score: float
    config: TrainConfig
    feature_names: list[str]
    feature_kinds: list[str]
    best_iteration: int | None = None
    history: dict[str, list[float]] = field(default_factory=dict)
    _packed: PackedForest | None = field(default=None, repr=False, compare=False)

    @property
    def packed(self) -> PackedForest:
        if self._packed is None:
            self._packed = PackedForest.from_trees(self.trees)
        return self._packed

    def predict_raw(self, X: np.ndarray) -> np.ndarray:
        """Raw scores for an array whose columns follow ``feature_names``."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != len(self.feature_names):
            raise SchemaMismatchError(
                f"expected {len(self.feature_names)} columns, got shape {X.shape}"
            )
        out = np.full(X.shape[0], self.base_score)
        self.packed.accumulate(X, out, self.config.learning_rate)
        return out

    def leaf_values(self) -> list[float]:
        return [v for tree in self.trees for v in tree.leaf_values()]

    # -- serialization -----------------------------------------------------

    def to_dict(self, producer: dict[str, Any] | None = None) -> dict[str, Any]:
        out: dict[str, Any] = {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "feature_names": list(self.feature_names),
            "feature_kinds": list(self.feature_kinds),
            "schema_hash": schema_hash(self.feature_names, self.feature_kinds),
            "config": self.config.to_dict(),
            "base_score": self.base_score,
            "best_iteration": self.best_iteration,
            "trees": [tree.to_nested() for tree in self.trees],
        }
        if producer is not None:
            out["producer"] = producer
        return out

    def to_json(self, producer: dict[str, Any] | None = None) -> str:
        return json.dumps(self.to_dict(producer), sort_keys=True, separators=(",", ":")) + "\n"

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Ensemble":
        if data.get("format") != MODEL_FORMAT:
            raise ValueError("not a viralrank model document")
        if data.get("version") != MODEL_VERSION:
            raise ValueError(f"unsupported model version {data.get('version')!r}")
        names = list(data["feature_names"])
        kinds = list(data["feature_kinds"])
        if data.get("schema_hash") != schema_hash(names, kinds):
            raise ValueError("model schema hash does not match its feature list")
        return cls(
            trees=[RegressionTree.from_nested(t) for t in data["trees"]],
            base_score=float(data["base_score"]),
            config=TrainConfig.from_dict(data["config"]),
            feature_names=names,
            feature_kinds=kinds,
            best_iteration=data.get("best_iteration"),
        )

    def save(self, path: str | os.PathLike[str], producer: dict[str, Any] | None = None) -> None:
        Path(path).write_text(self.to_json(producer), encoding="utf-8")

    @classmethod
    def load(cls, path: str | os.PathLike[str]) -> "Ensemble":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _validation_rmse(valid_raw: np.ndarray, y_valid: np.ndarray) -> float:
    return math.sqrt(float(np.mean((np.exp(valid_raw) - y_valid) ** 2)))


def fit_arrays(
    X: np.ndarray,
    y: np.ndarray,
    is_categorical: Sequence[bool],
    config: TrainConfig,
    *,
    feature_names: Sequence[str] | None = None,
    X_valid: np.ndarray | None = None,
    y_valid: np.ndarray | None = None,
    track_loss: bool = True,
) -> Ensemble:
    """Fit on a dense array. See :func:`fit`.

    ``track_loss`` records the exactly summed training loss after every round
    in ``ensemble.history["train_loss"]``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("training matrix must be non-empty and two-dimensional")
    if len(y) != X.shape[0]:
        raise ValueError("target length differs from row count")
    if not np.all(np.isfinite(y)) or np.any(y < 0):
        raise ValueError("targets must be finite and non-negative")
    is_cat = np.asarray(is_categorical, dtype=bool)
    names = list(feature_names) if feature_names is not None else [f"f{j}" for j in range(X.shape[1])]
    kinds = ["categorical" if c else "numeric" for c in is_cat]

    mapper = BinMapper.fit(X, is_cat, config.max_bins)
    binned = mapper.transform(X)
    n = X.shape[0]
    lr = config.learning_rate
    f0 = base_score(y)
    scores = np.full(n, f0)
    all_rows = np.arange(n, dtype=np.int64)

    use_valid = X_valid is not None and y_valid is not None
    if use_valid:
        X_valid = np.ascontiguousarray(X_valid, dtype=np.float64)
        y_valid = np.asarray(y_valid, dtype=np.float64)
        valid_scores = np.full(len(y_valid), f0)
    stop_rounds = config.early_stopping_rounds if use_valid else 0

    trees: list[RegressionTree] = []
    history: dict[str, list[float]] = {"train_loss": [total_loss(y, scores)] if track_loss else []}
    if use_valid:
        history["valid_rmse"] = [_validation_rmse(valid_scores, y_valid)]
    best_iter, best_rmse = 0, history["valid_rmse"][0] if use_valid else math.inf

    for m in range(config.num_trees):
        g, h = grad_hess(y, scores)
        if config.goss_enabled:
            rows, weights = goss_sample(g, config.goss_top_rate, config.goss_other_rate, config.seed + m)
            g = g.copy()
            h = h.copy()
            g[rows] *= weights
            h[rows] *= weights
        else:
            rows = all_rows
        tree, leaf_rows = grow_tree(
            binned, g, h, rows, mapper,
            max_leaves=config.max_leaves,
            min_samples_leaf=config.min_samples_leaf,
            min_sum_hessian_leaf=config.min_sum_hessian_leaf,
            leaf_cap=config.leaf_cap,
        )
        trees.append(tree)
        if config.goss_enabled:
            PackedForest.from_trees([tree]).accumulate(X, scores, lr)
        else:
            for node, idx in leaf_rows:
                scores[idx] += lr * tree.value[node]
        if track_loss:
            history["train_loss"].append(total_loss(y, scores))

        if use_valid:
            PackedForest.from_trees([tree]).accumulate(X_valid, valid_scores, lr)
            rmse = _validation_rmse(valid_scores, y_valid)
            history["valid_rmse"].append(rmse)
            if rmse < best_rmse:
                best_iter, best_rmse = m + 1, rmse
            elif stop_rounds and m + 1 - best_iter >= stop_rounds:
                logger.info("early stop at round %d, best %d", m + 1, best_iter)
                break

    best_iteration = None
    if stop_rounds:
        trees = trees[:best_iter]
        best_iteration = best_iter
    return Ensemble(
        trees=trees,
        base_score=f0,
        config=config,
        feature_names=names,
        feature_kinds=kinds,
        best_iteration=best_iteration,
        history=history,
    )


def fit(matrix, config: TrainConfig, valid=None, *, track_loss: bool = True) -> Ensemble:
    """Train a Poisson boosting ensemble on a feature matrix.

    The base score is ``ln(mean(target) + eps)``; each round fits one
    leaf-wise tree to the gradients and hessians at the current scores and
    adds ``learning_rate * tree`` to them. With a validation matrix and
    ``early_stopping_rounds > 0`` the ensemble is cut back to the round with
    the lowest validation RMSE once it stops improving.
    """
    if len(matrix) == 0:
        raise ValueError("cannot train on an empty matrix")
    X_valid = y_valid = None
    if valid is not None:
        if valid.names != matrix.names:
            raise SchemaMismatchError("validation matrix columns differ from training columns")
        X_valid, y_valid = valid.to_array(), valid.target
    ens = fit_arrays(
        matrix.to_array(),
        matrix.target,
        [k == "categorical" for k in matrix.kinds],
        config,
        feature_names=matrix.names,
        X_valid=X_valid,
        y_valid=y_valid,
        track_loss=track_loss,
    )
    ens.feature_kinds = list(matrix.kinds)
    return ens


def predict(ensemble: Ensemble, matrix) -> tuple[np.ndarray, np.ndarray]:
    """Raw scores ``F`` and rates ``exp(F)`` for every row of ``matrix``.

    Columns are matched by name; any missing or extra column is an error.
    """
    names = list(matrix.names)
    expected = ensemble.feature_names
    missing = [n for n in expected if n not in names]
    extra = [n for n in names if n not in expected]
    if missing or extra:
        raise SchemaMismatchError(f"schema mismatch: missing columns {missing}, extra columns {extra}")
    X = matrix.select(expected).to_array() if names != expected else matrix.to_array()
    raw = ensemble.predict_raw(X)
    return raw, np.exp(raw)
