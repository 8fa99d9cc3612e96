"""Train/validation/test splitting and the modality ablation study."""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations
from typing import Any

import numpy as np

from .features import FeatureMatrix, select_modalities
from .gbrt import TrainConfig, fit, predict
from .metrics import EvaluationReport, evaluate

logger = logging.getLogger(__name__)

TRAIN, VALID, TEST = "train", "valid", "test"
BASELINE = "Baseline"
BASELINE_FEATURE = "followersCount"

#: All non-empty subsets of the four modalities, singles first.
SUBSETS: tuple[str, ...] = tuple(
    "".join(c) for k in range(1, 5) for c in combinations("ACTL", k)
)


class ExperimentError(ValueError):
    pass


@dataclass
class SplitSpec:
    seed: int = 0
    train_frac: float = 0.70
    valid_frac: float = 0.10
    test_frac: float = 0.20
    assignment: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        total = self.train_frac + self.valid_frac + self.test_frac
        if not math.isclose(total, 1.0, abs_tol=1e-12):
            raise ExperimentError(f"split fractions sum to {total}, not 1")


@dataclass
class SplitViews:
    train: FeatureMatrix
    valid: FeatureMatrix
    test: FeatureMatrix
    spec: SplitSpec


def _partition_sizes(n: int, spec: SplitSpec) -> tuple[int, int, int]:
    # integer arithmetic for the default 70/10/20 so 10 rows give exactly 7/1/2
    if (spec.train_frac, spec.valid_frac) == (0.70, 0.10):
        n_train, n_valid = n * 7 // 10, n // 10
    else:
        n_train, n_valid = int(n * spec.train_frac), int(n * spec.valid_frac)
    return n_train, n_valid, n - n_train - n_valid


def split(matrix: FeatureMatrix, spec: SplitSpec | None = None) -> SplitViews:
    """Deterministic random partition of the rows into train/valid/test.

    Rows are shuffled with ``spec.seed`` after ordering by row id, so the
    assignment depends only on the set of ids and the seed. Fills
    ``spec.assignment``.
    """
    spec = spec if spec is not None else SplitSpec()
    n = len(matrix)
    if n < 10:
        raise ExperimentError(f"need at least 10 rows to split, got {n}")
    n_train, n_valid, _ = _partition_sizes(n, spec)
    by_id = np.argsort(np.asarray(matrix.row_ids, dtype=object), kind="stable")
    perm = by_id[np.random.default_rng(spec.seed).permutation(n)]
    parts = {
        TRAIN: np.sort(perm[:n_train]),
        VALID: np.sort(perm[n_train:n_train + n_valid]),
        TEST: np.sort(perm[n_train + n_valid:]),
    }
    spec.assignment = {}
    for name, idx in parts.items():
        for i in idx:
            spec.assignment[matrix.row_ids[i]] = name
    return SplitViews(
        train=matrix.take(parts[TRAIN]),
        valid=matrix.take(parts[VALID]),
        test=matrix.take(parts[TEST]),
        spec=spec,
    )


def split_indices(n: int, seed: int) -> dict[str, np.ndarray]:
    """Index-only variant of :func:`split` for row counts too large to materialise."""
    spec = SplitSpec(seed=seed)
    if n < 10:
        raise ExperimentError(f"need at least 10 rows to split, got {n}")
    n_train, n_valid, _ = _partition_sizes(n, spec)
    perm = np.random.default_rng(seed).permutation(n)
    return {
        TRAIN: perm[:n_train],
        VALID: perm[n_train:n_train + n_valid],
        TEST: perm[n_train + n_valid:],
    }


@dataclass
class AblationRow:
    name: str
    report: EvaluationReport | None
    n_trees: int = 0
    error: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "n_trees": self.n_trees,
            "error": self.error,
            "metrics": None if self.report is None else self.report.to_dict(),
        }


@dataclass
class AblationReport:
    rows: list[AblationRow]
    config: TrainConfig
    dataset_fingerprint: str
    split_seed: int
    partial: bool = False

    def row(self, name: str) -> AblationRow:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    def spearman(self, name: str) -> float:
        rep = self.row(name).report
        return math.nan if rep is None else rep.spearman_r

    def to_dict(self, producer: dict[str, Any] | None = None) -> dict[str, Any]:
        out = {
            "rows": [r.to_dict() for r in self.rows],
            "config": self.config.to_dict(),
            "config_hash": self.config.digest(),
            "dataset_fingerprint": self.dataset_fingerprint,
            "split_seed": self.split_seed,
            "partial": self.partial,
            "failed": [r.name for r in self.rows if r.error is not None],
        }
        if producer is not None:
            out["producer"] = producer
        return out

    def to_json(self, producer: dict[str, Any] | None = None) -> str:
        return json.dumps(self.to_dict(producer), indent=2, sort_keys=True, allow_nan=False) + "\n"

    def render_table(self) -> str:
        """Plain-text table with one line per feature subset plus the baseline."""

        def cell(v: float) -> str:
            return "n/a" if v is None or not math.isfinite(v) else f"{v:.3f}"

        lines = [
            f"{'Features':<9} {'SpearmanR':>9} {'R^2':>7} {'RMSE':>7} {'MAPE':>7}",
            "-" * 43,
        ]
        for r in self.rows:
            if r.name == BASELINE:
                lines.append("-" * 43)
            rep = r.report
            if rep is None:
                lines.append(f"{r.name:<9} {'failed':>9}")
                continue
            lines.append(
                f"{r.name:<9} {cell(rep.spearman_r):>9} {cell(rep.r_squared):>7} "
                f"{cell(rep.rmse):>7} {cell(rep.mape):>7}"
            )
        return "\n".join(lines) + "\n"


def _train_and_score(name: str, views: SplitViews, config: TrainConfig) -> AblationRow:
    if name == BASELINE:
        cols = [BASELINE_FEATURE]
        subset: list[str] = []
        train, valid, test = (v.select(cols) for v in (views.train, views.valid, views.test))
    else:
        subset = list(name)
        train, valid, test = (select_modalities(v, subset) for v in (views.train, views.valid, views.test))
    use_valid = valid if config.early_stopping_rounds > 0 and len(valid) else None
    ensemble = fit(train, config, valid=use_valid, track_loss=False)
    _, rate = predict(ensemble, test)
    report = evaluate(rate, test.target, subset)
    return AblationRow(name=name, report=report, n_trees=len(ensemble.trees))


def run_ablation(
    matrix: FeatureMatrix,
    split_spec: SplitSpec | None = None,
    config: TrainConfig | None = None,
    *,
    dataset_fingerprint: str | None = None,
    workers: int = 1,
) -> AblationReport:
    """Train one model per modality subset and the followers-only baseline.

    Every model shares ``config`` and the split; metrics are measured on the
    test part. A subset whose training fails is recorded with its error and
    the report is marked partial.
    """
    config = config if config is not None else TrainConfig()
    split_spec = split_spec if split_spec is not None else SplitSpec(seed=config.seed)
    views = split(matrix, split_spec)
    names = [*SUBSETS, BASELINE]

    def job(name: str) -> AblationRow:
        try:
            row = _train_and_score(name, views, config)
        except Exception as exc:  # noqa: BLE001 - recorded in the report
            logger.error("subset %s failed: %s", name, exc)
            return AblationRow(name=name, report=None, error=f"{type(exc).__name__}: {exc}")
        logger.info("subset %s: spearman %.4f", name, row.report.spearman_r)
        return row

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(job, names))
    else:
        rows = [job(name) for name in names]

    return AblationReport(
        rows=rows,
        config=config,
        dataset_fingerprint=dataset_fingerprint or matrix.fingerprint(),
        split_seed=split_spec.seed,
        partial=any(r.error is not None for r in rows),
    )
