"""Ranking and fit metrics on the log-transformed retweet scale."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Any, NamedTuple

import numpy as np
from scipy import stats

#: Every reported rank correlation should clear this significance bar.
P_VALUE_BAR = 0.001


class SpearmanResult(NamedTuple):
    rho: float
    p: float
    defined: bool


class FitResult(NamedTuple):
    r_squared: float
    rmse: float
    r_squared_defined: bool


class MapeResult(NamedTuple):
    value: float
    n_used: int
    defined: bool


def average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks where tied values share the mean of the positions they span."""
    x = np.asarray(values)
    n = len(x)
    order = np.argsort(x, kind="mergesort")
    sorted_x = x[order]
    # boundaries of runs of equal values in sorted order
    starts = np.flatnonzero(np.r_[True, sorted_x[1:] != sorted_x[:-1]])
    ends = np.r_[starts[1:], n]
    run_rank = (starts + ends + 1) / 2.0  # mean of positions start+1 .. end
    ranks = np.empty(n)
    ranks[order] = np.repeat(run_rank, ends - starts)
    return ranks


def spearman(pred, truth) -> SpearmanResult:
    """Tie-aware Spearman correlation with a two-sided t-approximation p-value.

    ``rho`` is the Pearson correlation of average ranks. When either input
    is constant the coefficient is undefined and returned as NaN with
    ``defined=False``.
    """
    a = np.asarray(pred, dtype=np.float64)
    b = np.asarray(truth, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("spearman needs two vectors of equal length")
    n = len(a)
    if n < 3:
        raise ValueError("spearman needs at least 3 observations")
    ra = average_ranks(a)
    rb = average_ranks(b)
    da = ra - ra.mean()
    db = rb - rb.mean()
    saa = float(da @ da)
    sbb = float(db @ db)
    if saa == 0.0 or sbb == 0.0:
        return SpearmanResult(math.nan, math.nan, False)
    rho = float(da @ db) / math.sqrt(saa * sbb)
    rho = min(1.0, max(-1.0, rho))
    dof = n - 2
    if abs(rho) == 1.0:
        p = 0.0
    else:
        t = rho * math.sqrt(dof / ((1.0 - rho) * (1.0 + rho)))
        p = float(2.0 * stats.t.sf(abs(t), dof))
    return SpearmanResult(rho, p, True)


def fit_metrics(pred, truth) -> FitResult:
    """Coefficient of determination and root mean squared error."""
    p = np.asarray(pred, dtype=np.float64)
    y = np.asarray(truth, dtype=np.float64)
    if p.shape != y.shape or p.ndim != 1:
        raise ValueError("fit_metrics needs two vectors of equal length")
    if len(y) < 2:
        raise ValueError("fit_metrics needs at least 2 observations")
    resid = y - p
    ss_res = float(resid @ resid)
    dev = y - y.mean()
    ss_tot = float(dev @ dev)
    rmse = math.sqrt(ss_res / len(y))
    if ss_tot == 0.0:
        return FitResult(math.nan, rmse, False)
    return FitResult(1.0 - ss_res / ss_tot, rmse, True)


def mape(pred, truth) -> MapeResult:
    """Mean absolute percentage error over rows with a nonzero target only."""
    p = np.asarray(pred, dtype=np.float64)
    y = np.asarray(truth, dtype=np.float64)
    if p.shape != y.shape:
        raise ValueError("mape needs two vectors of equal length")
    used = y > 0
    n_used = int(used.sum())
    if n_used == 0:
        return MapeResult(math.nan, 0, False)
    return MapeResult(float(np.mean(np.abs(p[used] - y[used]) / y[used])), n_used, True)


@dataclass
class EvaluationReport:
    spearman_r: float
    spearman_p: float
    r_squared: float
    rmse: float
    mape: float
    n_total: int
    n_mape: int
    feature_subset: list[str] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)

    @property
    def mape_undefined(self) -> bool:
        return self.n_mape == 0

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        # JSON has no NaN; undefined values become null and carry a flag
        for key in ("spearman_r", "spearman_p", "r_squared", "mape"):
            if isinstance(out[key], float) and not math.isfinite(out[key]):
                out[key] = None
        out["mape_undefined"] = self.mape_undefined
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "EvaluationReport":
        def num(v: Any) -> float:
            return math.nan if v is None else float(v)

        return cls(
            spearman_r=num(data["spearman_r"]),
            spearman_p=num(data["spearman_p"]),
            r_squared=num(data["r_squared"]),
            rmse=float(data["rmse"]),
            mape=num(data["mape"]),
            n_total=int(data["n_total"]),
            n_mape=int(data["n_mape"]),
            feature_subset=list(data.get("feature_subset", [])),
            flags=list(data.get("flags", [])),
        )


def evaluate(predicted_rate, truth, feature_subset=()) -> EvaluationReport:
    """Score predicted rates against log-scale targets.

    ``predicted_rate`` is the model's ``exp(F)``, the estimate of the
    log-transformed target itself, so all four metrics compare like with like.
    """
    pred = np.asarray(predicted_rate, dtype=np.float64)
    y = np.asarray(truth, dtype=np.float64)
    flags: list[str] = []
    rank = spearman(pred, y)
    if not rank.defined:
        flags.append("spearman_undefined")
    elif not rank.p < P_VALUE_BAR:
        flags.append("spearman_p_above_bar")
    fit = fit_metrics(pred, y)
    if not fit.r_squared_defined:
        flags.append("r_squared_undefined")
    pct = mape(pred, y)
    if not pct.defined:
        flags.append("mape_undefined")
    return EvaluationReport(
        spearman_r=rank.rho,
        spearman_p=rank.p,
        r_squared=fit.r_squared,
        rmse=fit.rmse,
        mape=pct.value,
        n_total=len(y),
        n_mape=pct.n_used,
        feature_subset=sorted(feature_subset, key="ACTL".index) if feature_subset else [],
        flags=flags,
    )
