"""Poisson negative log-likelihood under a log link.

The raw score ``F`` is the log of the predicted rate, ``lambda = exp(F)``,
so the loss of a target ``r`` is ``exp(F) - r * F`` (the constant
``ln r!`` is dropped). Targets may be any non-negative real.
"""

from __future__ import annotations

import math

import numpy as np

EPS = 1e-9


def _check(r_gt, raw_score) -> None:
    if not (np.all(np.isfinite(r_gt)) and np.all(np.isfinite(raw_score))):
        raise ValueError("poisson objective requires finite inputs")


def poisson_loss(r_gt, raw_score):
    """Per-row loss ``exp(F) - r * F``; scalar in, scalar out."""
    _check(r_gt, raw_score)
    if np.ndim(r_gt) == 0 and np.ndim(raw_score) == 0:
        return float(np.exp(np.float64(raw_score))) - r_gt * raw_score
    return np.exp(raw_score) - np.asarray(r_gt) * raw_score


def grad_hess(r_gt, raw_score):
    """First and second derivatives of :func:`poisson_loss` in ``F``."""
    _check(r_gt, raw_score)
    if np.ndim(r_gt) == 0 and np.ndim(raw_score) == 0:
        # same exp as the vector path so both agree to the last bit
        rate = float(np.exp(np.float64(raw_score)))
        return rate - r_gt, rate
    rate = np.exp(raw_score)
    return rate - np.asarray(r_gt), rate


def total_loss(r_gt: np.ndarray, raw_score: np.ndarray) -> float:
    """Correctly rounded sum of per-row losses."""
    return math.fsum(poisson_loss(np.asarray(r_gt, dtype=np.float64), np.asarray(raw_score, dtype=np.float64)))


def base_score(r_gt: np.ndarray) -> float:
    """Constant raw score minimising the loss: ``ln(mean(r) + eps)``."""
    return math.log(float(np.mean(r_gt)) + EPS)
