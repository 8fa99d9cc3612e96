from __future__ import annotations

import numpy as np


def goss_sample(
    gradients: np.ndarray, top_rate: float, other_rate: float, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Gradient-based one-side sampling.

    Keeps the ``top_rate`` fraction of rows with the largest ``|gradient|``
    and a uniform ``other_rate`` fraction of all rows drawn from the rest;
    the drawn rows are weighted by ``(1 - top_rate) / other_rate``.

    Returns
    -------
    rows : ndarray of int64
        Selected row indices in ascending order.
    weights : ndarray of float64
        Multiplier for the gradient and hessian of each selected row.

    When the fractions round to zero rows, all rows are returned with unit
    weight.
    """
    if not (0.0 < top_rate and 0.0 < other_rate and top_rate + other_rate <= 1.0):
        raise ValueError("GOSS rates need 0 < a, 0 < b and a + b <= 1")
    g = np.asarray(gradients, dtype=np.float64)
    n = len(g)
    n_top = int(top_rate * n)
    n_other = int(other_rate * n)
    n_other = min(n_other, n - n_top)
    if n_top == 0 or n_other == 0:
        return np.arange(n, dtype=np.int64), np.ones(n)

    # stable sort keeps lower row index first among equal |g|
    order = np.argsort(-np.abs(g), kind="stable")
    top = order[:n_top]
    rest = order[n_top:]
    rng = np.random.default_rng(seed)
    drawn = rng.choice(rest, size=n_other, replace=False)

    rows = np.concatenate([top, drawn]).astype(np.int64)
    weights = np.concatenate([np.ones(n_top), np.full(n_other, (1.0 - top_rate) / other_rate)])
    sort = np.argsort(rows, kind="stable")
    return rows[sort], weights[sort]
