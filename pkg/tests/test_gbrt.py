import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

from viralrank.features import FeatureMatrix
from viralrank.gbrt import (
    BinMapper,
    Ensemble,
    RegressionTree,
    SchemaMismatchError,
    TrainConfig,
    base_score,
    best_split,
    build_histograms,
    fit,
    fit_arrays,
    goss_sample,
    grad_hess,
    grow_tree,
    leaf_value,
    poisson_loss,
    predict,
    total_loss,
)

import oracles

# -- objective -------------------------------------------------------------------


@pytest.mark.parametrize("r, f, expected", [(0.0, 0.0, 1.0), (1.0, 0.0, 1.0)])
def test_loss_simple_values(r, f, expected):
    assert poisson_loss(r, f) == expected


def test_loss_reference_value():
    assert poisson_loss(2.5, 0.7) == pytest.approx(0.263752707470477, abs=1e-12)
    res = minimize_scalar(lambda f: poisson_loss(2.5, f), bounds=(-5, 5), method="bounded",
                          options={"xatol": 1e-10})
    assert res.x == pytest.approx(math.log(2.5), abs=1e-6)


def test_grad_hess_simple_values():
    assert grad_hess(1.0, 0.0) == (0.0, 1.0)
    assert grad_hess(0.0, 0.0) == (1.0, 1.0)


def test_grad_hess_vectorised_matches_scalar(rng):
    r = rng.uniform(0, 10, 50)
    f = rng.uniform(-5, 5, 50)
    g, h = grad_hess(r, f)
    for i in range(50):
        assert (g[i], h[i]) == grad_hess(float(r[i]), float(f[i]))


@settings(max_examples=200)
@given(st.floats(0, 10), st.floats(-5, 5))
def test_gradient_matches_finite_difference(r, f):
    eps = 1e-5
    g, h = grad_hess(r, f)
    fd_g = (poisson_loss(r, f + eps) - poisson_loss(r, f - eps)) / (2 * eps)
    fd_h = (grad_hess(r, f + eps)[0] - grad_hess(r, f - eps)[0]) / (2 * eps)
    assert abs(fd_g - g) <= 1e-6 * max(1.0, abs(g))
    assert abs(fd_h - h) <= 1e-6 * max(1.0, abs(h))


def test_hessian_positive_and_finite_input_required():
    assert grad_hess(3.0, -30.0)[1] > 0
    with pytest.raises(ValueError):
        grad_hess(1.0, math.nan)
    with pytest.raises(ValueError):
        poisson_loss(math.inf, 0.0)


def test_base_score_and_total_loss():
    r = np.array([0.0, 1.0, 2.0])
    assert base_score(r) == math.log(1.0 + 1e-9)
    assert total_loss(r, np.zeros(3)) == math.fsum([1.0, 1.0, 1.0])


# -- binning & histograms ----------------------------------------------------------


def test_lossless_binning_preserves_order(rng):
    x = rng.integers(0, 100, 500).astype(float)
    m = BinMapper.fit(x[:, None], np.array([False]), 255)
    b = m.transform(x[:, None])[:, 0]
    distinct = np.unique(x)
    assert m.n_bins[0] == len(distinct)
    assert np.array_equal(b, np.searchsorted(distinct, x))
    for k in range(len(distinct) - 1):
        assert distinct[k] <= m.threshold(0, k) < distinct[k + 1]


def test_quantile_binning_is_balanced(rng):
    x = rng.normal(size=10_000)
    m = BinMapper.fit(x[:, None], np.array([False]), 16)
    counts = np.bincount(m.transform(x[:, None])[:, 0])
    assert len(counts) == 16
    assert counts.max() - counts.min() <= 2


def test_categorical_bins_are_codes():
    x = np.array([[0.0], [3.0], [1.0]])
    m = BinMapper.fit(x, np.array([True]))
    assert m.transform(x)[:, 0].tolist() == [0, 3, 1]
    with pytest.raises(ValueError):
        m.transform(np.array([[4.0]]))
    with pytest.raises(ValueError):
        BinMapper.fit(np.array([[0.5]]), np.array([True]))


def test_single_row_histogram():
    binned = np.array([[2, 0, 5]], dtype=np.uint8)
    hist = build_histograms(np.array([0]), np.array([0.75]), np.array([0.5]), binned, 8)
    assert np.count_nonzero(hist.sum_gradient) == 3
    assert hist.sum_gradient[0, 2] == 0.75 and hist.sum_hessian[2, 5] == 0.5
    assert hist.count.sum() == 3


def test_parent_histogram_is_sum_of_children(rng):
    binned = rng.integers(0, 16, (300, 4)).astype(np.uint8)
    g, h = oracles.dyadic(rng, 300, -2, 2), oracles.dyadic(rng, 300, 0, 2)
    rows = np.arange(300)
    left, right = rows[:120], rows[120:]
    parent = build_histograms(rows, g, h, binned, 16)
    children = build_histograms(left, g, h, binned, 16) + build_histograms(right, g, h, binned, 16)
    assert np.array_equal(parent.sum_gradient, children.sum_gradient)
    assert np.array_equal(parent.count, children.count)
    sibling = parent - build_histograms(left, g, h, binned, 16)
    assert np.array_equal(sibling.sum_hessian, build_histograms(right, g, h, binned, 16).sum_hessian)


def test_histogram_matches_naive_accumulation(rng):
    binned = rng.integers(0, 16, (1000, 3)).astype(np.uint8)
    g, h = rng.normal(size=1000), rng.uniform(0, 1, 1000)
    rows = np.arange(1000)
    hist = build_histograms(rows, g, h, binned, 16)
    sg, sh, cnt = oracles.naive_histogram(rows, binned, g, h, 16)
    assert np.array_equal(hist.sum_gradient, sg)
    assert np.array_equal(hist.sum_hessian, sh)
    assert np.array_equal(hist.count, cnt)


# -- split search -----------------------------------------------------------------


def find(X, is_cat, g, h, **kw):
    m = BinMapper.fit(X, is_cat, 255)
    binned = m.transform(X)
    hist = build_histograms(np.arange(len(g)), g, h, binned, int(m.n_bins.max()))
    return best_split(hist, m.n_bins, is_cat, g.sum(), h.sum(), len(g), **kw), m


def test_constant_data_has_no_split():
    X = np.ones((50, 2))
    g, h = np.full(50, 0.5), np.ones(50)
    assert find(X, np.array([False, False]), g, h)[0] is None


def test_split_on_step():
    X = np.arange(10.0)[:, None]
    g = np.where(X[:, 0] < 4, -1.0, 1.0)
    s, m = find(X, np.array([False]), g, np.ones(10))
    assert s.feature == 0 and m.threshold(0, s.bin_threshold) == 3.5
    assert (s.count_left, s.count_right) == (4, 6)
    assert s.gain == oracles.gain(-4.0, 4.0, 6.0, 6.0)
    assert s.gain == pytest.approx(16 / 4 + 36 / 6 - 4 / 10, rel=1e-9)


def test_ties_prefer_lowest_feature():
    X = np.column_stack([np.arange(8.0), np.arange(8.0)])
    g = np.where(np.arange(8) < 4, -1.0, 1.0)
    s, _ = find(X, np.array([False, False]), g, np.ones(8))
    assert s.feature == 0


def test_min_samples_leaf_respected():
    X = np.arange(10.0)[:, None]
    g = np.where(X[:, 0] < 1, -5.0, 0.1)
    s, _ = find(X, np.array([False]), g, np.ones(10), min_samples_leaf=3)
    assert min(s.count_left, s.count_right) >= 3


@pytest.mark.parametrize("seed", range(40))
def test_split_gain_equals_exhaustive_search(seed):
    rng = np.random.default_rng(seed)
    X, is_cat, g, h = oracles.split_dataset(rng)
    s, m = find(X, is_cat, g, h)
    expected = max(
        oracles.exhaustive_categorical(X[:, j].astype(int), g, h) if is_cat[j] else oracles.exhaustive_numeric(X[:, j], g, h)
        for j in range(X.shape[1])
    )
    got = 0.0 if s is None else s.gain
    assert got == expected
    if s is not None:
        left = np.isin(m.transform(X)[:, s.feature], s.left_bins)
        assert oracles.gain(g[left].sum(), h[left].sum(), g[~left].sum(), h[~left].sum()) == s.gain


def test_partition_count():
    assert [oracles.n_partitions(k) for k in (2, 3, 8)] == [1, 3, 127]


def test_leaf_value_cases():
    assert leaf_value(0.0, 3.0) == 0.0
    assert leaf_value(-100.0, 1.0) == 1.5
    assert leaf_value(100.0, 1.0) == -1.5
    assert leaf_value(-0.5, 1.0) == pytest.approx(0.5, abs=1e-8)
    with pytest.raises(ValueError):
        leaf_value(1.0, -1.0)


# -- GOSS ---------------------------------------------------------------------------


def test_goss_keeps_largest_gradients():
    g = np.array([0.1, -9.0, 0.2, 0.3, 8.0, 0.0, 0.1, -0.2, 0.05, 0.4])
    for seed in range(20):
        rows, w = goss_sample(g, 0.2, 0.3, seed)
        assert {1, 4} <= set(rows.tolist())
        assert len(rows) == 5
        assert w[np.isin(rows, [1, 4])].tolist() == [1.0, 1.0]


def test_goss_full_coverage():
    g = np.arange(10.0)
    rows, w = goss_sample(g, 0.2, 0.8, 0)
    assert rows.tolist() == list(range(10))
    assert np.allclose(w[rows < 8], (1 - 0.2) / 0.8)


def test_goss_is_unbiased():
    rng = np.random.default_rng(0)
    g = rng.gamma(0.5, 2.0, 10_000) - 0.4
    full = g.sum()
    estimates = []
    for seed in range(300):
        rows, w = goss_sample(g, 0.2, 0.1, seed)
        estimates.append(float((g[rows] * w).sum()))
    assert abs(np.mean(estimates) - full) <= 0.02 * abs(full)


def test_goss_rejects_bad_rates():
    with pytest.raises(ValueError):
        goss_sample(np.ones(10), 0.7, 0.5, 0)


# -- trees & ensembles -------------------------------------------------------------


def step_data(n=200):
    x = np.linspace(0, 1, n)
    y = np.where(x < 0.5, 1.0, 3.0)
    return x[:, None], y


def test_zero_trees_predicts_mean():
    X, y = step_data()
    ens = fit_arrays(X, y, [False], TrainConfig(num_trees=0))
    assert np.allclose(np.exp(ens.predict_raw(X)), y.mean() + 1e-9, rtol=1e-15)
    assert ens.trees == []


def test_single_split_tree_has_two_outputs():
    X, y = step_data()
    ens = fit_arrays(X, y, [False], TrainConfig(num_trees=1, max_leaves=2, min_samples_leaf=1))
    assert len(np.unique(ens.predict_raw(X))) == 2


def test_step_function_fit():
    X, y = step_data()
    cfg = TrainConfig(num_trees=10, max_leaves=2, learning_rate=1.0, min_samples_leaf=1)
    ens = fit_arrays(X, y, [False], cfg)
    pred = np.exp(ens.predict_raw(X))
    r2 = 1 - np.sum((y - pred) ** 2) / np.sum((y - y.mean()) ** 2)
    assert r2 >= 0.99


def test_max_leaves_and_cap(rng):
    X = rng.normal(size=(2000, 3))
    y = np.log1p(rng.poisson(np.exp(2 * X[:, 0])))
    ens = fit_arrays(X, y, [False] * 3, TrainConfig(num_trees=20, max_leaves=7, min_samples_leaf=5))
    assert all(t.n_leaves <= 7 for t in ens.trees)
    assert max(abs(v) for v in ens.leaf_values()) <= 1.5


def test_grow_tree_leaf_rows_partition(rng):
    X = rng.normal(size=(500, 2))
    m = BinMapper.fit(X, np.array([False, False]))
    g, h = rng.normal(size=500), np.ones(500)
    tree, leaf_rows = grow_tree(m.transform(X), g, h, np.arange(500), m, max_leaves=8,
                                min_samples_leaf=10, min_sum_hessian_leaf=1e-3, leaf_cap=1.5)
    covered = np.sort(np.concatenate([idx for _, idx in leaf_rows]))
    assert np.array_equal(covered, np.arange(500))
    pred = tree.predict(X)
    for node, idx in leaf_rows:
        assert np.all(pred[idx] == tree.value[node])


def test_categorical_split_in_tree():
    codes = np.repeat(np.arange(6), 50).astype(float)
    y = np.where(np.isin(codes, [1, 4]), 3.0, 0.2)
    ens = fit_arrays(codes[:, None], y, [True], TrainConfig(num_trees=1, max_leaves=2, min_samples_leaf=1))
    root = ens.trees[0]
    assert sorted(root.categories[0]) in ([1, 4], [0, 2, 3, 5])


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_training_loss_never_increases(seed):
    rng = np.random.default_rng(seed)
    n, d = int(rng.integers(30, 400)), int(rng.integers(1, 5))
    X = rng.normal(size=(n, d))
    y = np.log1p(rng.poisson(np.exp(rng.normal(size=d) @ X.T)))
    cfg = TrainConfig(num_trees=25, learning_rate=float(rng.uniform(0.05, 1.0)), max_leaves=8, min_samples_leaf=2)
    losses = fit_arrays(X, y, [False] * d, cfg).history["train_loss"]
    assert all(b <= a for a, b in zip(losses, losses[1:]))


def test_training_is_deterministic(rng):
    X = rng.normal(size=(800, 4))
    y = np.log1p(rng.poisson(np.exp(X[:, 0])))
    for goss in (False, True):
        cfg = TrainConfig(num_trees=15, goss_enabled=goss, seed=4)
        a = fit_arrays(X, y, [False] * 4, cfg).to_json()
        b = fit_arrays(X, y, [False] * 4, cfg).to_json()
        assert a == b


def test_monotone_feature_transform_leaves_predictions_unchanged(rng):
    X = rng.normal(size=(3000, 2))
    y = np.log1p(rng.poisson(np.exp(X[:, 0] - X[:, 1])))
    Z = np.column_stack([np.exp(X[:, 0]), 3 * X[:, 1] + 7])
    cfg = TrainConfig(num_trees=20, max_bins=64)
    a = fit_arrays(X, y, [False, False], cfg).predict_raw(X)
    b = fit_arrays(Z, y, [False, False], cfg).predict_raw(Z)
    assert np.array_equal(a, b)


def test_serialisation_round_trip_is_bit_exact(tmp_path, rng):
    X = np.column_stack([rng.normal(size=1500), rng.integers(0, 5, 1500)])
    y = np.log1p(rng.poisson(np.exp(X[:, 0] + (X[:, 1] == 2))))
    ens = fit_arrays(X, y, [False, True], TrainConfig(num_trees=30, goss_enabled=True))
    path = tmp_path / "model.json"
    ens.save(path, producer={"command": "test"})
    back = Ensemble.load(path)
    assert np.array_equal(back.predict_raw(X), ens.predict_raw(X))
    assert json.loads(path.read_text())["producer"] == {"command": "test"}
    assert back.to_json() == ens.to_json()


def test_tree_nested_round_trip(rng):
    X = rng.normal(size=(400, 2))
    ens = fit_arrays(X, np.log1p(np.abs(X[:, 0]) * 4), [False, False], TrainConfig(num_trees=3, max_leaves=9))
    for tree in ens.trees:
        back = RegressionTree.from_nested(tree.to_nested())
        assert np.array_equal(back.predict(X), tree.predict(X))
        assert all(r == l + 1 for l, r in zip(back.left, back.right) if l >= 0)


def test_predict_checks_schema(small_matrix):
    ens = fit(small_matrix, TrainConfig(num_trees=3))
    raw, rate = predict(ens, small_matrix)
    assert np.array_equal(rate, np.exp(raw))
    # column order does not matter, names do
    reordered = small_matrix.select(list(reversed(small_matrix.names)))
    assert np.array_equal(predict(ens, reordered)[0], raw)
    with pytest.raises(SchemaMismatchError, match="followersCount"):
        predict(ens, small_matrix.select(small_matrix.names[1:]))


def test_early_stopping_truncates(small_matrix):
    from viralrank.experiments import split

    views = split(small_matrix)
    cfg = TrainConfig(num_trees=400, learning_rate=0.3, early_stopping_rounds=5)
    ens = fit(views.train, cfg, valid=views.valid)
    rmse = ens.history["valid_rmse"]
    assert len(ens.trees) == ens.best_iteration
    assert rmse[ens.best_iteration] == min(rmse)
    assert len(rmse) <= ens.best_iteration + 6


def test_invalid_inputs():
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0)
    with pytest.raises(ValueError):
        fit_arrays(np.ones((3, 1)), np.array([1.0, -1.0, 0.0]), [False], TrainConfig())
    with pytest.raises(ValueError):
        fit(FeatureMatrix(columns=[], target=np.empty(0), row_ids=[]), TrainConfig())
