import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from churnboost.errors import DataError
from churnboost.features import FeatureMatrix
from churnboost.gbdt import (
    BinMap, GbdtModel, GbdtParams, Tree, best_split, build_histogram, feature_importance, logistic_grad_hess,
    predict, quantile_bins, sigmoid, train,
)

from oracles import brute_force_split, gain, sample_loss, training_suite


def matrix(x):
    x = np.asarray(x, dtype=float)
    return FeatureMatrix([f"r{i}" for i in range(len(x))], [f"f{j}" for j in range(x.shape[1])], x)


# binning

def test_quantile_edges_1_to_100():
    edges = quantile_bins(np.arange(1, 101), 4)
    assert len(edges) == 3
    assert np.allclose(edges, [25.75, 50.5, 75.25])


def test_constant_and_missing_columns():
    assert len(quantile_bins(np.full(10, 3.0), 8)) == 0
    assert len(quantile_bins(np.full(10, np.nan), 8)) == 0
    x = np.arange(1.0, 201.0)
    x[::2] = np.nan
    assert np.array_equal(quantile_bins(x, 4), quantile_bins(x[~np.isnan(x)], 4))


def test_few_distinct_values_get_own_bins():
    assert quantile_bins([0, 1, 1, 0, 2], 256).tolist() == [0.0, 1.0]


@given(st.lists(st.one_of(st.floats(-1e6, 1e6), st.just(float("nan"))), min_size=1, max_size=200),
       st.integers(2, 32))
def test_binmap_invariants(values, n_bins):
    x = np.array(values).reshape(-1, 1)
    bm = BinMap.fit(x, n_bins)
    edges = bm.edges[0]
    assert len(edges) <= n_bins - 1 and np.all(np.diff(edges) > 0)
    b = bm.transform(x)[:, 0]
    nan = np.isnan(x[:, 0])
    assert np.all(b[nan] == n_bins) and np.all(b[~nan] <= len(edges))
    # finite bins respect value order
    order = np.argsort(x[~nan, 0], kind="stable")
    assert np.all(np.diff(b[~nan][order].astype(int)) >= 0)


# objective

def test_grad_hess_examples():
    assert logistic_grad_hess(1, 0.0) == (-0.5, 0.25)
    assert logistic_grad_hess(0, 0.0) == (0.5, 0.25)
    g, h = logistic_grad_hess(1, 20.0)
    assert abs(g) < 1e-8 and 0 <= h < 1e-8


def test_grad_hess_finite_differences():
    rng = np.random.default_rng(7)
    z = rng.uniform(-8, 8, 1000)
    y = rng.integers(0, 2, 1000)
    g, h = logistic_grad_hess(y, z)
    eps = 1e-5
    for yi, zi, gi, hi in zip(y, z, g, h):
        fd_g = (sample_loss(yi, zi + eps) - sample_loss(yi, zi - eps)) / (2 * eps)
        fd_h = (logistic_grad_hess(yi, zi + eps)[0] - logistic_grad_hess(yi, zi - eps)[0]) / (2 * eps)
        assert abs(gi - fd_g) < 1e-6 and abs(hi - fd_h) < 1e-5


def test_sigmoid_stable():
    s = sigmoid(np.array([-800.0, 0.0, 800.0]))
    assert s.tolist() == [0.0, 0.5, 1.0]


# split search

P = GbdtParams(lambda_l2=1.0, min_child_hessian=0.0)


def test_identical_bins_no_split():
    hist = np.zeros((1, 5, 3))
    hist[0, :4] = [1.0, 1.0, 4]
    assert best_split(hist, P.replace(gamma_min_gain=1e-9)) is None


def test_two_bin_opposite_gradients():
    hist = np.zeros((1, 3, 3))
    hist[0, 0] = [-4.0, 2.0, 8]
    hist[0, 1] = [6.0, 3.0, 8]
    s = best_split(hist, P)
    lam = 1.0
    expected = 0.5 * (16 / 3 + 36 / 4 - 4 / 6)
    assert (s.feature, s.threshold) == (0, 0)
    assert math.isclose(s.gain, expected, rel_tol=1e-14)
    assert math.isclose(s.gain, gain(-4, 2, 6, 3, lam), rel_tol=1e-14)


def test_missing_direction_learned():
    hist = np.zeros((1, 4, 3))
    hist[0, 0] = [-3.0, 2.0, 5]
    hist[0, 1] = [3.0, 2.0, 5]
    hist[0, 3] = [-5.0, 2.0, 5]  # missing rows look like bin 0
    s = best_split(hist, P)
    assert s.threshold == 0 and s.missing_left


def test_tie_prefers_missing_left_then_low_bin():
    hist = np.zeros((1, 4, 3))
    hist[0, 0] = [-2.0, 1.0, 1]
    hist[0, 2] = [2.0, 1.0, 1]
    s = best_split(hist, P)  # no missing rows: both directions tie, thresholds 0 and 1 tie
    assert (s.threshold, s.missing_left) == (0, True)


def test_min_child_hessian_blocks_split():
    hist = np.zeros((1, 3, 3))
    hist[0, 0] = [-4.0, 0.5, 2]
    hist[0, 1] = [6.0, 3.0, 8]
    assert best_split(hist, P.replace(min_child_hessian=1.0)) is None


def random_case(rng):
    n = int(rng.integers(2, 65))
    f = int(rng.integers(1, 5))
    n_bins = int(rng.integers(2, 9))
    bins = rng.integers(0, n_bins + 1, size=(n, f))
    if rng.random() < 0.3:  # integer gradients produce exact ties
        g = rng.integers(-2, 3, size=n).astype(float)
        h = np.ones(n)
    else:
        g = rng.normal(size=n)
        h = rng.uniform(0.01, 0.25, size=n)
    lam = float(rng.choice([0.0, 0.5, 1.0, 5.0]))
    mch = float(rng.choice([0.0, 0.0, 0.5]))
    gamma = float(rng.choice([0.0, 0.0, 0.1]))
    return bins, g, h, n_bins, lam, mch, gamma


def run_case(case):
    bins, g, h, n_bins, lam, mch, gamma = case
    params = GbdtParams(lambda_l2=lam, min_child_hessian=mch, gamma_min_gain=gamma, n_bins=max(2, n_bins))
    hist = build_histogram(bins.astype(np.uint16), g, h, np.arange(len(g)), n_bins)
    return best_split(hist, params), brute_force_split(bins.tolist(), g.tolist(), h.tolist(), n_bins, lam, gamma, mch)


def test_best_split_matches_brute_force():
    rng = np.random.default_rng(2024)
    for _ in range(200):
        mine, oracle = run_case(random_case(rng))
        if oracle is None:
            assert mine is None
        else:
            assert (mine.feature, mine.threshold, mine.missing_left) == oracle[1:]
            assert math.isclose(mine.gain, oracle[0], rel_tol=1e-9)


# training

def test_monotone_loss_and_conservation():
    for name, (x, y) in training_suite().items():
        for growth in ("depth_wise", "leaf_wise"):
            audit = []
            params = GbdtParams(n_trees=15, learning_rate=0.3, growth=growth, max_depth=4, n_bins=32)
            model = train(matrix(x), y, params, audit=audit)
            assert np.all(np.diff(model.history) <= 1e-12), name
            for rec in audit:
                scale = max(rec["abs_g"], 1e-300)
                assert np.all(np.abs(rec["hist_g"] - rec["direct_g"]) <= 1e-9 * scale)
                assert np.all(np.abs(rec["hist_h"] - rec["direct_h"]) <= 1e-9 * max(rec["direct_h"], 1e-300))
                if "subtracted_error" in rec:
                    assert rec["subtracted_error"] <= 1e-9 * max(scale, rec["direct_h"])


def test_64_rows_loss_strictly_decreases():
    x, y = training_suite()["tiny"]
    model = train(matrix(x), y, GbdtParams(n_trees=10, min_child_hessian=0.0))
    assert np.all(np.diff(model.history) < 0)


def test_zero_trees_predicts_prior():
    y = np.array([1, 0, 0, 0, 0, 0, 0, 0, 0, 0], dtype=float)
    model = train(matrix(np.arange(10).reshape(-1, 1)), y, GbdtParams(n_trees=0))
    assert np.allclose(predict(model, matrix(np.arange(10).reshape(-1, 1))), 0.1, rtol=1e-14)
    assert feature_importance(model) == {}


def test_zero_weight_leaf_is_identity():
    base = math.log(0.1 / 0.9)
    model = GbdtModel(GbdtParams(), base, [Tree.leaf(0.0)], BinMap([np.array([])], 256), ["f0"])
    assert np.allclose(predict(model, matrix([[1.0], [np.nan]])), 0.1, rtol=1e-14)


def test_hand_built_tree():
    # split on f0 at bin 0 (value <= 1.5), missing right; leaf weights -1 and +2
    bm = BinMap([np.array([1.5])], 256)
    tree = Tree(feature=np.array([0, -1, -1]), threshold=np.array([0, 0, 0]), missing_left=np.array([False] * 3),
                left=np.array([1, -1, -1]), right=np.array([2, -1, -1]), value=np.array([0.0, -1.0, 2.0]),
                gain=np.array([3.0, 0, 0]))
    model = GbdtModel(GbdtParams(), 0.5, [tree], bm, ["f0"])
    got = predict(model, matrix([[1.0], [1.5], [2.0], [np.nan]]))
    want = [1 / (1 + math.exp(-z)) for z in (-0.5, -0.5, 2.5, 2.5)]
    assert np.allclose(got, want, rtol=1e-15)
    assert feature_importance(model) == {"f0": 1.0}


def test_determinism_and_round_trip(tmp_path):
    x, y = training_suite()["missing"]
    params = GbdtParams(n_trees=20, growth="leaf_wise", max_depth=0, max_leaves=12, row_subsample=0.8,
                        col_subsample=0.75, seed=5)
    a, b = train(matrix(x), y, params), train(matrix(x), y, params)
    assert a.dumps() == b.dumps()
    a.save(tmp_path / "m.json")
    back = GbdtModel.load(tmp_path / "m.json")
    assert predict(back, matrix(x)).tobytes() == predict(a, matrix(x)).tobytes()
    assert json.loads((tmp_path / "m.json").read_text())["format"] == "churnboost-gbdt"


def test_leaf_limit_and_depth():
    x, y = training_suite()["linear"]
    for growth, depth in (("depth_wise", 3), ("leaf_wise", 0)):
        model = train(matrix(x), y, GbdtParams(n_trees=5, growth=growth, max_leaves=6, max_depth=depth))
        for tree in model.trees:
            assert tree.n_leaves <= 6
            if depth:
                assert tree.depth <= depth


def test_importance_sums_to_one_and_finds_driver():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(1500, 4))
    y = (rng.random(1500) < sigmoid(3 * x[:, 2])).astype(float)
    imp = feature_importance(train(matrix(x), y, GbdtParams(n_trees=30, max_depth=3)))
    assert math.isclose(sum(imp.values()), 1.0, abs_tol=1e-9)
    assert next(iter(imp)) == "f2"
    assert list(imp.values()) == sorted(imp.values(), reverse=True)


def test_train_errors():
    with pytest.raises(DataError):
        train(matrix(np.zeros((0, 1))), np.zeros(0), GbdtParams())
    with pytest.raises(DataError):
        train(matrix(np.zeros((3, 1))), np.zeros(3), GbdtParams())
    model = train(matrix(np.zeros((3, 1))), np.zeros(3), GbdtParams(base_score_mode="zero", n_trees=1))
    assert model.base_score == 0.0
    with pytest.raises(DataError):
        predict(model, FeatureMatrix(["a"], ["other"], [[1.0]]))


def test_predict_selects_columns_by_name():
    x, y = training_suite()["linear"]
    m = matrix(x)
    model = train(m, y, GbdtParams(n_trees=5))
    shuffled = m.select(m.feature_names[::-1])
    assert predict(model, shuffled).tobytes() == predict(model, m).tobytes()


@pytest.mark.parametrize("bad", [dict(n_trees=-1), dict(learning_rate=0), dict(learning_rate=1.5), dict(n_bins=1),
                                 dict(n_bins=257), dict(lambda_l2=-1), dict(growth="random"), dict(max_leaves=0),
                                 dict(base_score_mode="mean"), dict(row_subsample=0)])
def test_params_validated(bad):
    with pytest.raises(ValueError):
        GbdtParams(**bad)


def test_params_from_strings():
    p = GbdtParams.from_dict({"n_trees": "7", "learning_rate": "0.2", "growth": "leaf_wise"})
    assert (p.n_trees, p.learning_rate, p.growth) == (7, 0.2, "leaf_wise")
    assert GbdtParams.from_dict(p.to_dict()) == p
