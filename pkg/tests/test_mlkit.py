import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coftherm.mlkit import (
    FeatureTable,
    ForestConfig,
    Xorshift64Star,
    fit_forest,
    gini_importance,
    kfold_cv,
    kfold_indices,
    mae,
    pearson,
    permutation_importance,
    r2_score,
    read_feature_table,
)
from coftherm.mlkit.rng import new_state, randint_array
from coftherm.synthetic import linear_feature_data

MASK = (1 << 64) - 1


def reference_stream(seed, n):
    """Pure-Python splitmix64 seeding followed by xorshift64*."""
    z = (seed + 0x9E3779B97F4A7C15) & MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    x = (z ^ (z >> 31)) or 0x9E3779B97F4A7C15
    out = []
    for _ in range(n):
        x ^= x >> 12
        x ^= (x << 25) & MASK
        x ^= x >> 27
        out.append((x * 0x2545F4914F6CDD1D) & MASK)
    return out


# ---------------------------------------------------------------- rng


@pytest.mark.parametrize("seed", [0, 1, 7, 2**63 + 5])
def test_rng_matches_reference(seed):
    g = Xorshift64Star(seed)
    assert [g.next_u64() for _ in range(1000)] == reference_stream(seed, 1000)


def test_rng_permutation_is_permutation_and_deterministic():
    a = Xorshift64Star(3).permutation(100)
    assert sorted(a.tolist()) == list(range(100))
    np.testing.assert_array_equal(a, Xorshift64Star(3).permutation(100))
    assert not np.array_equal(a, Xorshift64Star(4).permutation(100))


def test_rng_uniform_range():
    g = Xorshift64Star(9)
    u = np.array([g.random() for _ in range(20000)])
    assert u.min() >= 0 and u.max() < 1
    assert abs(u.mean() - 0.5) < 0.01


# ---------------------------------------------------------------- stats


def test_pearson_perfect():
    x = np.arange(10.0)
    assert pearson(x, 3 * x + 1) == 1.0
    assert pearson(x, -x) == -1.0


def test_pearson_zero_variance():
    with pytest.raises(ValueError, match="zero variance"):
        pearson([1, 1, 1], [1, 2, 3])


def test_pearson_matches_textbook_formula():
    rng = np.random.default_rng(0)
    x, y = rng.random(50), rng.random(50)
    n = 50
    num = n * np.sum(x * y) - x.sum() * y.sum()
    den = math.sqrt(n * np.sum(x * x) - x.sum() ** 2) * math.sqrt(n * np.sum(y * y) - y.sum() ** 2)
    assert pearson(x, y) == pytest.approx(num / den, rel=1e-10)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.01, 100), st.floats(-100, 100), st.floats(0.01, 100), st.floats(-100, 100))
def test_pearson_affine_invariance(seed, a, b, c, d):
    rng = np.random.default_rng(seed)
    x, y = rng.random(30), rng.random(30)
    r = pearson(x, y)
    assert pearson(a * x + b, c * y + d) == pytest.approx(r, abs=1e-9)
    assert pearson(-x, y) == pytest.approx(-r, abs=1e-12)


def test_r2_and_mae():
    assert r2_score([1, 2, 3], [1, 2, 3]) == 1.0
    assert r2_score([1, 2, 3], [2, 2, 2]) == 0.0
    assert mae([1, 2], [2, 4]) == 1.5
    with pytest.raises(ValueError, match="zero variance"):
        r2_score([2, 2], [1, 3])


# ---------------------------------------------------------------- forest


@pytest.fixture(scope="module")
def linear_data():
    return linear_feature_data(1000, 3, 0.1, seed=0)


def leaf_of(tree, x):
    node = 0
    while tree.feature[node] >= 0:
        node = tree.left[node] if x[tree.feature[node]] <= tree.threshold[node] else tree.right[node]
    return node


def test_leaf_values_are_training_means():
    X, y = linear_feature_data(60, 1, 0.1, seed=1)
    m = fit_forest(X, y, ForestConfig(n_trees=5, seed=2))
    for tree in m.trees:
        sample = randint_array(new_state(tree.seed), 60, 60)
        groups = {}
        for i in sample:
            groups.setdefault(leaf_of(tree, X[i]), []).append(y[i])
        for leaf, ys in groups.items():
            assert tree.value[leaf] == pytest.approx(np.mean(ys), rel=1e-12, abs=1e-12)
            assert tree.n_samples[leaf] == len(ys)


def test_constant_target():
    X = np.random.default_rng(0).random((30, 2))
    y = np.full(30, 4.2)
    with pytest.raises(ValueError, match="constant"):
        fit_forest(X, y)
    m = fit_forest(X, y, ForestConfig(n_trees=5), allow_constant=True)
    # leaf means and the tree average are float sums of 4.2
    np.testing.assert_allclose(m.predict(X), np.full(30, 4.2), rtol=1e-14, atol=0)
    with pytest.raises(ValueError, match="zero variance"):
        r2_score(y, m.predict(X))


def test_too_few_rows_and_mtry():
    X, y = linear_feature_data(19, 0)
    with pytest.raises(ValueError, match="20 rows"):
        fit_forest(X, y)
    X, y = linear_feature_data(40, 0)
    with pytest.raises(ValueError, match="mtry"):
        fit_forest(X, y, ForestConfig(mtry=3))


def test_memorizes_identity():
    rng = np.random.default_rng(3)
    X = rng.random((200, 3))
    y = X[:, 0].copy()
    m = fit_forest(X, y, ForestConfig(n_trees=50, seed=1))
    assert r2_score(y, m.predict(X)) > 0.99


def knn_predict(Xtr, ytr, Xte, k=10):
    d = ((Xte[:, None, :] - Xtr[None, :, :]) ** 2).sum(-1)
    nn = np.argsort(d, axis=1)[:, :k]
    return ytr[nn].mean(axis=1)


def test_held_out_r2_with_knn_baseline(linear_data):
    X, y = linear_data
    tr, te = np.arange(800), np.arange(800, 1000)
    m = fit_forest(X[tr], y[tr], ForestConfig(n_trees=100, seed=0))
    rf = r2_score(y[te], m.predict(X[te]))
    # an unrelated estimator confirms the signal is learnable at this noise level
    knn = r2_score(y[te], knn_predict(X[tr][:, :2], y[tr], X[te][:, :2]))
    assert knn > 0.9
    assert rf > 0.9


def test_gini_properties(linear_data):
    X, y = linear_data
    m = fit_forest(X, y, ForestConfig(n_trees=50, seed=0))
    g = gini_importance(m)
    assert np.all(g >= 0)
    assert g.sum() == pytest.approx(1.0, abs=1e-12)
    assert g[0] > g[1] > g[2:].max()


def test_single_feature_gini_is_one():
    X, y = linear_feature_data(100, 0)
    m = fit_forest(X[:, :1], y, ForestConfig(n_trees=10))
    assert gini_importance(m).tolist() == [1.0]


def test_duplicated_feature_splits_importance():
    X, y = linear_feature_data(400, 1, seed=4)
    base = gini_importance(fit_forest(X, y, ForestConfig(n_trees=60, seed=3, mtry=3)))
    Xd = np.column_stack([X[:, 0], X[:, 0], X[:, 1:]])
    dup = gini_importance(fit_forest(Xd, y, ForestConfig(n_trees=60, seed=3, mtry=4)))
    combined = dup[0] + dup[1]
    assert combined == pytest.approx(base[0], abs=0.05)
    assert dup[0] < combined and dup[1] < combined


def test_default_mtry_is_third():
    assert [ForestConfig().resolved_mtry(p) for p in (1, 3, 5, 9)] == [1, 1, 2, 3]


def test_permutation_importance_ranking(linear_data):
    X, y = linear_data
    m = fit_forest(X[:800], y[:800], ForestConfig(n_trees=60, seed=0))
    mean, std = permutation_importance(m, X[800:], y[800:], n_repeats=5, seed=1)
    assert mean[0] > mean[1] > mean[2:].max()
    assert std.shape == mean.shape


def test_unused_feature_zero_pfi():
    X, y = linear_feature_data(300, 1, seed=5)
    Xtr = X[:200].copy()
    Xtr[:, 2] = 0.5  # constant while training, so no tree can split on it
    m = fit_forest(Xtr, y[:200], ForestConfig(n_trees=30))
    mean, _ = permutation_importance(m, X[200:], y[200:], n_repeats=5)
    assert mean[2] == 0.0


def test_pfi_preconditions(linear_data):
    X, y = linear_data
    m = fit_forest(X[:100], y[:100], ForestConfig(n_trees=5))
    with pytest.raises(ValueError, match="10 held-out"):
        permutation_importance(m, X[:9], y[:9])
    with pytest.raises(ValueError, match="n_repeats"):
        permutation_importance(m, X[:50], y[:50], n_repeats=4)


def test_column_permutation_equivariance():
    X, y = linear_feature_data(120, 2, seed=6)
    perm = [3, 0, 2, 1]
    cfg = ForestConfig(n_trees=20, mtry=4, seed=11)
    a = fit_forest(X, y, cfg)
    b = fit_forest(X[:, perm], y, cfg)
    # with mtry = p every feature is scored at every node and the random stream is
    # consumed identically, so every tree partitions its bootstrap rows the same
    # way; equal-gain ties between features (any feature separates a 2-row node)
    # may pick a different column (possibly mirroring left and right), which only
    # changes how unseen rows are routed
    for ta, tb in zip(a.trees, b.trees):
        np.testing.assert_array_equal(ta.in_bag, tb.in_bag)
        assert ta.n_nodes == tb.n_nodes
        rows = ta.in_bag
        np.testing.assert_array_equal(tb.predict(X[rows][:, perm]), ta.predict(X[rows]))


def test_oob_predictions_available(linear_data):
    X, y = linear_data
    m = fit_forest(X[:200], y[:200], ForestConfig(n_trees=30, seed=2))
    assert np.isfinite(m.oob_prediction).all()
    assert r2_score(y[:200], m.oob_prediction) > 0.7


# ---------------------------------------------------------------- cross-validation


def test_kfold_two_of_two():
    folds = kfold_indices(4, 2, seed=0)
    assert [len(f) for f in folds] == [2, 2]
    assert sorted(np.concatenate(folds).tolist()) == [0, 1, 2, 3]


def test_kfold_errors():
    with pytest.raises(ValueError):
        kfold_indices(5, 1)
    with pytest.raises(ValueError, match="fewer than 2"):
        kfold_indices(5, 3)


@settings(max_examples=30, deadline=None)
@given(st.integers(4, 200), st.integers(2, 10), st.integers(0, 2**32))
def test_kfold_partition(n, k, seed):
    if n < 2 * k:
        return
    folds = kfold_indices(n, k, seed)
    assert sorted(np.concatenate(folds).tolist()) == list(range(n))
    assert max(map(len, folds)) - min(map(len, folds)) <= 1


@pytest.mark.parametrize("k", [2, 5, 10])
def test_perfect_linear_memorized(k):
    # every x value occurs 24 times, so each held-out row has exact twins in training
    x = np.repeat(np.arange(20, dtype=float), 24)
    X = np.column_stack([x, np.zeros_like(x)])
    y = 2 * x + 1
    res = kfold_cv(X, y, k, ForestConfig(n_trees=10, mtry=2, bootstrap=False, seed=1), importances=False)
    assert res.mean_r2 == pytest.approx(1.0, abs=1e-6)


def test_kfold_cv_bit_reproducible(linear_data):
    X, y = linear_data
    cfg = ForestConfig(n_trees=20, seed=7)
    a = kfold_cv(X[:300], y[:300], 5, cfg)
    b = kfold_cv(X[:300], y[:300], 5, cfg)
    assert a.r2 == b.r2 and a.mae == b.mae
    assert a.gini.tobytes() == b.gini.tobytes()
    assert a.pfi.tobytes() == b.pfi.tobytes()


# ---------------------------------------------------------------- feature tables


def test_feature_table_round_trip(tmp_path):
    t = FeatureTable(("a", "b"), {"density": [0.5, 0.6], "dmr": [0.1, 0.0], "kappa": [1.0, 2.0]})
    t.to_csv(tmp_path / "t.csv")
    back = read_feature_table(tmp_path / "t.csv")
    assert back.names == t.names
    X, y, names = back.matrix()
    assert names == ("density", "dmr")
    np.testing.assert_array_equal(X, [[0.5, 0.1], [0.6, 0.0]])


def test_feature_table_validation():
    t = FeatureTable(("a", "b"), {"dmr": [0.1, 1.5], "density": [1, math.nan], "kappa": [1, 2]})
    with pytest.raises(ValueError, match=r"\[0, 1\]"):
        t.matrix(["dmr"])
    with pytest.raises(ValueError, match="missing value"):
        t.matrix(["density"])
