"""Bootstrap-aggregated regression forest with impurity and permutation importances."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _cart
from .rng import Xorshift64Star, new_state, randint_array
from .stats import mae, r2_score


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    mtry: int | None = None  # default ceil(n_features / 3)
    min_leaf: int = 1
    max_depth: int | None = None
    seed: int = 0
    bootstrap: bool = True

    def resolved_mtry(self, n_features: int) -> int:
        m = math.ceil(n_features / 3) if self.mtry is None else self.mtry
        if not 1 <= m <= n_features:
            raise ValueError(f"mtry must lie in [1, {n_features}], got {m}")
        return m


@dataclass(frozen=True, eq=False)
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray
    impurity_decrease: np.ndarray
    seed: int
    in_bag: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    def predict(self, X: np.ndarray) -> np.ndarray:
        return _cart.predict_tree(
            np.ascontiguousarray(X, dtype=np.float64), self.feature, self.threshold, self.left, self.right, self.value
        )


@dataclass(frozen=True, eq=False)
class ForestModel:
    trees: tuple[Tree, ...]
    n_features: int
    config: ForestConfig
    feature_names: tuple[str, ...] = ()
    oob_prediction: np.ndarray | None = field(default=None, repr=False)

    def predict(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} feature columns, got shape {X.shape}")
        out = np.zeros(X.shape[0])
        for t in self.trees:
            out += t.predict(X)
        return out / len(self.trees)

    @property
    def feature_impurity_decrease(self) -> np.ndarray:
        return np.sum([t.impurity_decrease for t in self.trees], axis=0)


def fit_forest(
    X,
    y,
    cfg: ForestConfig = ForestConfig(),
    feature_names=(),
    min_rows: int = 20,
    allow_constant: bool = False,
) -> ForestModel:
    """Fit ``cfg.n_trees`` variance-reduction trees on bootstrap resamples.

    Each tree draws its own seed from the master xorshift stream seeded with
    ``cfg.seed``, so a fit is fully determined by data and config.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64).ravel()
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ValueError(f"X {X.shape} and y {y.shape} do not match")
    n, p = X.shape
    if n < min_rows:
        raise ValueError(f"need at least {min_rows} rows, got {n}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite values in training data")
    if np.all(y == y[0]) and not allow_constant:
        raise ValueError("degenerate constant target: R^2 is undefined")
    if cfg.n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    if cfg.min_leaf < 1:
        raise ValueError("min_leaf must be >= 1")
    mtry = cfg.resolved_mtry(p)
    max_depth = -1 if cfg.max_depth is None else int(cfg.max_depth)

    master = Xorshift64Star(cfg.seed)
    trees = []
    oob_sum = np.zeros(n)
    oob_cnt = np.zeros(n)
    for _ in range(cfg.n_trees):
        seed = master.spawn_seed()
        state = new_state(seed)
        sample = randint_array(state, n, n) if cfg.bootstrap else np.arange(n, dtype=np.int64)
        feat, thr, left, right, value, count, imp = _cart.build_tree(
            X, y, sample, mtry, cfg.min_leaf, max_depth, state
        )
        in_bag = np.zeros(n, dtype=bool)
        in_bag[sample] = True
        tree = Tree(feat, thr, left, right, value, count, imp, seed, in_bag)
        trees.append(tree)
        oob = ~in_bag
        if oob.any():
            oob_sum[oob] += tree.predict(X[oob])
            oob_cnt[oob] += 1
    with np.errstate(invalid="ignore", divide="ignore"):
        oob_pred = np.where(oob_cnt > 0, oob_sum / np.maximum(oob_cnt, 1), np.nan)
    return ForestModel(tuple(trees), p, cfg, tuple(feature_names), oob_pred)


def gini_importance(m: ForestModel) -> np.ndarray:
    """Mean over trees of each tree's normalized squared-error decrease.

    Regression trees have no Gini index proper; the variance reduction plays
    its role. Returned weights sum to one.
    """
    acc = np.zeros(m.n_features)
    for t in m.trees:
        tot = t.impurity_decrease.sum()
        if tot > 0:
            acc += t.impurity_decrease / tot
    total = acc.sum()
    if total == 0:
        # every tree is a single leaf; spread weight evenly
        return np.full(m.n_features, 1.0 / m.n_features)
    return acc / total


def permutation_importance(
    m: ForestModel,
    X,
    y,
    n_repeats: int = 10,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Mean and std over repeats of the R^2 drop when one column is shuffled."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.shape[0] < 10:
        raise ValueError(f"need at least 10 held-out rows, got {X.shape[0]}")
    if n_repeats < 5:
        raise ValueError(f"n_repeats must be >= 5, got {n_repeats}")
    base = r2_score(y, m.predict(X))
    rng = Xorshift64Star(seed)
    drops = np.zeros((X.shape[1], n_repeats))
    for j in range(X.shape[1]):
        Xp = X.copy()
        for r in range(n_repeats):
            Xp[:, j] = X[rng.permutation(X.shape[0]), j]
            drops[j, r] = base - r2_score(y, m.predict(Xp))
    return drops.mean(axis=1), drops.std(axis=1)


def kfold_indices(n: int, k: int, seed: int = 0) -> list[np.ndarray]:
    """Shuffled fold membership; the first ``n % k`` folds get one extra row."""
    if not 2 <= k <= n:
        raise ValueError(f"k must lie in [2, {n}], got {k}")
    perm = Xorshift64Star(seed).permutation(n)
    sizes = np.full(k, n // k)
    sizes[: n % k] += 1
    if sizes.min() < 2:
        raise ValueError(f"{k} folds over {n} rows leaves a fold with fewer than 2 rows")
    bounds = np.concatenate([[0], np.cumsum(sizes)])
    return [np.sort(perm[bounds[i] : bounds[i + 1]]) for i in range(k)]


@dataclass(frozen=True)
class CVResult:
    r2: tuple[float, ...]
    mae: tuple[float, ...]
    gini: np.ndarray
    pfi: np.ndarray

    @property
    def mean_r2(self) -> float:
        return float(np.mean(self.r2))

    @property
    def std_r2(self) -> float:
        return float(np.std(self.r2))

    @property
    def mean_mae(self) -> float:
        return float(np.mean(self.mae))

    def to_dict(self, feature_names=()) -> dict:
        names = list(feature_names) or [f"x{i}" for i in range(len(self.gini))]
        return {
            "mean_r2": self.mean_r2,
            "std_r2": self.std_r2,
            "mae": self.mean_mae,
            "fold_r2": list(self.r2),
            "fold_mae": list(self.mae),
            "gini_importance": dict(zip(names, self.gini.tolist())),
            "permutation_importance": dict(zip(names, self.pfi.tolist())),
        }


def kfold_cv(
    X,
    y,
    k: int = 10,
    cfg: ForestConfig = ForestConfig(),
    n_repeats: int = 5,
    importances: bool = True,
) -> CVResult:
    """K-fold cross-validation; importances are averaged over the folds.

    Permutation importance is scored on each held-out fold when it has at
    least 10 rows.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    folds = kfold_indices(X.shape[0], k, cfg.seed)
    r2s, maes, ginis, pfis = [], [], [], []
    for i, test in enumerate(folds):
        train = np.setdiff1d(np.arange(X.shape[0]), test)
        fold_cfg = ForestConfig(cfg.n_trees, cfg.mtry, cfg.min_leaf, cfg.max_depth, cfg.seed + 1000 * (i + 1), cfg.bootstrap)
        model = fit_forest(X[train], y[train], fold_cfg)
        pred = model.predict(X[test])
        r2s.append(r2_score(y[test], pred))
        maes.append(mae(y[test], pred))
        if importances:
            ginis.append(gini_importance(model))
            if test.size >= 10:
                pfis.append(permutation_importance(model, X[test], y[test], n_repeats, seed=fold_cfg.seed)[0])
    p = X.shape[1]
    gini = np.mean(ginis, axis=0) if ginis else np.full(p, np.nan)
    pfi = np.mean(pfis, axis=0) if pfis else np.full(p, np.nan)
    return CVResult(tuple(r2s), tuple(maes), gini, pfi)
