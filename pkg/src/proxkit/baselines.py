"""Statistical baselines: Gaussian naive Bayes and CART-based random forests."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .core import CLASSES, N_CLASSES, class_from_meters
from .validation import check_array, check_fitted, check_labels

GNB_VAR_FLOOR = 1e-9


class GaussianNaiveBayes(BaseEstimator):
    """Per-class Gaussian feature densities with priors, evaluated in log space."""

    def __init__(self, var_floor: float = GNB_VAR_FLOOR):
        self.var_floor = var_floor
        self.priors_: np.ndarray | None = None

    def fit(self, X, y):
        X = check_array(X, "X", ndim=2)
        y = check_labels(y, X.shape[0]).astype(np.int64)
        counts = np.bincount(y, minlength=N_CLASSES)
        absent = [CLASSES[i].meters for i in range(N_CLASSES) if counts[i] == 0]
        if absent:
            raise ValueError(f"classes with no train samples: {absent} m")
        self.priors_ = counts / counts.sum()
        self.means_ = np.stack([X[y == c].mean(axis=0) for c in range(N_CLASSES)])
        variances = np.stack([X[y == c].var(axis=0) for c in range(N_CLASSES)])
        self.vars_ = np.maximum(variances, self.var_floor)
        return self

    def predict_log_proba(self, X) -> np.ndarray:
        check_fitted(self, "priors_")
        X = check_array(X, "X", ndim=2)
        # log N(x; mu, var) summed over features, plus the log prior
        log_joint = np.empty((X.shape[0], N_CLASSES))
        for c in range(N_CLASSES):
            d = X - self.means_[c]
            log_like = -0.5 * (
                np.log(2.0 * np.pi * self.vars_[c]) + d * d / self.vars_[c]
            ).sum(axis=1)
            log_joint[:, c] = np.log(self.priors_[c]) + log_like
        shift = log_joint.max(axis=1, keepdims=True)
        log_norm = shift + np.log(np.exp(log_joint - shift).sum(axis=1, keepdims=True))
        return log_joint - log_norm

    def predict_proba(self, X) -> np.ndarray:
        return np.exp(self.predict_log_proba(X))

    def predict(self, X) -> np.ndarray:
        return self.predict_proba(X).argmax(axis=1)

    def predict_classes(self, X) -> list:
        return [CLASSES[i] for i in self.predict(X)]


@dataclass
class TreeNodes:
    """Flat array representation of one CART tree.

    ``feature[i] < 0`` marks a leaf; ``value[i]`` holds the class distribution
    (classification) or a length-1 mean (regression).
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @classmethod
    def from_lists(cls, feature, threshold, left, right, value) -> "TreeNodes":
        return cls(
            feature=np.asarray(feature, dtype=np.int64),
            threshold=np.asarray(threshold, dtype=np.float64),
            left=np.asarray(left, dtype=np.int64),
            right=np.asarray(right, dtype=np.int64),
            value=np.asarray(value, dtype=np.float64),
        )

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature[node] >= 0
        while np.any(active):
            idx = np.nonzero(active)[0]
            n = node[idx]
            goes_left = X[idx, self.feature[n]] < self.threshold[n]
            node[idx] = np.where(goes_left, self.left[n], self.right[n])
            active = self.feature[node] >= 0
        return self.value[node]


def _gini_cost(counts_left: np.ndarray, counts_right: np.ndarray) -> float:
    # weighted Gini impurity, scaled by the parent size (constant per node)
    n_l, n_r = counts_left.sum(), counts_right.sum()
    g_l = n_l - (counts_left * counts_left).sum() / n_l
    g_r = n_r - (counts_right * counts_right).sum() / n_r
    return float(g_l + g_r)


def best_split(
    X: np.ndarray,
    y: np.ndarray,
    feature_ids: np.ndarray,
    min_leaf: int,
    mode: str,
) -> tuple[int, float] | None:
    """Greedy best (feature, threshold) over midpoint candidates.

    Ties in cost break toward the lowest feature index, then the lowest
    threshold, which the ascending scan realizes with strict improvement.
    Returns None when no candidate leaves ``min_leaf`` samples per side.
    """
    n = X.shape[0]
    best: tuple[float, int, float] | None = None
    classify = mode == "classify"
    y_int = y.astype(np.int64) if classify else None
    for f in np.sort(feature_ids):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        ys = y[order]
        # candidate split between consecutive distinct values
        distinct = np.nonzero(xs[:-1] < xs[1:])[0]
        if distinct.size == 0:
            continue
        if classify:
            onehot = np.zeros((n, N_CLASSES))
            onehot[np.arange(n), ys.astype(np.int64)] = 1.0
            cum = np.cumsum(onehot, axis=0)
            totals = cum[-1]
        else:
            cum_sum = np.cumsum(ys)
            cum_sq = np.cumsum(ys * ys)
        for i in distinct:
            n_l = i + 1
            n_r = n - n_l
            if n_l < min_leaf or n_r < min_leaf:
                continue
            if classify:
                left_counts = cum[i]
                right_counts = totals - left_counts
                cost = _gini_cost(left_counts, right_counts)
            else:
                # variance reduction == minimizing summed squared error
                sse_l = cum_sq[i] - cum_sum[i] ** 2 / n_l
                sse_r = (cum_sq[-1] - cum_sq[i]) - (cum_sum[-1] - cum_sum[i]) ** 2 / n_r
                cost = float(sse_l + sse_r)
            threshold = 0.5 * (xs[i] + xs[i + 1])
            if best is None or cost < best[0]:
                best = (cost, int(f), threshold)
    if best is None:
        return None
    return best[1], best[2]


class DecisionTreeModel(BaseEstimator):
    """CART with midpoint thresholds and deterministic tie-breaking."""

    def __init__(
        self,
        max_depth: int = 12,
        min_leaf: int = 2,
        mode: str = "classify",
        max_features: str | int | None = None,
        seed: int = 0,
    ):
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.mode = mode
        self.max_features = max_features
        self.seed = seed
        self.nodes_: TreeNodes | None = None

    def _n_candidate_features(self, n_features: int) -> int:
        if self.max_features is None:
            return n_features
        if self.max_features == "sqrt":
            return max(1, int(np.sqrt(n_features)))
        return min(int(self.max_features), n_features)

    def fit(self, X, y, rng: np.random.Generator | None = None):
        if self.mode not in ("classify", "regress"):
            raise ValueError(f"unknown tree mode {self.mode!r}")
        X = check_array(X, "X", ndim=2)
        y = check_labels(y, X.shape[0]).astype(np.float64)
        if rng is None:
            rng = np.random.default_rng(self.seed)
        n_features = X.shape[1]
        n_candidates = self._n_candidate_features(n_features)
        feature: list[int] = []
        threshold: list[float] = []
        left: list[int] = []
        right: list[int] = []
        value: list[np.ndarray] = []

        def leaf_value(idx: np.ndarray) -> np.ndarray:
            if self.mode == "classify":
                counts = np.bincount(y[idx].astype(np.int64), minlength=N_CLASSES)
                return counts / counts.sum()
            return np.array([y[idx].mean()])

        def grow(idx: np.ndarray, depth: int) -> int:
            node_id = len(feature)
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(leaf_value(idx))
            pure = np.all(y[idx] == y[idx[0]])
            if pure or depth >= self.max_depth or idx.size < 2 * self.min_leaf:
                return node_id
            if n_candidates < n_features:
                candidates = rng.choice(n_features, size=n_candidates, replace=False)
            else:
                candidates = np.arange(n_features)
            found = best_split(X[idx], y[idx], candidates, self.min_leaf, self.mode)
            if found is None:
                return node_id
            f, thr = found
            goes_left = X[idx, f] < thr
            feature[node_id] = f
            threshold[node_id] = thr
            left[node_id] = grow(idx[goes_left], depth + 1)
            right[node_id] = grow(idx[~goes_left], depth + 1)
            return node_id

        grow(np.arange(X.shape[0]), 0)
        self.nodes_ = TreeNodes.from_lists(feature, threshold, left, right, value)
        return self

    def predict_values(self, X) -> np.ndarray:
        check_fitted(self, "nodes_")
        X = check_array(X, "X", ndim=2)
        return self.nodes_.predict(X)


class RandomForestModel(BaseEstimator):
    """Bootstrap ensemble of CART trees with sqrt-feature subsampling per split.

    Classification predicts the majority vote over trees (vote shares double
    as the distribution); regression predicts the mean over trees, in meters.
    """

    def __init__(
        self,
        n_trees: int = 100,
        max_depth: int = 12,
        min_leaf: int = 2,
        mode: str = "classify",
        max_features: str | int | None = "sqrt",
        bootstrap: bool = True,
        seed: int = 0,
    ):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.mode = mode
        self.max_features = max_features
        self.bootstrap = bootstrap
        self.seed = seed
        self.trees_: list[TreeNodes] | None = None

    def fit(self, X, y):
        if self.mode not in ("classify", "regress"):
            raise ValueError(f"unknown forest mode {self.mode!r}")
        X = check_array(X, "X", ndim=2)
        y = check_labels(y, X.shape[0]).astype(np.float64)
        n = X.shape[0]
        if n == 0:
            raise ValueError("cannot fit a forest on an empty train set")
        self.trees_ = []
        for seq in np.random.SeedSequence(self.seed).spawn(self.n_trees):
            rng = np.random.default_rng(seq)
            take = rng.integers(0, n, size=n) if self.bootstrap else np.arange(n)
            tree = DecisionTreeModel(
                max_depth=self.max_depth,
                min_leaf=self.min_leaf,
                mode=self.mode,
                max_features=self.max_features,
            )
            tree.fit(X[take], y[take], rng=rng)
            self.trees_.append(tree.nodes_)
        return self

    def predict_proba(self, X) -> np.ndarray:
        check_fitted(self, "trees_")
        if self.mode != "classify":
            raise ValueError("predict_proba is only defined for classification forests")
        X = check_array(X, "X", ndim=2)
        votes = np.zeros((X.shape[0], N_CLASSES))
        for nodes in self.trees_:
            dist = nodes.predict(X)
            votes[np.arange(X.shape[0]), dist.argmax(axis=1)] += 1.0
        return votes / len(self.trees_)

    def predict(self, X) -> np.ndarray:
        """Class indices (classification) or meters (regression)."""
        check_fitted(self, "trees_")
        X = check_array(X, "X", ndim=2)
        if self.mode == "classify":
            return self.predict_proba(X).argmax(axis=1)
        total = np.zeros(X.shape[0])
        for nodes in self.trees_:
            total += nodes.predict(X)[:, 0]
        return total / len(self.trees_)

    def predict_classes(self, X) -> list:
        raw = self.predict(X)
        if self.mode == "classify":
            return [CLASSES[int(i)] for i in raw]
        return [class_from_meters(m) for m in raw]
