import math

import numpy as np
import pytest

from proxkit.baselines import (
    DecisionTreeModel,
    GaussianNaiveBayes,
    RandomForestModel,
    best_split,
)
from proxkit.core import CLASSES


def four_class_1d(spacing=10.0, n_per_class=4, jitter=0.0, rng=None):
    X, y = [], []
    for c in range(4):
        for i in range(n_per_class):
            v = c * spacing + (rng.normal(0, jitter) if jitter and rng is not None else 0.0)
            X.append([v])
            y.append(c)
    return np.array(X), np.array(y)


def gnb_posterior_oracle(model, x):
    """Direct density product, no log-space tricks."""
    joint = []
    for c in range(4):
        dens = model.priors_[c]
        for f in range(x.shape[0]):
            var = model.vars_[c, f]
            mean = model.means_[c, f]
            dens *= math.exp(-((x[f] - mean) ** 2) / (2 * var)) / math.sqrt(
                2 * math.pi * var
            )
        joint.append(dens)
    total = sum(joint)
    return np.array([j / total for j in joint])


def test_gnb_far_cluster_is_certain():
    X, y = four_class_1d(spacing=10.0)
    model = GaussianNaiveBayes().fit(X + 0.01 * np.arange(16)[:, None] % 2, y)
    post = model.predict_proba(np.array([[0.0]]))[0]
    assert post[0] > 0.99
    oracle = gnb_posterior_oracle(model, np.array([0.0]))
    assert np.allclose(post, oracle, atol=1e-9)


def test_gnb_equidistant_symmetric_classes_split_posterior():
    # classes 0 and 1 symmetric around 5; classes 2 and 3 far away
    X = np.array([[0.0], [0.2], [-0.2], [10.0], [9.8], [10.2], [100.0], [100.2], [99.8], [200.0], [200.2], [199.8]])
    y = np.array([0, 0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3])
    model = GaussianNaiveBayes().fit(X, y)
    post = model.predict_proba(np.array([[5.0]]))[0]
    assert post[0] == pytest.approx(post[1], rel=1e-9)
    assert post[0] > 0.49


def test_gnb_posteriors_sum_to_one(rng):
    X = rng.standard_normal((40, 6))
    y = np.repeat(np.arange(4), 10)
    model = GaussianNaiveBayes().fit(X, y)
    probs = model.predict_proba(rng.standard_normal((25, 6)) * 5)
    assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-12)


def test_gnb_log_space_matches_direct_density_oracle(rng):
    X = rng.normal(0, 2, (24, 3)) + np.repeat(np.arange(4), 6)[:, None] * 3
    y = np.repeat(np.arange(4), 6)
    model = GaussianNaiveBayes().fit(X, y)
    for x in rng.normal(4, 3, (20, 3)):
        assert np.allclose(
            model.predict_proba(x[None])[0], gnb_posterior_oracle(model, x), atol=1e-9
        )


def test_gnb_missing_class_errors(rng):
    X = rng.standard_normal((10, 2))
    y = np.array([0, 1] * 5)
    with pytest.raises(ValueError, match="3.0|4.5"):
        GaussianNaiveBayes().fit(X, y)


def test_gnb_variance_floor():
    X = np.tile([[1.0, 2.0]], (8, 1))
    y = np.repeat(np.arange(4), 2)
    model = GaussianNaiveBayes().fit(X, y)
    assert np.all(model.vars_ >= model.var_floor)


def exhaustive_split_oracle(X, y, min_leaf, mode):
    """Brute-force scan of every midpoint candidate on every feature."""
    n, d = X.shape
    best = None
    for f in range(d):
        values = np.unique(X[:, f])
        for lo, hi in zip(values[:-1], values[1:]):
            thr = (lo + hi) / 2.0
            left = y[X[:, f] < thr]
            right = y[X[:, f] >= thr]
            if len(left) < min_leaf or len(right) < min_leaf:
                continue
            if mode == "classify":
                cost = 0.0
                for side in (left, right):
                    counts = np.bincount(side.astype(int), minlength=4)
                    cost += len(side) * (1.0 - ((counts / len(side)) ** 2).sum())
            else:
                cost = ((left - left.mean()) ** 2).sum() + ((right - right.mean()) ** 2).sum()
            if best is None or cost < best[0] - 1e-12:
                best = (cost, f, thr)
    return None if best is None else (best[1], best[2])


def test_best_split_matches_oracle_on_perfect_1d():
    X = np.array([[0.0], [1.0], [2.0], [10.0], [11.0], [12.0]])
    y = np.array([0, 0, 0, 2, 2, 2])
    found = best_split(X, y, np.arange(1), min_leaf=1, mode="classify")
    assert found == exhaustive_split_oracle(X, y, 1, "classify")
    assert found[1] == pytest.approx(6.0)


@pytest.mark.parametrize("mode", ["classify", "regress"])
@pytest.mark.parametrize("seed", range(5))
def test_best_split_matches_oracle_random(mode, seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((40, 5))
    if mode == "classify":
        y = rng.integers(0, 4, 40).astype(float)
    else:
        y = rng.standard_normal(40) + X[:, 2]
    found = best_split(X, y, np.arange(5), min_leaf=2, mode=mode)
    assert found == exhaustive_split_oracle(X, y, 2, mode)


def test_depth_one_tree_reproduces_oracle_threshold(rng):
    X = np.sort(rng.uniform(0, 1, (30, 1)), axis=0)
    y = (X[:, 0] > 0.61).astype(float) * 2
    tree = DecisionTreeModel(max_depth=1, min_leaf=1, mode="classify", max_features=None)
    tree.fit(X, y)
    f, thr = exhaustive_split_oracle(X, y, 1, "classify")
    assert tree.nodes_.feature[0] == f
    assert tree.nodes_.threshold[0] == pytest.approx(thr)


def test_pure_training_set_predicts_that_label(rng):
    X = rng.standard_normal((12, 3))
    y = np.full(12, 2.0)
    forest = RandomForestModel(n_trees=5, max_depth=4, seed=1).fit(X, y)
    assert all(c is CLASSES[2] for c in forest.predict_classes(rng.standard_normal((6, 3))))


def test_regressor_predictions_bounded_by_leaf_means(rng):
    X = rng.standard_normal((30, 2))
    y = np.where(X[:, 0] > 0, 4.5, 1.2)
    forest = RandomForestModel(n_trees=10, max_depth=4, mode="regress", seed=0).fit(X, y)
    preds = forest.predict(rng.standard_normal((40, 2)) * 3)
    # the mean over trees can land one ulp outside the leaf range
    assert np.all(preds >= 1.2 - 1e-9) and np.all(preds <= 4.5 + 1e-9)


def test_single_tree_forest_reduces_to_cart(rng):
    X = rng.standard_normal((40, 4))
    y = rng.integers(0, 4, 40).astype(float)
    forest = RandomForestModel(
        n_trees=1, max_depth=5, min_leaf=2, bootstrap=False, max_features=None, seed=9
    ).fit(X, y)
    tree = DecisionTreeModel(max_depth=5, min_leaf=2, mode="classify", max_features=None)
    tree.fit(X, y, rng=np.random.default_rng(np.random.SeedSequence(9).spawn(1)[0]))
    assert np.array_equal(forest.trees_[0].feature, tree.nodes_.feature)
    assert np.array_equal(forest.trees_[0].threshold, tree.nodes_.threshold)
    assert np.array_equal(forest.trees_[0].value, tree.nodes_.value)


def test_forest_determinism(rng):
    X = rng.standard_normal((50, 6))
    y = rng.integers(0, 4, 50).astype(float)
    a = RandomForestModel(n_trees=8, max_depth=5, seed=3).fit(X, y)
    b = RandomForestModel(n_trees=8, max_depth=5, seed=3).fit(X, y)
    Xt = rng.standard_normal((20, 6))
    assert np.array_equal(a.predict_proba(Xt), b.predict_proba(Xt))


def test_more_trees_do_not_increase_prediction_variance():
    # Monte Carlo: across-seed variance of the regression prediction shrinks
    # (or at least does not grow) as the ensemble grows
    base = np.random.default_rng(0)
    X = base.standard_normal((60, 4))
    y = 2.0 + X[:, 0] + 0.5 * base.standard_normal(60)
    Xt = base.standard_normal((15, 4))

    def seed_variance(n_trees):
        preds = []
        for seed in range(20):
            f = RandomForestModel(
                n_trees=n_trees, max_depth=4, mode="regress", seed=seed
            ).fit(X, y)
            preds.append(f.predict(Xt))
        return np.var(np.stack(preds), axis=0).mean()

    assert seed_variance(24) <= seed_variance(3) + 1e-6


def test_forest_classifier_distribution_is_vote_shares(rng):
    X = rng.standard_normal((40, 3))
    y = rng.integers(0, 4, 40).astype(float)
    forest = RandomForestModel(n_trees=7, max_depth=3, seed=2).fit(X, y)
    probs = forest.predict_proba(rng.standard_normal((10, 3)))
    assert np.allclose(probs.sum(axis=1), 1.0)
    assert np.all((probs * 7) % 1 < 1e-9)  # shares of 7 votes


def test_mode_validation(rng):
    with pytest.raises(ValueError):
        RandomForestModel(mode="weird").fit(rng.standard_normal((8, 2)), np.zeros(8))
    with pytest.raises(ValueError):
        DecisionTreeModel(mode="weird").fit(rng.standard_normal((8, 2)), np.zeros(8))
