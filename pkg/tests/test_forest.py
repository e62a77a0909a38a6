import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from genrotda import forest
from genrotda.forest import ForestConfig

EXACT = ForestConfig(n_trees=1, min_samples_leaf=1, bootstrap=False, seed=0)


def _trees_equal(a, b):
    return all(
        np.array_equal(getattr(ta, f), getattr(tb, f))
        for ta, tb in zip(a.trees, b.trees)
        for f in ("feature", "threshold", "left", "right", "value", "weight")
    ) and len(a.trees) == len(b.trees)


def test_single_tree_reproduces_distinct_rows():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(60, 3))
    y = rng.normal(size=60)
    model = forest.fit(X, y, None, EXACT)
    np.testing.assert_array_equal(forest.predict(model, X), y)


def test_constant_target():
    X = np.random.default_rng(1).normal(size=(40, 2))
    model = forest.fit(X, np.full(40, 3.25), None, ForestConfig(n_trees=5))
    np.testing.assert_array_equal(forest.predict(model, X[:7]), 3.25)


def test_step_split_threshold():
    X = np.array([[0.0], [1.0], [2.0], [3.0]])
    y = np.array([0.0, 0.0, 10.0, 10.0])
    tree = forest.fit(X, y, None, EXACT).trees[0]
    assert tree.feature[0] == 0
    assert 1.0 < tree.threshold[0] < 2.0
    np.testing.assert_array_equal(tree.predict(X), y)


def test_single_tree_forest_equals_tree():
    X = np.random.default_rng(2).normal(size=(30, 2))
    y = X[:, 0] ** 2
    model = forest.fit(X, y, None, ForestConfig(n_trees=1, seed=3))
    np.testing.assert_array_equal(forest.predict(model, X), model.trees[0].predict(X))


def test_concatenated_forests_average():
    rng = np.random.default_rng(3)
    X, y = rng.normal(size=(50, 2)), rng.normal(size=50)
    a = forest.fit(X, y, None, ForestConfig(n_trees=4, seed=1))
    b = forest.fit(X, y, None, ForestConfig(n_trees=4, seed=2))
    both = forest.ForestModel(a.trees + b.trees, 2)
    avg = 0.5 * (forest.predict(a, X) + forest.predict(b, X))
    np.testing.assert_allclose(forest.predict(both, X), avg, rtol=0, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(5, 40))
def test_predictions_within_training_range(seed, n):
    rng = np.random.default_rng(seed)
    X, y = rng.normal(size=(n, 2)), rng.normal(size=n)
    w = rng.uniform(0.1, 5, n)
    model = forest.fit(X, y, w, ForestConfig(n_trees=5, seed=seed))
    pred = forest.predict(model, rng.normal(scale=10, size=(50, 2)))
    assert pred.min() >= y.min() - 1e-12 and pred.max() <= y.max() + 1e-12


@pytest.mark.parametrize("bootstrap", [True, False])
@pytest.mark.parametrize("scale", [0.25, 2.0, 8.0, 1024.0])
def test_weight_upscaling_invariance(bootstrap, scale):
    rng = np.random.default_rng(4)
    X, y = rng.normal(size=(80, 3)), rng.normal(size=80)
    w = rng.choice([1.0, 8.0], size=80)
    cfg = ForestConfig(n_trees=6, bootstrap=bootstrap, seed=11)
    assert _trees_equal(forest.fit(X, y, w, cfg), forest.fit(X, y, scale * w, cfg))


def test_weight_scaling_non_power_of_two_predictions():
    rng = np.random.default_rng(5)
    X, y = rng.normal(size=(80, 3)), rng.normal(size=80)
    w = rng.uniform(0.5, 3, 80)
    cfg = ForestConfig(n_trees=3, bootstrap=False, seed=0)
    np.testing.assert_allclose(forest.predict(forest.fit(X, y, w, cfg), X),
                               forest.predict(forest.fit(X, y, 3.7 * w, cfg), X), atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(y=st.lists(st.floats(-5, 5, allow_nan=False), min_size=8, max_size=8), k=st.integers(0, 7))
def test_duplicate_half_weights_match_single_sample(y, k):
    X = np.arange(8.0)[:, None]
    y = np.array(y)
    w = np.full(8, 4.0)
    single = forest.fit(X, y, w, EXACT)
    X2 = np.vstack([X, X[k:k + 1]])
    y2 = np.append(y, y[k])
    w2 = np.append(w, 2.0)
    w2[k] = 2.0
    dup = forest.fit(X2, y2, w2, EXACT)
    grid = np.linspace(-1, 8, 37)[:, None]
    np.testing.assert_allclose(forest.predict(dup, grid), forest.predict(single, grid), atol=1e-9)


def test_serial_and_threaded_identical():
    rng = np.random.default_rng(6)
    X, y = rng.normal(size=(200, 4)), rng.normal(size=200)
    w = rng.choice([1.0, 8.0], size=200)
    serial = forest.fit(X, y, w, ForestConfig(n_trees=12, seed=5, n_jobs=1))
    threaded = forest.fit(X, y, w, ForestConfig(n_trees=12, seed=5, n_jobs=3))
    assert _trees_equal(serial, threaded)
    again = forest.fit(X, y, w, ForestConfig(n_trees=12, seed=5))
    assert _trees_equal(serial, again)


def test_leaf_weight_floor():
    rng = np.random.default_rng(7)
    X, y = rng.normal(size=(150, 2)), rng.normal(size=150)
    model = forest.fit(X, y, None, ForestConfig(n_trees=5, min_samples_leaf=3))
    for tree in model.trees:
        assert tree.weight[tree.feature < 0].min() >= 3.0


def test_zero_weights_rejected():
    with pytest.raises(ValueError, match="zero"):
        forest.fit(np.ones((3, 1)), np.ones(3), np.zeros(3))


def test_predict_dimension_mismatch():
    model = forest.fit(np.ones((4, 2)), np.ones(4), None, ForestConfig(n_trees=1))
    with pytest.raises(ValueError, match="features"):
        forest.predict(model, np.ones((2, 3)))


def test_config_validation():
    with pytest.raises(ValueError):
        ForestConfig(n_trees=0)
    with pytest.raises(ValueError):
        ForestConfig(min_samples_leaf=0)
