import math

import numpy as np
import pytest

from ecgbench.boost import (
    BoostConfig,
    BoostedModel,
    TreeNode,
    best_split,
    boost_binary,
    fit_ovr,
    fit_tree,
    importance,
    predict_labels,
    predict_proba,
    random_search,
    sample_config,
)
from ecgbench.errors import ConfigError, DataError, SchemaError
from ecgbench.tsfeat import FeatureMatrix
from boost_oracle import exhaustive_best_split


def matrix(X, prefix="f"):
    X = np.asarray(X, dtype=float)
    return FeatureMatrix(tuple(f"r{i}" for i in range(len(X))), tuple(f"{prefix}{j}" for j in range(X.shape[1])), X)


def random_problem(rng):
    n, F = int(rng.integers(2, 201)), int(rng.integers(1, 21))
    X = rng.normal(size=(n, F))
    if rng.random() < 0.3:
        X = np.round(X * 2) / 2  # many ties
    y = (rng.random(n) < 0.4).astype(float)
    p = rng.uniform(0.05, 0.95, size=n)
    return X, p - y, p * (1 - p)


@pytest.mark.parametrize("trial", range(50))
def test_split_matches_exhaustive_search(trial):
    rng = np.random.default_rng(trial)
    X, g, h = random_problem(rng)
    cfg = BoostConfig(reg_lambda=float(rng.choice([0.01, 1.0, 10.0])), reg_alpha=float(rng.choice([0.0, 0.05])))
    got = best_split(X, g, h, cfg)
    want = exhaustive_best_split(X.tolist(), g.tolist(), h.tolist(), cfg.reg_lambda, cfg.gamma, cfg.reg_alpha)
    if want is None:
        assert got is None
        return
    assert math.isclose(got.gain, want[0], rel_tol=1e-9, abs_tol=1e-12)
    # the optimum is unique up to rounding, so the split itself must agree
    assert (got.feature, got.threshold) == (want[1], want[2])


def test_sign_example_depth_one():
    X = np.array([[-1.0], [1.0], [-1.0], [1.0]])
    y = np.array([0.0, 1.0, 0.0, 1.0])
    p = np.full(4, 0.5)
    tree = fit_tree(p - y, p * (1 - p), X, BoostConfig(max_depth=1))
    assert (tree.feature, tree.threshold) == (0, 0.0)
    assert tree.left.weight > 0 > tree.right.weight or tree.left.weight < 0 < tree.right.weight
    want = exhaustive_best_split(X.tolist(), (p - y).tolist(), (p * (1 - p)).tolist())
    assert math.isclose(tree.gain, want[0])


def test_degenerate_trees():
    X = np.random.default_rng(0).normal(size=(20, 3))
    assert fit_tree(np.full(20, 0.3), np.full(20, 0.25), X).is_leaf
    g = np.where(X[:, 0] > 0, -0.5, 0.5)
    assert not fit_tree(g, np.full(20, 0.25), X).is_leaf
    assert fit_tree(g, np.full(20, 0.25), X, BoostConfig(gamma=1000.0)).is_leaf
    with pytest.raises(DataError):
        fit_tree([], [], np.empty((0, 2)))


def test_depth_limit_respected():
    rng = np.random.default_rng(1)
    X, g, h = rng.normal(size=(200, 5)), rng.normal(size=200), np.full(200, 0.25)
    for d in (1, 2, 4):
        assert fit_tree(g, h, X, BoostConfig(max_depth=d)).depth() <= d


def test_config_validation():
    with pytest.raises(ConfigError):
        BoostConfig(max_depth=101)
    with pytest.raises(ConfigError):
        BoostConfig(eta=0.0)
    with pytest.raises(ConfigError):
        BoostConfig(gamma=1e-4)
    with pytest.raises(ConfigError):
        BoostConfig(rounds=0)
    BoostConfig(gamma=0.0, reg_alpha=1e3, eta=1e-3)


def _separable(seed=0, n=60):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, size=(n, 2))
    labels = [("A",) if x[0] + 0.5 * x[1] > 0 else ("B",) for x in X]
    return matrix(X), labels


def test_separable_reaches_full_accuracy():
    m, labels = _separable()
    model = fit_ovr(m, labels, ["A", "B"], BoostConfig(rounds=50))
    pred = predict_labels(model, m)
    assert [set(p) for p in pred] == [set(lab) for lab in labels]


def test_tiny_eta_stays_near_base():
    m, labels = _separable()
    model = fit_ovr(m, labels, ["A", "B"], BoostConfig(eta=1e-3, rounds=1))
    assert np.all(np.abs(predict_proba(model, m) - 0.5) <= 1e-2)


def test_row_permutation_gives_identical_model():
    m, labels = _separable(3, 80)
    order = np.random.default_rng(0).permutation(80)
    shuffled = FeatureMatrix(tuple(m.record_ids[i] for i in order), m.columns, m.values[order])
    a = fit_ovr(m, labels, ["A", "B"], BoostConfig(rounds=10))
    b = fit_ovr(shuffled, [labels[i] for i in order], ["A", "B"], BoostConfig(rounds=10))
    assert a.to_json() == b.to_json()


def test_training_loss_non_increasing():
    rng = np.random.default_rng(4)
    for _ in range(5):
        X = rng.normal(size=(120, 4))
        y = (X[:, 0] + rng.normal(scale=0.8, size=120) > 0).astype(float)
        _, losses = boost_binary(X, y, BoostConfig(rounds=30))
        assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))


def test_early_stopping_keeps_best_prefix():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(100, 3))
    y = (rng.random(100) < 0.5).astype(float)  # pure noise: validation loss soon rises
    trees, losses = boost_binary(X[:60], y[:60], BoostConfig(rounds=200, patience=5), eval_set=(X[60:], y[60:]))
    assert len(trees) < len(losses) <= 200


def test_empty_ensemble_and_saturated_stump():
    empty = BoostedModel(("A",), ("f0",), {"A": []})
    assert predict_proba(empty, np.array([[1.0]])).tolist() == [[0.5]]
    stump = TreeNode(feature=0, threshold=0.0, default_left=False, left=TreeNode(weight=-20.0), right=TreeNode(weight=20.0))
    model = BoostedModel(("A",), ("f0",), {"A": [stump]})
    assert predict_proba(model, np.array([[1.0]]))[0, 0] >= 0.999
    # -999 routes by the stored default direction, not by the threshold
    assert predict_proba(model, np.array([[-999.0]]))[0, 0] >= 0.999
    assert predict_proba(model, {"f0": None})[0, 0] >= 0.999


def test_schema_errors():
    m, labels = _separable()
    model = fit_ovr(m, labels, ["A", "B"], BoostConfig(rounds=3))
    with pytest.raises(SchemaError):
        predict_proba(model, matrix(m.values, prefix="g"))
    with pytest.raises(SchemaError):
        predict_proba(model, {"f0": 1.0})
    with pytest.raises(ConfigError):
        fit_ovr(m, labels, [])


def test_skipped_class_warns_and_predicts_zero():
    m, labels = _separable()
    with pytest.warns(UserWarning, match="no positive"):
        model = fit_ovr(m, labels, ["A", "B", "C"], BoostConfig(rounds=3))
    assert model.skipped == ("C",)
    assert np.all(predict_proba(model, m)[:, 2] == 0)


def test_importance_properties():
    rng = np.random.default_rng(2)
    X = np.column_stack([rng.normal(size=50), np.full(50, 3.0), rng.normal(size=50)])
    labels = [("A",) if v > 0 else () for v in X[:, 0]]
    model = fit_ovr(matrix(X), labels, ["A"], BoostConfig(rounds=1, max_depth=1))
    imp = importance(model)
    assert list(imp) == ["f0"] and imp["f0"] > 0
    model = fit_ovr(matrix(X), labels, ["A"], BoostConfig(rounds=8))
    imp = importance(model)
    assert "f1" not in imp and all(v >= 0 for v in imp.values())
    recomputed = {}

    def walk(node):
        if not node.is_leaf:
            recomputed[node.feature] = recomputed.get(node.feature, 0.0) + node.gain
            walk(node.left)
            walk(node.right)

    for t in model.trees["A"]:
        walk(t)
    assert {f"f{k}": v for k, v in recomputed.items()} == pytest.approx(imp, rel=1e-12)


def test_tree_order_invariance():
    m, labels = _separable()
    model = fit_ovr(m, labels, ["A", "B"], BoostConfig(rounds=20))
    p = predict_proba(model, m)
    rng = np.random.default_rng(0)
    for c in model.trees:
        rng.shuffle(model.trees[c])
    assert np.array_equal(predict_proba(model, m), p)


def test_json_roundtrip(tmp_path):
    m, labels = _separable()
    model = fit_ovr(m, labels, ["A", "B"], BoostConfig(rounds=5))
    model.save(tmp_path / "b.json")
    back = BoostedModel.load(tmp_path / "b.json")
    assert back.to_json() == model.to_json()
    assert np.array_equal(predict_proba(back, m), predict_proba(model, m))
    with pytest.raises(SchemaError):
        BoostedModel.from_json('{"format": "other"}')


def test_random_search_is_seeded_and_in_range():
    rng = np.random.default_rng(0)
    for _ in range(50):
        cfg = sample_config(rng)
        assert 2 <= cfg.max_depth <= 100 and 1e-3 <= cfg.eta <= 1e3
    m, labels = _separable(n=40)
    tr = (FeatureMatrix(m.record_ids[:30], m.columns, m.values[:30]), labels[:30])
    va = (FeatureMatrix(m.record_ids[30:], m.columns, m.values[30:]), labels[30:])
    a = random_search(tr, va, ["A", "B"], trials=3, seed=1, rounds=5)
    b = random_search(tr, va, ["A", "B"], trials=3, seed=1, rounds=5)
    assert a[0] == b[0] and [s for _, s in a[1]] == [s for _, s in b[1]]


@pytest.mark.parametrize("seed", [2, 4, 7, 13, 17])
def test_equal_partitions_tie_to_lowest_feature(seed):
    # both columns separate the same two groups but order rows differently inside them,
    # so the running sums reach the same partition along different rounding paths
    rng = np.random.default_rng(seed)
    left = rng.random(60) < 0.5
    step = np.where(left, -1.0, 1.0)
    a, b = step + 0.1 * rng.random(60), step + 0.1 * rng.random(60)
    g = np.where(left, -0.9, 0.9) + 0.05 * rng.normal(size=60)
    h = rng.uniform(0.1, 0.25, size=60)
    assert best_split(np.column_stack([b, a]), g, h, BoostConfig()).feature == 0
