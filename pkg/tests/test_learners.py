import numpy as np
import pytest

from surropt import learners as L
from surropt.errors import DegenerateDataset


def _grid_1d(n=21):
    return np.linspace(0, 1, n).reshape(-1, 1)


# ---------------------------------------------------------------------------
# Linear SVM
# ---------------------------------------------------------------------------

def test_svc_separates_threshold_data():
    X = _grid_1d()
    y = (X[:, 0] >= 0.5).astype(float)
    model = L.train_svc(X, y)
    assert model.predict_one([0.4]) < 0.0
    assert model.predict_one([0.6]) > 0.0


def test_svc_degenerate_identical_rows():
    X = np.ones((10, 2))
    y = np.array([0.0, 1.0] * 5)
    with pytest.raises(DegenerateDataset):
        L.train_svc(X, y)


def test_svc_single_label_raises():
    with pytest.raises(DegenerateDataset):
        L.train_svc(_grid_1d(), np.ones(21))


def test_svc_deterministic():
    X = _grid_1d()
    y = (X[:, 0] >= 0.5).astype(float)
    a = L.train_svc(X, y)
    b = L.train_svc(X, y)
    assert a.beta0 == b.beta0
    assert np.array_equal(a.beta, b.beta)


def test_svr_recovers_linear_generator():
    X = np.linspace(0, 1, 30).reshape(-1, 1)
    y = 2.0 * X[:, 0] + 1.0
    model = L.train_svr(X, y)
    assert model.beta[0] == pytest.approx(2.0, abs=1e-3)
    assert model.beta0 == pytest.approx(1.0, abs=1e-3)


def test_svr_constant_labels():
    X = np.linspace(0, 1, 15).reshape(-1, 1)
    model = L.train_svr(X, np.full(15, 3.7))
    assert np.allclose(model.beta, 0.0)
    assert model.beta0 == pytest.approx(3.7)


def test_svr_needs_enough_samples():
    with pytest.raises(DegenerateDataset):
        L.train_svr(np.array([[0.1, 0.2]]), np.array([1.0]))


# ---------------------------------------------------------------------------
# Trees
# ---------------------------------------------------------------------------

def test_tree_recovers_axis_threshold():
    rng = np.random.default_rng(3)
    X = rng.uniform([0.51, 0.3], [1.5, 1.6], size=(400, 2))
    y = (X[:, 1] >= 0.9319).astype(float)
    tree = L.train_tree(X, y, "classifier", max_depth=4)
    root = tree.root
    assert not root.is_leaf
    # axis split on the second feature near the generating threshold
    assert np.array_equal(root.a, [0.0, 1.0])
    assert root.b == pytest.approx(0.9319, abs=0.02)
    acc = np.mean([tree.predict_one(r) == y[i] for i, r in enumerate(X)])
    assert acc == 1.0


def test_tree_pure_dataset_single_leaf():
    X = _grid_1d()
    tree = L.train_tree(X, np.ones(len(X)), "classifier")
    assert tree.root.is_leaf
    assert tree.predict_one([0.3]) == 1.0


def test_tree_xor_depth_two():
    X = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
    y = np.array([0.0, 1.0, 1.0, 0.0])
    tree = L.train_tree(X, y, "classifier", max_depth=2)
    assert all(tree.predict_one(r) == y[i] for i, r in enumerate(X))


def test_tree_axis_splits_are_one_hot():
    rng = np.random.default_rng(5)
    X = rng.uniform(0, 1, size=(200, 3))
    y = (X[:, 0] <= 0.5).astype(float)
    tree = L.train_tree(X, y, "classifier", max_depth=3, oblique=False)

    def check(node):
        if node.is_leaf:
            return
        assert np.count_nonzero(node.a) == 1
        assert node.a[np.nonzero(node.a)[0][0]] == 1.0
        check(node.left)
        check(node.right)

    check(tree.root)


def test_tree_leaf_partition_of_the_box():
    rng = np.random.default_rng(8)
    X = rng.uniform(0, 1, size=(300, 2))
    y = (X[:, 0] + np.sin(3 * X[:, 1]) <= 0.8).astype(float)
    tree = L.train_tree(X, y, "classifier", max_depth=4)
    leaves = tree.leaves()
    for point in rng.uniform(0, 1, size=(1000, 2)):
        hits = sum(
            all(
                (float(a @ point) <= b) if on_left else (float(a @ point) > b)
                for a, b, on_left in path
            )
            for _, path in leaves
        )
        assert hits == 1


def test_tree_traversal_matches_leaf_membership():
    rng = np.random.default_rng(13)
    X = rng.uniform(-1, 1, size=(250, 2))
    y = (X[:, 0] ** 2 + X[:, 1] <= 0.3).astype(float)
    tree = L.train_tree(X, y, "classifier", max_depth=4)
    leaves = tree.leaves()
    for point in rng.uniform(-1, 1, size=(1000, 2)):
        by_traversal = tree.predict_one(point)
        by_membership = None
        for value, path in leaves:
            if all(
                (float(a @ point) <= b) if on_left else (float(a @ point) > b)
                for a, b, on_left in path
            ):
                by_membership = value
                break
        assert by_membership == by_traversal


# ---------------------------------------------------------------------------
# Boosted ensembles
# ---------------------------------------------------------------------------

def test_gbm_single_tree_equals_tree_plus_base():
    X = _grid_1d(40)
    y = np.sin(3 * X[:, 0])
    ens = L.train_gbm(X, y, "regressor", n_trees=1, lr=1.0)
    lone = ens.trees[0]
    for x in ([0.1], [0.5], [0.9]):
        assert ens.predict_one(x) == pytest.approx(ens.base + lone.predict_one(x), abs=1e-12)


def test_gbm_threshold_accuracy():
    X = _grid_1d(60)
    y = (X[:, 0] >= 0.5).astype(float)
    ens = L.train_gbm(X, y, "classifier")
    acc = np.mean([(ens.predict_one(r) >= 0.5) == (y[i] >= 0.5) for i, r in enumerate(X)])
    assert acc >= 0.95


def test_gbm_residuals_nonincreasing():
    rng = np.random.default_rng(2)
    X = rng.uniform(0, 1, size=(80, 2))
    y = X[:, 0] * 2 + np.sin(4 * X[:, 1])
    base = float(y.mean())
    pred = np.full(len(y), base)
    last_sse = float(((y - pred) ** 2).sum())
    ens = L.train_gbm(X, y, "regressor", n_trees=8, lr=0.3, depth=2)
    for tree, w in zip(ens.trees, ens.weights):
        pred = pred + w * np.array([tree.predict_one(r) for r in X])
        sse = float(((y - pred) ** 2).sum())
        assert sse <= last_sse + 1e-9
        last_sse = sse


def test_gbm_prediction_is_weighted_sum():
    rng = np.random.default_rng(4)
    X = rng.uniform(0, 1, size=(60, 2))
    y = X[:, 0] - X[:, 1] ** 2
    ens = L.train_gbm(X, y, "regressor")
    for point in rng.uniform(0, 1, size=(20, 2)):
        manual = ens.base + sum(
            w * t.predict_one(point) for w, t in zip(ens.weights, ens.trees)
        )
        assert ens.predict_one(point) == pytest.approx(manual, abs=1e-12)


def test_gbm_constant_trees_always_feasible():
    stump = L.ObliqueTree(root=L._Node(value=1.0), n_features=1)
    ens = L.GbmEnsemble(base=0.0, trees=[stump, stump], weights=[0.5, 0.5])
    assert ens.predict_one([0.3]) == pytest.approx(1.0)


# ---------------------------------------------------------------------------
# MLP
# ---------------------------------------------------------------------------

def test_mlp_fits_identity_with_one_unit():
    X = np.linspace(0, 1, 50).reshape(-1, 1)
    net = L.train_mlp(X, X[:, 0], "regressor", hidden=(1,), epochs=800, seed=0)
    grid = np.linspace(0, 1, 21).reshape(-1, 1)
    mse = np.mean([(net.predict_one(r) - r[0]) ** 2 for r in grid])
    assert mse < 1e-2


def test_mlp_classifier_accuracy():
    rng = np.random.default_rng(3)
    X = rng.uniform(-1, 1, size=(200, 2))
    y = (X[:, 0] + 0.5 * X[:, 1] >= 0.1).astype(float)
    net = L.train_mlp(X, y, "classifier", epochs=600)
    acc = np.mean([(net.predict_one(r) >= 0.0) == (y[i] >= 0.5) for i, r in enumerate(X)])
    assert acc >= 0.9


def test_mlp_deterministic_given_seed():
    rng = np.random.default_rng(3)
    X = rng.uniform(-1, 1, size=(100, 2))
    y = (X[:, 0] >= 0.0).astype(float)
    a = L.train_mlp(X, y, "classifier", epochs=100, seed=5)
    b = L.train_mlp(X, y, "classifier", epochs=100, seed=5)
    for (Wa, ba), (Wb, bb) in zip(a.layers, b.layers):
        assert np.array_equal(Wa, Wb) and np.array_equal(ba, bb)


def test_mlp_zero_weights_bias_pass_through():
    net = L.Mlp(
        layers=[(np.zeros((4, 2)), np.zeros(4)), (np.zeros((1, 4)), np.array([3.0]))],
        task="regressor",
    )
    for point in ([0.0, 0.0], [1.0, -1.0], [5.0, 2.0]):
        assert net.predict_one(point) == 3.0


# ---------------------------------------------------------------------------
# Selection
# ---------------------------------------------------------------------------

def test_linear_model_native_output():
    model = L.LinearModel(beta0=0.0, beta=np.array([1.0, 0.0]))
    assert model.predict_one([0.3, 9.0]) == pytest.approx(0.3)


def test_selected_surrogates_score_high_on_worked_example():
    # regenerated samples of the two log constraints admit an accurate model
    from surropt.benchmarks import illustrative_problem
    from surropt.driver import RunConfig, _sample_constraint
    from surropt.model import standardize

    sp = standardize(illustrative_problem())
    cfg = RunConfig(seed=11, time_limit=60)
    for i, con in enumerate(sp.nonlinear):
        _, points, labels, _ = _sample_constraint(
            sp, con, cfg, np.random.default_rng(100 + i)
        )
        sur = L.select_surrogate(points, labels, "classifier", seed=5)
        assert sur.validation_score >= 0.95


def test_select_tie_break_prefers_svm():
    rng = np.random.default_rng(6)
    X = np.vstack([rng.uniform(0, 0.4, size=(40, 2)), rng.uniform(0.6, 1.0, size=(40, 2))])
    y = np.array([1.0] * 40 + [0.0] * 40)
    sur = L.select_surrogate(X, y, "classifier", seed=1)
    assert sur.validation_score == 1.0
    assert sur.family == "svm"
    assert sur.threshold == 0.0


def test_select_single_label_raises():
    rng = np.random.default_rng(1)
    X = rng.uniform(0, 1, size=(30, 2))
    with pytest.raises(DegenerateDataset):
        L.select_surrogate(X, np.ones(30), "classifier")


def test_select_too_few_samples():
    with pytest.raises(DegenerateDataset):
        L.select_surrogate(np.zeros((5, 1)), np.array([0, 1, 0, 1, 0.0]), "classifier")


def test_select_regressor_scores_r2():
    rng = np.random.default_rng(11)
    X = rng.uniform(-1, 1, size=(120, 2))
    y = 3 * X[:, 0] - X[:, 1] + 0.5
    sur = L.select_surrogate(X, y, "regressor", seed=2)
    assert sur.task == "regressor"
    assert sur.validation_score > 0.99


def test_surrogate_dump_load_roundtrip():
    rng = np.random.default_rng(12)
    X = rng.uniform(0, 1, size=(80, 2))
    y = (X[:, 0] <= 0.6).astype(float)
    for family in ("svm", "tree", "gbm", "mlp"):
        sur = L.select_surrogate(X, y, "classifier", candidates=(family,), seed=3)
        back = L.load_surrogate(L.dump_surrogate(sur))
        assert back.family == sur.family
        for point in rng.uniform(0, 1, size=(25, 2)):
            assert back.raw(point) == pytest.approx(sur.raw(point), abs=1e-12)
