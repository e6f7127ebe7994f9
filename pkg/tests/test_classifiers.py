import json
import math

import numpy as np
import pytest

from coaplab.classifiers import FeatureDataset, train_test_split
from coaplab.classifiers.bayes import GaussianNB, nb_fit, nb_predict
from coaplab.classifiers.data import DatasetError
from coaplab.classifiers.lstm import (Adam, LstmModel, bce_loss, init_lstm, loss_and_grads, lstm_fit,
                                      lstm_forward, sigmoid)
from coaplab.classifiers.metrics import ConfusionMatrix, evaluate, report_entry, write_confusion_csv
from coaplab.classifiers.svm import LinearSVM, svm_fit, svm_objective, svm_predict
from coaplab.classifiers.tree import DecisionTree, RandomForest, best_split, forest_fit, tree_fit
from oracles import brute_force_nb, exhaustive_root_split, finite_difference_check


# -- split -------------------------------------------------------------------

def test_stratified_split_sizes():
    y = np.array([0] * 70 + [1] * 30)
    tr, te = train_test_split(y, 0.2, seed=3)
    assert len(tr) == 80 and len(te) == 20
    assert abs(y[te].sum() - 6) <= 1
    assert sorted(np.concatenate([tr, te]).tolist()) == list(range(100))


def test_split_deterministic():
    y = np.array([0, 1] * 25)
    a, b = train_test_split(y, 0.3, 9), train_test_split(y, 0.3, 9)
    assert all(np.array_equal(x, z) for x, z in zip(a, b))


@pytest.mark.parametrize("y,frac", [([0, 0, 0, 1], 0.2), ([0, 1, 0, 1], 1.0)])
def test_split_errors(y, frac):
    with pytest.raises(DatasetError):
        train_test_split(np.array(y), frac)


def test_dataset_flattening_is_row_major():
    seq = np.arange(12.0).reshape(1, 3, 4)
    assert FeatureDataset(seq, [1]).X.tolist() == [list(range(12))]


# -- naive Bayes ---------------------------------------------------------------

def test_nb_hand_posterior():
    X = np.array([[-1.0], [1.0], [9.0], [11.0]])
    y = np.array([0, 0, 1, 1])
    m = nb_fit(X, y)
    assert m.means[:, 0].tolist() == [0.0, 10.0]
    assert nb_predict(m, [[0.1]]).tolist() == [0]
    assert nb_predict(m, [[5.0]]).tolist() == [0]  # exact midpoint ties to benign
    assert nb_predict(m, [[5.5]]).tolist() == [1]


@pytest.mark.parametrize("seed", range(5))
def test_nb_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(20, 3)) + np.repeat([[0.0], [1.0]], 10, axis=0)
    y = np.repeat([0, 1], 10)
    probe = rng.normal(size=(20, 3)) * 2
    m = nb_fit(X, y)
    lp = m.log_posterior(probe)
    for i, x in enumerate(probe):
        label, scores = brute_force_nb(X.tolist(), y.tolist(), x.tolist())
        assert nb_predict(m, [x])[0] == label
        assert np.allclose(lp[i], scores, rtol=1e-10)


def test_nb_json_round_trip():
    m = nb_fit(np.array([[0.0], [1.0], [5.0], [6.0]]), np.array([0, 0, 1, 1]))
    back = GaussianNB.from_json(json.loads(json.dumps(m.to_json())))
    assert np.array_equal(back.log_posterior([[2.0]]), m.log_posterior([[2.0]]))


def test_nb_needs_both_classes():
    with pytest.raises(DatasetError):
        nb_fit(np.zeros((3, 1)), np.zeros(3))


# -- decision tree -------------------------------------------------------------

@pytest.mark.parametrize("seed", range(25))
def test_root_split_matches_exhaustive_search(seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(4, 33))
    X = rng.integers(0, 6, size=(m, 4)).astype(float)
    y = rng.integers(0, 2, size=m)
    if y.min() == y.max():
        y[0] = 1 - y[0]
    oracle = exhaustive_root_split(X, y)
    found = best_split(X, y, np.arange(4))
    if oracle is None:
        assert found is None
        return
    assert found == (oracle[1], oracle[2])
    tree = tree_fit(X, y, max_depth=1)
    assert (tree.feature[0], tree.threshold[0]) == (oracle[1], oracle[2])


def test_single_class_is_single_leaf():
    tree = tree_fit(np.random.default_rng(0).normal(size=(10, 3)), np.ones(10, int))
    assert tree.node_count == 1 and tree.predict([[0, 0, 0]]).tolist() == [1]


def test_xor_depth_two():
    X = np.array([[0, 0], [0, 1], [1, 0], [1, 1]] * 5, dtype=float)
    y = np.array([0, 1, 1, 0] * 5)
    tree = tree_fit(X, y, max_depth=2)
    assert np.array_equal(tree.predict(X), y)
    assert tree.depth() == 2


def test_tree_invariant_under_monotone_rescaling():
    rng = np.random.default_rng(5)
    X = rng.integers(0, 10, size=(200, 3)).astype(float)
    y = ((X[:, 0] > 4) ^ (X[:, 2] > 6)).astype(int)
    test = rng.integers(0, 10, size=(100, 3)).astype(float)
    warp = lambda a: a ** 3 + np.exp(a)
    a = tree_fit(X, y).predict(test)
    b = tree_fit(warp(X), y).predict(warp(test))
    assert np.array_equal(a, b)


def test_tree_json_round_trip():
    X = np.random.default_rng(1).normal(size=(50, 4))
    y = (X[:, 1] > 0).astype(int)
    t = tree_fit(X, y)
    back = DecisionTree.from_json(json.loads(json.dumps(t.to_json())))
    assert np.array_equal(back.predict(X), t.predict(X))


# -- random forest -------------------------------------------------------------

def test_degenerate_forest_is_a_tree():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(80, 5))
    y = (X[:, 0] + X[:, 3] > 0).astype(int)
    forest = forest_fit(X, y, n_trees=1, features_per_split=5, bootstrap=False)
    tree = tree_fit(X, y)
    for part in ("feature", "threshold", "left", "right", "proba"):
        assert getattr(forest.trees[0], part) == getattr(tree, part)
    probe = rng.normal(size=(40, 5))
    assert np.array_equal(forest.predict(probe), tree.predict(probe))


def leaf(p):
    return DecisionTree(feature=[-1], threshold=[0.0], left=[-1], right=[-1], proba=[p])


def test_majority_vote():
    forest = RandomForest(n_trees=5, trees=[leaf(1.0)] * 3 + [leaf(0.0)] * 2)
    assert forest.predict([[0.0]]).tolist() == [1]
    tied = RandomForest(n_trees=4, trees=[leaf(1.0)] * 2 + [leaf(0.0)] * 2)
    assert tied.predict([[0.0]]).tolist() == [0]


def test_forest_deterministic_and_serializable():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(60, 9))
    y = (X[:, 2] > 0.3).astype(int)
    a = forest_fit(X, y, n_trees=15, seed=8)
    b = forest_fit(X, y, n_trees=15, seed=8)
    assert np.array_equal(a.votes(X), b.votes(X))
    back = RandomForest.from_json(json.loads(json.dumps(a.to_json())))
    assert np.array_equal(back.predict(X), a.predict(X))
    assert all(t.features_per_split == 3 for t in a.trees)


# -- linear SVM ----------------------------------------------------------------

def blobs(seed=0, n=60):
    rng = np.random.default_rng(seed)
    X = np.vstack([rng.normal(-2, 0.5, size=(n, 2)), rng.normal(2, 0.5, size=(n, 2))])
    return X, np.repeat([0, 1], n)


def test_svm_separable_blobs():
    X, y = blobs()
    m = svm_fit(X, y, lam=1e-2, epochs=30)
    assert np.array_equal(svm_predict(m, X), y)


def test_zero_svm_is_benign():
    m = LinearSVM(w=np.zeros(3), b=0.0)
    assert m.predict(np.random.default_rng(0).normal(size=(10, 3))).tolist() == [0] * 10


@pytest.mark.parametrize("seed", range(3))
def test_svm_objective_non_increasing(seed):
    X, y = blobs(seed, 30)
    X = X + np.random.default_rng(seed + 10).normal(0, 1.0, X.shape)  # overlapping classes
    m = svm_fit(X, y, lam=0.1, epochs=25, seed=seed)
    hist = np.array(m.objective_history)
    assert np.all(np.diff(hist) <= 1e-12)
    assert m.objective(X, y) == pytest.approx(svm_objective(m.w, m.b, X, y, 0.1))


def test_svm_json_round_trip():
    X, y = blobs()
    m = svm_fit(X, y)
    back = LinearSVM.from_json(json.loads(json.dumps(m.to_json())))
    assert np.array_equal(back.decision_function(X), m.decision_function(X))


# -- LSTM ----------------------------------------------------------------------

def zero_model(d, h):
    return LstmModel(np.zeros((d, 4 * h)), np.zeros((h, 4 * h)), np.zeros(4 * h), np.zeros(h), 0.0)


def test_zero_parameters():
    p, cache = lstm_forward(zero_model(16, 4), np.random.default_rng(0).normal(size=(5, 16)))
    assert p == 0.5
    assert not cache["c"].any() and not cache["h"].any()


def scalar_lstm(model, seq):
    """Step-by-step recurrence with explicit loops over units."""
    h_dim = model.hidden
    W, U, b = model.W.tolist(), model.U.tolist(), model.b.tolist()
    h = [0.0] * h_dim
    c = [0.0] * h_dim
    sig = lambda z: 1 / (1 + math.exp(-z))
    for x in seq:
        new_h, new_c = [], []
        for u in range(h_dim):
            z = []
            for gate in range(4):
                col = gate * h_dim + u
                z.append(b[col] + sum(x[k] * W[k][col] for k in range(len(x)))
                         + sum(h[j] * U[j][col] for j in range(h_dim)))
            i, f, o, g = sig(z[0]), sig(z[1]), sig(z[2]), math.tanh(z[3])
            cu = f * c[u] + i * g
            new_c.append(cu)
            new_h.append(o * math.tanh(cu))
        h, c = new_h, new_c
    return sig(sum(hv * vv for hv, vv in zip(h, model.v.tolist())) + model.c), h, c


def test_forward_matches_scalar_recurrence():
    model = init_lstm(4, 2, seed=3)
    model.b += np.random.default_rng(1).normal(size=8)
    model.c = 0.3
    seq = np.random.default_rng(2).normal(size=(3, 4))
    p, cache = lstm_forward(model, seq)
    p_ref, h_ref, c_ref = scalar_lstm(model, seq.tolist())
    assert p == pytest.approx(p_ref, rel=1e-12)
    assert np.allclose(cache["h"][-1], h_ref, rtol=1e-12)
    assert np.allclose(cache["c"][-1], c_ref, rtol=1e-12)


def test_single_step_is_one_block():
    model = init_lstm(3, 2, seed=0)
    x = np.array([0.5, -1.0, 2.0])
    _, cache = lstm_forward(model, x[None])
    i, f, o, g = (sigmoid(x @ model.W[:, k * 2:(k + 1) * 2] + model.b[k * 2:(k + 1) * 2]) for k in range(4))
    g = np.tanh(x @ model.W[:, 6:] + model.b[6:])
    assert np.allclose(cache["c"][0], i * g)
    assert np.allclose(cache["h"][0], o * np.tanh(i * g))
    assert np.allclose(model.gate("forget")[2], model.b[2:4])


@pytest.mark.parametrize("label", [0, 1])
def test_gradient_check(label):
    rng = np.random.default_rng(11 + label)
    model = init_lstm(5, 3, seed=label)
    model.b += rng.normal(0, 0.5, size=12)
    X = rng.normal(size=(1, 4, 5))
    assert finite_difference_check(model, X, np.array([label])) < 1e-4


def test_gradient_check_weighted_batch():
    rng = np.random.default_rng(7)
    model = init_lstm(3, 3, seed=2)
    model.x_mean, model.x_scale = rng.normal(size=3), rng.uniform(0.5, 2, size=3)
    X = rng.normal(size=(4, 4, 3))
    assert finite_difference_check(model, X, np.array([0, 1, 0, 0]), pos_weight=3.0) < 1e-4


def test_zero_learning_rate_keeps_parameters():
    rng = np.random.default_rng(0)
    X, y = rng.normal(size=(10, 4, 3)), np.array([0, 1] * 5)
    before = lstm_fit(X, y, epochs=0, hidden=4, seed=5)
    after = lstm_fit(X, y, epochs=3, learning_rate=0.0, hidden=4, seed=5)
    for name in ("W", "U", "b", "v"):
        assert np.array_equal(getattr(before, name), getattr(after, name))
    assert before.c == after.c


def test_toy_loss_decreases():
    rng = np.random.default_rng(1)
    y = np.array([0, 1] * 5)
    X = rng.normal(size=(10, 6, 4)) + y[:, None, None] * 0.8
    history = []
    lstm_fit(X, y, epochs=5, hidden=8, seed=0, batch_size=10, history=history)
    assert all(b < a for a, b in zip(history, history[1:]))


def test_bce_and_json():
    assert bce_loss(np.array([0.0]), np.array([1.0])) == pytest.approx(math.log(2))
    rng = np.random.default_rng(0)
    X, y = rng.normal(size=(8, 3, 2)), np.array([0, 1] * 4)
    m = lstm_fit(X, y, epochs=1, hidden=3)
    back = LstmModel.from_json(json.loads(json.dumps(m.to_json())))
    assert np.array_equal(back.predict_proba(X), m.predict_proba(X))


def test_adam_zero_rate():
    m = init_lstm(2, 2, seed=0)
    ref = m.copy()
    _, g = loss_and_grads(m, np.ones((1, 2, 2)), np.array([1]))
    Adam(0.0).step(m, g)
    assert np.array_equal(m.W, ref.W) and m.c == ref.c


# -- metrics -------------------------------------------------------------------

class Oracle:
    def __init__(self, y):
        self.y = y

    def predict(self, X):
        return self.y


def test_perfect_predictor():
    y = np.array([0, 1, 1, 0, 0])
    cm = evaluate(Oracle(y), None, y)
    assert cm.fp == cm.fn == 0 and cm.accuracy_percent == 100.0
    assert cm.total == len(y)


def test_confusion_counts_and_csv(tmp_path):
    cm = ConfusionMatrix.from_predictions([1, 1, 0, 0, 1], [1, 0, 0, 1, 1])
    assert (cm.tp, cm.fp, cm.fn, cm.tn) == (2, 1, 1, 1)
    assert cm.total == 5 and 0 <= cm.accuracy <= 1
    assert cm.precision == pytest.approx(2 / 3) and cm.recall == pytest.approx(2 / 3)
    entry = report_entry("nb", cm, 4)
    assert set(entry) == {"model", "seed", "confusion_matrix", "accuracy", "precision", "recall", "f1"}
    write_confusion_csv([entry], tmp_path / "c.csv")
    assert (tmp_path / "c.csv").read_text().splitlines()[1] == "nb,2,1,1,1,60.0"
