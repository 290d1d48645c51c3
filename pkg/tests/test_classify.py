import numpy as np
import pytest

from fbtrca.classify import (ClassifierError, TrainedClassifier, init_nn, nn_loss_grad,
                             svm_kkt_violation, train, train_lda, train_nn, train_svm)


def blobs(rng, n=100, p=4, gap=6.0):
    """Two unit-variance Gaussian clouds separated along the first axis."""
    y = np.repeat([0, 1], n // 2)
    X = rng.standard_normal((n, p)) * 0.5
    X[:, 0] += np.where(y == 1, gap / 2, -gap / 2)
    return X, y


@pytest.mark.parametrize("kind", ["LDA", "SVM", "NN"])
def test_separable_blobs_fit_perfectly(rng, kind):
    X, y = blobs(rng)
    labels, dec = train(kind, X, y).predict(X)
    assert (labels == y).all()
    assert dec.shape == (100,)


@pytest.mark.parametrize("kind", ["LDA", "SVM", "NN"])
def test_permuted_labels_are_chance(kind):
    r = np.random.default_rng(7)
    X = r.standard_normal((4000, 3))
    y = r.permutation(np.repeat([0, 1], 2000))
    clf = train(kind, X[:2000], y[:2000])
    acc = np.mean(clf.predict(X[2000:])[0] == y[2000:])
    assert 0.45 <= acc <= 0.55


def test_svm_kkt(rng):
    X, y = blobs(rng, gap=2.0)
    clf = train_svm(X, y)
    assert svm_kkt_violation(clf, X, y) < 1e-3


def test_svm_duplicate_column_equals_sqrt2_scaling(rng):
    X, y = blobs(rng, gap=2.0)
    dup = np.hstack([X, X[:, :1]])
    scaled = X.copy()
    scaled[:, 0] *= np.sqrt(2)
    a = train_svm(dup, y, standardize=False)
    b = train_svm(scaled, y, standardize=False)
    np.testing.assert_allclose(a.decision_function(dup), b.decision_function(scaled),
                               atol=1e-10)
    assert a.params["w"][0] == pytest.approx(a.params["w"][-1], abs=1e-12)


def test_nn_gradient_check(rng):
    X, y = blobs(rng, n=30, p=3, gap=1.0)
    p = init_nn(3, 10, seed=1)
    p["b1"] = rng.standard_normal(10) * 0.1
    _, g = nn_loss_grad(p, X, y)
    h = 1e-6
    worst = 0.0
    for k in p:
        flat = p[k].ravel()
        for i in range(flat.size):
            plus = {kk: v.copy() for kk, v in p.items()}
            minus = {kk: v.copy() for kk, v in p.items()}
            plus[k].ravel()[i] += h
            minus[k].ravel()[i] -= h
            num = (nn_loss_grad(plus, X, y)[0] - nn_loss_grad(minus, X, y)[0]) / (2 * h)
            ana = g[k].ravel()[i]
            worst = max(worst, abs(num - ana) / max(1.0, abs(num), abs(ana)))
    assert worst <= 1e-5


def test_lda_affine_invariance(rng):
    X, y = blobs(rng, gap=1.5)
    A = rng.standard_normal((4, 4)) + 4 * np.eye(4)
    c = rng.standard_normal(4)
    d1 = train_lda(X, y, shrinkage=0).decision_function(X)
    d2 = train_lda(X @ A + c, y, shrinkage=0).decision_function(X @ A + c)
    np.testing.assert_allclose(d1, d2, atol=1e-8)


def test_all_zero_features_give_zero_decision():
    X = np.zeros((20, 3))
    y = np.repeat([0, 1], 10)
    for kind in ("LDA", "SVM"):
        assert np.allclose(train(kind, X, y).decision_function(X), 0)


@pytest.mark.parametrize("kind", ["LDA", "SVM", "NN"])
def test_deterministic(rng, kind):
    X, y = blobs(rng, gap=1.0)
    a = train(kind, X, y, seed=3).decision_function(X)
    b = train(kind, X, y, seed=3).decision_function(X)
    assert np.array_equal(a, b)


@pytest.mark.parametrize("kind", ["LDA", "SVM", "NN"])
def test_save_load_roundtrip(rng, tmp_path, kind):
    X, y = blobs(rng, gap=1.0)
    clf = train(kind, X, y)
    back = TrainedClassifier.load(clf.save(tmp_path / kind))
    assert back.kind == clf.kind
    assert np.array_equal(back.decision_function(X), clf.decision_function(X))


def test_nn_lowers_loss(rng):
    X, y = blobs(rng, gap=1.0)
    clf = train_nn(X, y, epochs=200)
    Z = (X - clf.params["mean"]) / clf.params["scale"]
    before = nn_loss_grad(init_nn(4, 10, 0), Z, y)[0]
    after = nn_loss_grad(clf.params, Z, y)[0]
    assert after < before


def test_input_validation(rng):
    X, y = blobs(rng)
    with pytest.raises(ClassifierError):
        train("LDA", X, np.zeros(100, int))
    with pytest.raises(ClassifierError):
        train("LDA", X[:10], y)
    with pytest.raises(ClassifierError):
        train("QDA", X, y)
    bad = X.copy()
    bad[0, 0] = np.nan
    with pytest.raises(ClassifierError):
        train("SVM", bad, y)
    with pytest.raises(ClassifierError):
        train("SVM", X, y).decision_function(X[:, :2])
