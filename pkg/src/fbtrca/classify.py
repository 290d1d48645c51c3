"""Binary classifiers for CCP features: shrinkage LDA, linear SVM, 10-unit NN.

Labels are 0 (rest) / 1 (movement).  Decision values are positive for
class 1.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

KINDS = ("LDA", "SVM", "NN")


class ClassifierError(ValueError):
    pass


@dataclass
class TrainedClassifier:
    kind: str
    params: dict
    training_meta: dict = field(default_factory=dict)

    @property
    def n_features(self) -> int:
        return int(self.params["mean"].size)

    def decision_function(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.n_features:
            raise ClassifierError(f"expected {self.n_features} features, got {X.shape[1]}")
        Z = (X - self.params["mean"]) / self.params["scale"]
        if self.kind == "NN":
            return _nn_forward(self.params, Z)[1]
        return Z @ self.params["w"] + self.params["b"]

    def predict(self, X):
        """Labels and decision values."""
        d = self.decision_function(X)
        return (d > 0).astype(int), d

    def save(self, path) -> Path:
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        names = sorted(self.params)
        arrays = [np.atleast_1d(np.asarray(self.params[k], dtype="<f8")) for k in names]
        meta = {"kind": self.kind, "training_meta": self.training_meta,
                "arrays": [{"name": k, "shape": list(a.shape)} for k, a in zip(names, arrays)]}
        (path / "classifier.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
        (path / "classifier.f64").write_bytes(b"".join(a.tobytes() for a in arrays))
        return path

    @classmethod
    def load(cls, path) -> "TrainedClassifier":
        path = Path(path)
        meta = json.loads((path / "classifier.json").read_text())
        blob = np.frombuffer((path / "classifier.f64").read_bytes(), dtype="<f8")
        params, pos = {}, 0
        for spec in meta["arrays"]:
            size = int(np.prod(spec["shape"]))
            params[spec["name"]] = blob[pos:pos + size].reshape(spec["shape"]).copy()
            pos += size
        if "b" in params:
            params["b"] = float(params["b"][0])
        return cls(meta["kind"], params, meta["training_meta"])


def _check(X, y):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y).ravel().astype(int)
    if X.shape[0] != y.size:
        raise ClassifierError("X and y lengths differ")
    if not np.all(np.isfinite(X)):
        raise ClassifierError("non-finite features")
    if not np.isin(y, (0, 1)).all():
        raise ClassifierError("labels must be 0/1")
    if np.unique(y).size < 2:
        raise ClassifierError("both classes must be present")
    return X, y


def _standardizer(X):
    mean = X.mean(axis=0)
    sd = X.std(axis=0, ddof=1) if X.shape[0] > 1 else np.ones(X.shape[1])
    return mean, np.where(sd > 0, sd, 1.0)


# -- LDA ---------------------------------------------------------------------

def train_lda(X, y, shrinkage: float = 1e-4) -> TrainedClassifier:
    """Pooled-covariance LDA shrunk toward ``trace/p * I`` by ``shrinkage``."""
    X, y = _check(X, y)
    p = X.shape[1]
    m0, m1 = X[y == 0].mean(axis=0), X[y == 1].mean(axis=0)
    R = np.vstack([X[y == 0] - m0, X[y == 1] - m1])
    S = R.T @ R / max(X.shape[0] - 2, 1)
    nu = np.trace(S) / p
    S = (1 - shrinkage) * S + shrinkage * (nu if nu > 0 else 1.0) * np.eye(p)
    w = np.linalg.solve(S, m1 - m0)
    prior = np.log(np.mean(y == 1) / np.mean(y == 0))
    b = -w @ (m0 + m1) / 2 + prior
    return TrainedClassifier("LDA", {"w": w, "b": float(b), "mean": np.zeros(p),
                                     "scale": np.ones(p)},
                             {"shrinkage": shrinkage})


# -- linear SVM --------------------------------------------------------------

def _svm_dual_cd(Z, s, C, tol, max_iter, rng):
    """Dual coordinate descent for the L1-loss linear SVM with a bias feature."""
    Zb = np.hstack([Z, np.ones((Z.shape[0], 1))])
    n = Zb.shape[0]
    alpha = np.zeros(n)
    w = np.zeros(Zb.shape[1])
    qd = np.einsum("ij,ij->i", Zb, Zb)
    it = 0
    for it in range(1, max_iter + 1):
        pg_max, pg_min = -np.inf, np.inf
        for i in rng.permutation(n):
            G = s[i] * (w @ Zb[i]) - 1.0
            if alpha[i] == 0:
                pg = min(G, 0.0)
            elif alpha[i] == C:
                pg = max(G, 0.0)
            else:
                pg = G
            pg_max, pg_min = max(pg_max, pg), min(pg_min, pg)
            if pg != 0.0 and qd[i] > 0:
                old = alpha[i]
                alpha[i] = min(max(old - G / qd[i], 0.0), C)
                w += (alpha[i] - old) * s[i] * Zb[i]
        if pg_max - pg_min < tol:
            break
    return w[:-1], w[-1], alpha, it


def svm_kkt_violation(clf: TrainedClassifier, X, y) -> float:
    """Largest projected-gradient magnitude of the dual at the stored solution."""
    Z = (np.asarray(X, float) - clf.params["mean"]) / clf.params["scale"]
    s = np.where(np.asarray(y) == 1, 1.0, -1.0)
    alpha = clf.params["alpha"]
    C = clf.training_meta["C"]
    G = s * (Z @ clf.params["w"] + clf.params["b"]) - 1.0
    pg = np.where(alpha <= 0, np.minimum(G, 0), np.where(alpha >= C, np.maximum(G, 0), G))
    return float(np.abs(pg).max())


def train_svm(X, y, C: float = 1.0, tol: float = 1e-4, max_iter: int = 1000,
              seed: int = 0, standardize: bool = True) -> TrainedClassifier:
    X, y = _check(X, y)
    mean, scale = _standardizer(X) if standardize else (np.zeros(X.shape[1]), np.ones(X.shape[1]))
    Z = (X - mean) / scale
    s = np.where(y == 1, 1.0, -1.0)
    w, b, alpha, n_iter = _svm_dual_cd(Z, s, C, tol, max_iter, np.random.default_rng(seed))
    return TrainedClassifier("SVM", {"w": w, "b": float(b), "alpha": alpha,
                                     "mean": mean, "scale": scale},
                             {"C": C, "tol": tol, "seed": seed, "iterations": n_iter})


# -- neural network ----------------------------------------------------------

def _sigmoid(z):
    return 0.5 * (1 + np.tanh(z / 2))


def _nn_forward(p, Z):
    H = np.tanh(Z @ p["W1"] + p["b1"])
    return H, H @ p["w2"] + p["b2"]


def nn_loss_grad(p, Z, y):
    """Summed logistic loss and its gradient for the one-hidden-layer net."""
    H, out = _nn_forward(p, Z)
    prob = _sigmoid(out)
    eps = 1e-300
    loss = -np.sum(y * np.log(prob + eps) + (1 - y) * np.log(1 - prob + eps))
    d_out = prob - y
    dH = np.outer(d_out, p["w2"]) * (1 - H ** 2)
    grad = {"w2": H.T @ d_out, "b2": np.array([d_out.sum()]),
            "W1": Z.T @ dH, "b1": dH.sum(axis=0)}
    return float(loss), grad


def init_nn(n_features, hidden=10, seed=0):
    rng = np.random.default_rng(seed)
    return {"W1": rng.normal(0, 1 / np.sqrt(n_features), (n_features, hidden)),
            "b1": np.zeros(hidden),
            "w2": rng.normal(0, 1 / np.sqrt(hidden), hidden),
            "b2": np.zeros(1)}


def train_nn(X, y, hidden: int = 10, epochs: int = 200, lr: float = 0.01,
             seed: int = 0) -> TrainedClassifier:
    """Full-batch gradient descent on the summed logistic loss."""
    X, y = _check(X, y)
    mean, scale = _standardizer(X)
    Z = (X - mean) / scale
    p = init_nn(X.shape[1], hidden, seed)
    for _ in range(epochs):
        _, g = nn_loss_grad(p, Z, y)
        for k in p:
            p[k] = p[k] - lr * g[k]
    p.update(mean=mean, scale=scale)
    return TrainedClassifier("NN", p, {"hidden": hidden, "epochs": epochs, "lr": lr,
                                       "seed": seed, "activation": "tanh"})


def train(kind: str, X, y, seed: int = 0) -> TrainedClassifier:
    kind = kind.upper()
    if kind == "LDA":
        return train_lda(X, y)
    if kind in ("SVM", "SVM-LINEAR"):
        return train_svm(X, y, seed=seed)
    if kind == "NN":
        return train_nn(X, y, seed=seed)
    raise ClassifierError(f"unknown classifier {kind!r}")


def predict(clf: TrainedClassifier, X):
    return clf.predict(X)
