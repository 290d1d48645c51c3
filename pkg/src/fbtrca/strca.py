"""TRCA spatial filters and canonical correlation pattern (CCP) features.

Conventions
-----------
Class 1 is movement, class 2 is rest.  Trial batches are handled as
``(n_trials, n_channels, n_samples)`` arrays internally; :class:`EpochSet`
keeps the ``(channels, samples, trials)`` layout at the boundary.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg as linalg

from .data import COEF_KINDS, DataError, EpochSet, FeatureMatrix

SV_CUTOFF = 1e-10


class StrcaError(ValueError):
    pass


@dataclass(frozen=True)
class TrcaMatrices:
    S: np.ndarray
    Q: np.ndarray


@dataclass(frozen=True)
class StrcaModel:
    W: np.ndarray            # (n_channels, 2 * n_vec), movement filters first
    templates: tuple         # (movement mean, rest mean), each (n_channels, n_samples)
    eigenvalues: np.ndarray  # (2, n_vec)

    @property
    def n_channels(self) -> int:
        return self.W.shape[0]

    @property
    def n_samples(self) -> int:
        return self.templates[0].shape[1]

    def features(self, trials: np.ndarray) -> np.ndarray:
        return ccp_batch(self, trials)

    def save(self, path) -> Path:
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        meta = {"n_channels": self.n_channels, "n_samples": self.n_samples,
                "n_filters": self.W.shape[1],
                "eigenvalues": self.eigenvalues.tolist(),
                "payload": ["W", "template_movement", "template_rest"]}
        blob = np.concatenate([self.W.ravel(), self.templates[0].ravel(),
                               self.templates[1].ravel()]).astype("<f8")
        (path / "model.json").write_text(json.dumps(meta, indent=2))
        (path / "model.f64").write_bytes(blob.tobytes())
        return path

    @classmethod
    def load(cls, path) -> "StrcaModel":
        path = Path(path)
        meta = json.loads((path / "model.json").read_text())
        nc, ns, nf = meta["n_channels"], meta["n_samples"], meta["n_filters"]
        blob = np.frombuffer((path / "model.f64").read_bytes(), dtype="<f8")
        if blob.size != nc * nf + 2 * nc * ns:
            raise StrcaError("model payload size does not match header")
        W = blob[:nc * nf].reshape(nc, nf)
        t1 = blob[nc * nf:nc * nf + nc * ns].reshape(nc, ns)
        t2 = blob[nc * nf + nc * ns:].reshape(nc, ns)
        return cls(W.copy(), (t1.copy(), t2.copy()), np.asarray(meta["eigenvalues"]))


def _as_trials(x) -> np.ndarray:
    if isinstance(x, EpochSet):
        return x.trials()
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise StrcaError("expected (n_trials, n_channels, n_samples)")
    return x


def trca_matrices(x) -> TrcaMatrices:
    """Inter-trial covariance sum S and all-pairs covariance sum Q.

    Covariances remove each trial's per-channel time mean and use an
    ``n_samples - 1`` denominator.  Because every pairwise covariance is
    bilinear, ``Q = cov(sum_j X_j)`` and ``S = Q - sum_j cov(X_j)``.
    """
    x = _as_trials(x)
    n_t, _, n_s = x.shape
    if n_t < 2:
        raise StrcaError("TRCA needs at least 2 trials")
    xc = x - x.mean(axis=2, keepdims=True)
    total = xc.sum(axis=0)
    Q = total @ total.T / (n_s - 1)
    D = np.einsum("jcs,jds->cd", xc, xc) / (n_s - 1)
    S = Q - D
    return TrcaMatrices((S + S.T) / 2, (Q + Q.T) / 2)


def _column_signs(V):
    """+-1 per column so the largest-magnitude entry is positive (batched on leading axes)."""
    idx = np.argmax(np.abs(V), axis=-2)[..., None, :]
    signs = np.sign(np.take_along_axis(V, idx, axis=-2))
    signs[signs == 0] = 1
    return signs


def _sign_fix(V):
    return V * _column_signs(V)


def trca_eig(m: TrcaMatrices, n_vec: int = 3):
    """Top ``n_vec`` solutions of ``S w = lambda Q w`` with ``w' Q w = 1``."""
    S, Q = m.S, m.Q
    nc = S.shape[0]
    if n_vec > nc:
        raise StrcaError(f"n_vec={n_vec} exceeds channel count {nc}")
    eps = 1e-10 * np.trace(Q) / nc
    if not eps > 0:
        raise StrcaError("Q is singular (zero trace)")
    lam, V = linalg.eigh(S, Q + eps * np.eye(nc))
    order = np.argsort(lam)[::-1][:n_vec]
    lam, V = lam[order], V[:, order]
    qn = np.sqrt(np.maximum(np.einsum("ci,cd,di->i", V, Q, V), 0.0))
    qn[qn == 0] = 1.0
    return lam, _sign_fix(V / qn)


def trca_filter(movement, rest, n_vec: int = 3) -> StrcaModel:
    """Train the two-class TRCA filter ``W = [W_move | W_rest]`` and templates."""
    xm, xr = _as_trials(movement), _as_trials(rest)
    if xm.shape[1:] != xr.shape[1:]:
        raise StrcaError(f"class shapes differ: {xm.shape[1:]} vs {xr.shape[1:]}")
    if xm.shape[1] < 2:
        raise StrcaError("spatial filtering needs at least 2 channels")
    lam1, W1 = trca_eig(trca_matrices(xm), n_vec)
    lam2, W2 = trca_eig(trca_matrices(xr), n_vec)
    W = np.hstack([W1, W2])
    if not np.all(np.isfinite(W)):
        raise StrcaError("non-finite spatial filter")
    return StrcaModel(W, (xm.mean(axis=0), xr.mean(axis=0)), np.vstack([lam1, lam2]))


# -- correlation helpers -----------------------------------------------------

def _corr_rows(a, b):
    """Pearson correlation between matching flattened rows; 0 when degenerate."""
    a = a.reshape(a.shape[0], -1)
    b = b.reshape(b.shape[0], -1)
    a = a - a.mean(axis=1, keepdims=True)
    b = b - b.mean(axis=1, keepdims=True)
    num = np.einsum("ij,ij->i", a, b)
    den = np.sqrt(np.einsum("ij,ij->i", a, a) * np.einsum("ij,ij->i", b, b))
    out = np.zeros_like(num)
    ok = den > 0
    out[ok] = num[ok] / den[ok]
    return np.clip(out, -1.0, 1.0)


def corr(a, b) -> float:
    return float(_corr_rows(np.asarray(a, float)[None], np.asarray(b, float)[None])[0])


def _whiten(Y):
    """SVD whitening of column-centred ``Y``: (basis, inverse map, rank)."""
    Yc = Y - Y.mean(axis=0)
    U, s, Vt = np.linalg.svd(Yc, full_matrices=False)
    r = int(np.sum(s > SV_CUTOFF * s[0])) if s.size and s[0] > 0 else 0
    return U[:, :r], Vt[:r].T / s[:r], r


def cca(X, Y):
    """Canonical correlation analysis of the columns of ``X`` and ``Y``.

    Returns ``(A, B, r)`` with projections ``X @ A`` and ``Y @ B`` and
    canonical correlations ``r`` in descending order.
    """
    Ux, Mx, rx = _whiten(np.asarray(X, float))
    Uy, My, ry = _whiten(np.asarray(Y, float))
    if rx == 0 or ry == 0:
        return np.zeros((X.shape[1], 0)), np.zeros((Y.shape[1], 0)), np.zeros(0)
    P, d, Rt = np.linalg.svd(Ux.T @ Uy, full_matrices=False)
    A, B = Mx @ P, My @ Rt.T
    # one sign per canonical pair, fixed on the B side
    signs = _column_signs(B)
    return A * signs, B * signs, np.clip(d, 0.0, 1.0)


def _projected_corr(U, V, Uy, My, ry):
    """corr(U B, V B) for a batch of U against one fixed V (whitened as Uy, My).

    U: (n, n_samples, q); V: (n_samples, q).
    """
    n = U.shape[0]
    out = np.zeros(n)
    if ry == 0:
        return out
    Uc = U - U.mean(axis=1, keepdims=True)
    Pu, su, _ = np.linalg.svd(Uc, full_matrices=False)
    smax = su[:, :1]
    ranks = np.where(smax[:, 0] > 0, np.sum(su > SV_CUTOFF * smax, axis=1), 0)
    for ru in np.unique(ranks):
        if ru == 0:
            continue
        idx = np.nonzero(ranks == ru)[0]
        M = np.swapaxes(Pu[idx, :, :ru], 1, 2) @ Uy          # (k, ru, ry)
        _, _, Rt = np.linalg.svd(M, full_matrices=False)     # (k, r, ry)
        B = My @ np.swapaxes(Rt, 1, 2)                       # (k, q, r)
        B = B * _column_signs(B)
        out[idx] = _corr_rows(U[idx] @ B, V @ B)
    return out


def ccp_batch(model: StrcaModel, trials) -> np.ndarray:
    """CCP features for a batch of trials, shape ``(n_trials, 6)``.

    Column order: rho11, rho12, rho21, rho22, rho31, rho32 (first index is
    the coefficient kind, second the class template).
    """
    x = _as_trials(trials)
    if x.shape[1:] != (model.n_channels, model.n_samples):
        raise StrcaError(f"trial shape {x.shape[1:]} does not match model "
                         f"{(model.n_channels, model.n_samples)}")
    W = model.W
    T = model.templates
    TW = [t.T @ W for t in T]                                 # (n_samples, 6)
    XW = np.einsum("ncs,cf->nsf", x, W)                       # (n, n_samples, 6)
    feats = np.empty((x.shape[0], 6))
    for k in range(2):
        other = 1 - k
        feats[:, k] = _corr_rows(XW, np.broadcast_to(TW[k], XW.shape))
        Uy, My, ry = _whiten(TW[k])
        feats[:, 2 + k] = _projected_corr(XW, TW[k], Uy, My, ry)
        Vd = TW[k] - TW[other]
        Uy, My, ry = _whiten(Vd)
        feats[:, 4 + k] = _projected_corr(XW - TW[other], Vd, Uy, My, ry)
    return feats


def ccp_extract(model: StrcaModel, x) -> np.ndarray:
    """Six CCP features of one ``(n_channels, n_samples)`` trial."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise StrcaError("single trial must be (n_channels, n_samples)")
    return ccp_batch(model, x[None])[0]


def ccp_reference(model: StrcaModel, x) -> np.ndarray:
    """Unbatched CCP computation through :func:`cca`; slow, used as a cross-check."""
    W = model.W
    out = np.empty(6)
    for k in range(2):
        Tk, To = model.templates[k], model.templates[1 - k]
        out[k] = corr(x.T @ W, Tk.T @ W)
        for row, (xs, xk) in ((2, (x, Tk)), (4, (x - To, Tk - To))):
            _, B, _ = cca(xs.T @ W, xk.T @ W)
            out[row + k] = corr(xs.T @ W @ B, xk.T @ W @ B) if B.shape[1] else 0.0
    return out


def feature_columns(band_index: int = 0):
    return [(band_index, k) for k in COEF_KINDS]


def strca_features(movement: EpochSet, rest: EpochSet, test=None, band_index: int = 0):
    """Train STRCA on the two classes and featurize training (and test) trials.

    Returns ``(train, test)`` FeatureMatrix objects; training rows are the
    movement trials followed by the rest trials, labelled 1 and 0.  ``test``
    may be an EpochSet or trial array; its FeatureMatrix has no labels.
    """
    if movement.n_channels < 2:
        raise DataError("spatial filtering needs at least 2 channels")
    model = trca_filter(movement, rest)
    xtr = np.concatenate([movement.trials(), rest.trials()])
    ytr = np.r_[np.ones(movement.n_trials, int), np.zeros(rest.n_trials, int)]
    cols = feature_columns(band_index)
    train = FeatureMatrix(ccp_batch(model, xtr), cols, ytr)
    test_fm = None
    if test is not None:
        test_fm = FeatureMatrix(ccp_batch(model, _as_trials(test)), cols)
    return train, test_fm
