"""STRCA in the Gram domain, batched over bands, for cross-validation loops.

Every quantity STRCA needs from a set of trials is a sum of pairwise
products ``Xc_i Xc_j'`` of time-centred trials plus channel means: the TRCA
matrices, the class templates, and every covariance entering the CCA and
the flattened Pearson correlations.  :class:`BandCache` computes those
products once per band.  Fitting on any subset of trials and featurizing
any other subset then costs one matrix product plus small (6x6) linear
algebra, vectorized over bands and trials.

Results agree with :mod:`fbtrca.strca` to rounding error.  Whitening uses
Cholesky factors when the pivots are well away from zero and falls back to
an eigen-decomposition with a relative eigenvalue cutoff of 1e-13 (the
closest resolvable analogue of the singular-value cutoff used there).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .strca import StrcaError, _column_signs

EIG_CUTOFF = 1e-13
PIVOT_CUTOFF = 1e-10


@dataclass(frozen=True)
class GramModel:
    W: np.ndarray            # (m, C, 2 * n_vec)
    eigenvalues: np.ndarray  # (m, 2, n_vec)
    classes: tuple           # (movement trial indices, rest trial indices)
    A: np.ndarray            # (m, n, 2, C, C): Xc_i Tc_k' for every cached trial
    TT: np.ndarray           # (m, 2, 2, C, C): Tc_a Tc_b'
    mu_T: np.ndarray         # (m, 2, C) template channel means


class BandCache:
    """Pairwise centred cross-products of the trials of ``m`` bands.

    Parameters
    ----------
    trials : ndarray, shape (m, n_trials, n_channels, n_samples) or
        (n_trials, n_channels, n_samples) for a single band.
    """

    def __init__(self, trials: np.ndarray):
        x = np.asarray(trials, dtype=np.float64)
        if x.ndim == 3:
            x = x[None]
        m, n, C, Ns = x.shape
        self.m, self.n, self.C, self.Ns = m, n, C, Ns
        self.mu = x.mean(axis=3)
        self._P = np.empty((m, n * C * C, n))
        self.diag = np.empty((m, n, C, C))
        for b in range(m):
            xc = (x[b] - self.mu[b, :, :, None]).reshape(n * C, Ns)
            G = (xc @ xc.T).reshape(n, C, n, C)
            # layout (i, c, d, j): class sums become one GEMM over the last axis
            self._P[b] = G.transpose(0, 1, 3, 2).reshape(n * C * C, n)
            self.diag[b] = np.einsum("icid->icd", G)

    def fit(self, move_idx, rest_idx, n_vec: int = 3) -> GramModel:
        idx = (np.asarray(move_idx, int), np.asarray(rest_idx, int))
        if min(len(i) for i in idx) < 2:
            raise StrcaError("TRCA needs at least 2 trials per class")
        if self.C < 2:
            raise StrcaError("spatial filtering needs at least 2 channels")
        m, n, C = self.m, self.n, self.C
        weights = np.zeros((n, 2))
        for k in range(2):
            weights[idx[k], k] = 1.0 / len(idx[k])
        A = (self._P @ weights).reshape(m, n, C, C, 2).transpose(0, 1, 4, 2, 3)
        TT = np.einsum("ik,miacd->mkacd", weights, A)
        Ws, lams = [], []
        for k in range(2):
            nk = len(idx[k])
            Q = TT[:, k, k] * (nk * nk / (self.Ns - 1))
            D = self.diag[:, idx[k]].sum(axis=1) / (self.Ns - 1)
            lam, Wk = generalized_eigh(Q - D, Q, n_vec)
            Ws.append(Wk)
            lams.append(lam)
        W = np.concatenate(Ws, axis=2)
        if not np.all(np.isfinite(W)):
            raise StrcaError("non-finite spatial filter")
        mu_T = np.einsum("ik,mic->mkc", weights, self.mu)
        return GramModel(W, np.stack(lams, axis=1), idx, A, TT, mu_T)

    def features(self, model: GramModel, idx) -> np.ndarray:
        """CCP features, shape ``(m, len(idx), 6)``, of cached trials ``idx``."""
        idx = np.asarray(idx, int)
        m, ni = self.m, len(idx)
        W = model.W
        q = W.shape[2]
        Wt = np.swapaxes(W, 1, 2)[:, None]
        Wb = W[:, None]

        def flat(M):
            return M.reshape(m * ni, q, q)

        def per_trial(M):
            # band-level (m, q, q) -> (m * ni, q, q)
            return flat(np.broadcast_to(M[:, None], (m, ni, q, q)))

        XX = flat(Wt @ self.diag[:, idx] @ Wb)
        A = [flat(Wt @ model.A[:, idx, k] @ Wb) for k in range(2)]
        Wt0 = np.swapaxes(W, 1, 2)
        TTb = [[Wt0 @ model.TT[:, a, b] @ W for b in range(2)] for a in range(2)]
        TT = [[per_trial(TTb[a][b]) for b in range(2)] for a in range(2)]
        mu = np.einsum("mic,mcq->miq", self.mu[:, idx], W).reshape(m * ni, q)
        muT = np.einsum("mkc,mcq->mkq", model.mu_T, W)
        muT = [np.repeat(muT[:, k], ni, axis=0) for k in range(2)]
        eye = np.broadcast_to(np.eye(q), XX.shape)
        Ns = self.Ns

        def template_whitener(Cvv):
            Mv, rv = _whitener(Cvv)
            return np.repeat(Mv, ni, axis=0), np.repeat(rv, ni)

        out = np.empty((m * ni, 6))
        wxx = _whitener(XX)
        for k in range(2):
            o = 1 - k
            out[:, k] = _gram_corr(XX, TT[k][k], A[k], mu, muT[k], eye, Ns)
            B = _cca_b(A[k], wxx, template_whitener(TTb[k][k]))
            out[:, 2 + k] = _gram_corr(XX, TT[k][k], A[k], mu, muT[k], B, Ns)
            Cuu = XX - A[o] - np.swapaxes(A[o], 1, 2) + TT[o][o]
            Cvvb = TTb[k][k] - TTb[k][o] - TTb[o][k] + TTb[o][o]
            Cuv = A[k] - A[o] - TT[o][k] + TT[o][o]
            B = _cca_b(Cuv, _whitener(Cuu), template_whitener(Cvvb))
            out[:, 4 + k] = _gram_corr(Cuu, per_trial(Cvvb), Cuv, mu - muT[o],
                                       muT[k] - muT[o], B, Ns)
        return out.reshape(m, ni, 6)


def generalized_eigh(S, Q, n_vec):
    """Batched top-``n_vec`` solutions of ``S w = lambda Q w``, ``w'Qw = 1``.

    ``Q`` is regularized by ``1e-10 * trace(Q) / C`` before the Cholesky
    reduction; eigenvectors are then rescaled to unit norm under the
    unregularized ``Q`` and sign-fixed (largest-magnitude entry positive).
    """
    S = (S + np.swapaxes(S, -1, -2)) / 2
    Q = (Q + np.swapaxes(Q, -1, -2)) / 2
    C = S.shape[-1]
    if n_vec > C:
        raise StrcaError(f"n_vec={n_vec} exceeds channel count {C}")
    eps = 1e-10 * np.trace(Q, axis1=-2, axis2=-1) / C
    if not np.all(eps > 0):
        raise StrcaError("Q is singular (zero trace)")
    L = np.linalg.cholesky(Q + eps[..., None, None] * np.eye(C))
    Li = np.linalg.inv(L)
    M = Li @ S @ np.swapaxes(Li, -1, -2)
    lam, Y = np.linalg.eigh((M + np.swapaxes(M, -1, -2)) / 2)
    lam = lam[..., ::-1][..., :n_vec]
    V = np.swapaxes(Li, -1, -2) @ Y[..., ::-1][..., :n_vec]
    qn = np.sqrt(np.maximum(np.einsum("...ci,...cd,...di->...i", V, Q, V), 0.0))
    V = V / np.where(qn > 0, qn, 1.0)[..., None, :]
    return lam, V * _column_signs(V)


def _whitener(C):
    """Batched whitening maps ``M`` with ``M' C M = I`` on the retained rank.

    Returns ``(M, rank)``; dropped directions are zero columns at the end.
    """
    n, q, _ = C.shape
    M = np.zeros_like(C)
    rank = np.zeros(n, dtype=int)
    scale = np.einsum("nii->n", C) / q
    good = scale > 0
    try:
        L = np.linalg.cholesky(np.where(good[:, None, None], C, np.eye(q)))
        piv = np.einsum("nii->ni", L) ** 2
        fast = good & np.all(piv > PIVOT_CUTOFF * np.where(good, scale, 1.0)[:, None], axis=1)
    except np.linalg.LinAlgError:
        fast = np.zeros(n, dtype=bool)
    if fast.any():
        M[fast] = np.swapaxes(np.linalg.inv(L[fast]), 1, 2)
        rank[fast] = q
    slow = np.nonzero(good & ~fast)[0]
    if slow.size:
        e, V = np.linalg.eigh(C[slow])
        e, V = e[:, ::-1], V[:, :, ::-1]
        keep = (e > EIG_CUTOFF * e[:, :1]) & (e[:, :1] > 0)
        s = np.where(keep, 1.0 / np.sqrt(np.where(keep, e, 1.0)), 0.0)
        M[slow] = V * s[:, None, :]
        rank[slow] = keep.sum(axis=1)
    return M, rank


def _cca_b(Cuv, wu, wv):
    """Right-side CCA projections B (n, q, q); unavailable components are zero.

    ``wu``, ``wv`` are the :func:`_whitener` outputs of the two sides.
    """
    Mu, ru = wu
    Mv, rv = wv
    n, q, _ = Mv.shape
    K = np.swapaxes(Mu, 1, 2) @ Cuv @ Mv
    B = np.zeros((n, q, q))
    key = ru * (q + 1) + rv
    for kv in np.unique(key):
        a, b = divmod(int(kv), q + 1)
        sel = np.nonzero(key == kv)[0]
        rk = min(a, b)
        if rk == 0:
            continue
        Kk = K[sel][:, :a, :b]
        # right singular vectors of K, largest first
        _, R = np.linalg.eigh(np.swapaxes(Kk, 1, 2) @ Kk)
        R = R[:, :, ::-1][:, :, :rk]
        Bk = Mv[sel][:, :, :b] @ R
        B[sel, :, :rk] = Bk * _column_signs(Bk)
    return B


def _gram_corr(Cuu, Cvv, Cuv, mu_u, mu_v, B, Ns):
    """Pearson correlation of flattened ``U B`` and ``V B`` from Gram quantities.

    ``Cuu, Cvv, Cuv`` are centred cross-products of ``U`` and ``V``
    (n_samples rows), ``mu_u, mu_v`` their column means.  Zero columns of
    ``B`` are treated as absent components.
    """
    n = Cuu.shape[0]
    r = np.any(B != 0, axis=1).sum(axis=1)
    beta = np.einsum("nq,nqr->nr", mu_u, B)
    gamma = np.einsum("nq,nqr->nr", mu_v, B)
    bt = np.swapaxes(B, 1, 2)
    saa = np.einsum("nrr->n", bt @ Cuu @ B)
    scc = np.einsum("nrr->n", bt @ Cvv @ B)
    sac = np.einsum("nrr->n", bt @ Cuv @ B)
    rr = np.maximum(r, 1)
    sb, sg = beta.sum(1), gamma.sum(1)
    bb = np.einsum("nr,nr->n", beta, beta)
    gg = np.einsum("nr,nr->n", gamma, gamma)
    num = sac + Ns * (np.einsum("nr,nr->n", beta, gamma) - sb * sg / rr)
    va = saa + Ns * (bb - sb * sb / rr)
    vc = scc + Ns * (gg - sg * sg / rr)
    ok = (r > 0) & (va > 1e-12 * (saa + Ns * bb)) & (vc > 1e-12 * (scc + Ns * gg))
    out = np.zeros(n)
    out[ok] = num[ok] / np.sqrt(va[ok] * vc[ok])
    return np.clip(out, -1.0, 1.0)
