"""Mutual-information feature selection and the two CCP feature arrangements.

MI is a plug-in estimate on equal-frequency bins, in nats.  Greedy
selectors share one loop; each method only supplies its step criterion.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .data import FeatureMatrix, column_name

METHODS = ("MIQ", "MAXREL", "MINRED", "MRMR", "QPFS", "CIFE", "CMIM", "MRMTR")

# tuned per-method K values from the original study (Type 1 / Type 2)
DEFAULT_K1 = {"MIQ": 4, "MRMR": 3, "MAXREL": 4, "MINRED": 3, "QPFS": 4,
            "CIFE": 3, "CMIM": 4, "MRMTR": 4}
DEFAULT_K2 = {"MIQ": 17, "MRMR": 13, "MAXREL": 30, "MINRED": 27, "QPFS": 18,
            "CIFE": 2, "CMIM": 29, "MRMTR": 28}


class SelectionError(ValueError):
    pass


class QpfsConvergenceError(SelectionError):
    pass


def default_bins(n: int) -> int:
    return max(2, int(np.floor(np.sqrt(n / 5))))


def discretize(x, bins: int) -> np.ndarray:
    """Integer codes: categories if ``x`` has at most ``bins`` distinct values,
    otherwise equal-frequency bins over ordinal ranks (ties broken by position).
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    uniq, inv = np.unique(x, return_inverse=True)
    if uniq.size <= bins:
        return inv.astype(np.int64)
    ranks = np.empty(x.size, dtype=np.int64)
    ranks[np.argsort(x, kind="stable")] = np.arange(x.size)
    return ranks * bins // x.size


def _discretize_columns(X, bins):
    return np.column_stack([discretize(c, bins) for c in np.asarray(X).T])


def _mi_from_codes(a, b, na=None, nb=None):
    na = na or int(a.max()) + 1
    nb = nb or int(b.max()) + 1
    joint = np.zeros((na, nb))
    np.add.at(joint, (a, b), 1.0)
    return _mi_from_counts(joint)


def _mi_from_counts(joint):
    """Plug-in MI of (..., na, nb) count tables."""
    n = joint.sum(axis=(-2, -1), keepdims=True)
    p = joint / np.where(n > 0, n, 1)
    pa = p.sum(axis=-1, keepdims=True)
    pb = p.sum(axis=-2, keepdims=True)
    denom = pa * pb
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(p > 0, p, 1) / np.where(denom > 0, denom, 1)
        terms = np.where(p > 0, p * np.log(ratio), 0.0)
    return np.maximum(terms.sum(axis=(-2, -1)), 0.0)


def mutual_information(x, y, bins: int | None = None) -> float:
    """Plug-in mutual information (nats) between two variables."""
    x = np.asarray(x).ravel()
    y = np.asarray(y).ravel()
    if x.shape != y.shape:
        raise SelectionError("length mismatch")
    if x.size < 4:
        raise SelectionError("need at least 4 observations")
    bins = default_bins(x.size) if bins is None else bins
    if bins < 2:
        raise SelectionError("bins must be >= 2")
    return float(_mi_from_codes(discretize(x, bins), discretize(y, bins)))


class MiTable:
    """Relevance, redundancy and label-conditional redundancy of a feature set.

    Redundancy rows are computed lazily so greedy selection over hundreds of
    features only pays for the rows it visits; ``redundancy`` and
    ``conditional`` materialize the full matrices.
    """

    def __init__(self, X, y, bins: int | None = None):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y).ravel()
        if X.ndim != 2 or X.shape[0] != y.size:
            raise SelectionError("X must be (n_trials, n_features) matching y")
        if X.shape[0] < 4:
            raise SelectionError("need at least 4 trials")
        self.n, self.d = X.shape
        self.bins = default_bins(self.n) if bins is None else bins
        if self.bins < 2:
            raise SelectionError("bins must be >= 2")
        self.codes = _discretize_columns(X, self.bins)
        ycodes = discretize(y, self.bins)
        self._onehot = self._encode(self.codes, self.bins)
        self.relevance = self._rows_vs(ycodes)
        # class-conditional codes, re-binned within each class
        self._classes = []
        for c in np.unique(ycodes):
            mask = ycodes == c
            nb = default_bins(int(mask.sum())) if bins is None else self.bins
            codes_c = _discretize_columns(X[mask], nb)
            self._classes.append((mask.mean(), nb, self._encode(codes_c, nb)))
        self._red = {}
        self._cond = {}

    @staticmethod
    def _encode(codes, bins):
        n, d = codes.shape
        oh = np.zeros((n, d * bins))
        oh[np.arange(n)[:, None], np.arange(d) * bins + codes] = 1.0
        return oh

    def _rows_vs(self, target):
        nb = int(target.max()) + 1
        T = np.zeros((target.size, nb))
        T[np.arange(target.size), target] = 1.0
        joint = (T.T @ self._onehot).reshape(nb, self.d, self.bins).transpose(1, 2, 0)
        return _mi_from_counts(joint)

    @staticmethod
    def _row(onehot, i, bins, d):
        counts = onehot[:, i * bins:(i + 1) * bins].T @ onehot      # (bins, d*bins)
        joint = counts.reshape(bins, d, bins).transpose(1, 0, 2)
        return _mi_from_counts(joint)

    def redundancy_row(self, i: int) -> np.ndarray:
        if i not in self._red:
            self._red[i] = self._row(self._onehot, i, self.bins, self.d)
        return self._red[i]

    def conditional_row(self, i: int) -> np.ndarray:
        """I(f_i; f_j | y) for all j, prior-weighted over classes."""
        if i not in self._cond:
            row = np.zeros(self.d)
            for prior, nb, oh in self._classes:
                row += prior * self._row(oh, i, nb, self.d)
            self._cond[i] = row
        return self._cond[i]

    @property
    def redundancy(self) -> np.ndarray:
        R = np.vstack([self.redundancy_row(i) for i in range(self.d)])
        return (R + R.T) / 2

    @property
    def conditional(self) -> np.ndarray:
        R = np.vstack([self.conditional_row(i) for i in range(self.d)])
        return (R + R.T) / 2


@dataclass
class SelectorRanking:
    method: str
    order: list
    scores: list
    seconds: float = 0.0

    def __post_init__(self):
        if len(set(self.order)) != len(self.order):
            raise SelectionError("ranking contains duplicates")


def _step_scores(method, mi: MiTable, selected, cand):
    rel = mi.relevance[cand]
    # every method opens with the most relevant feature
    if not selected or method == "MAXREL":
        return rel
    red = np.vstack([mi.redundancy_row(j)[cand] for j in selected])     # (|S|, c)
    if method == "MINRED":
        return -red.mean(axis=0)
    if method == "MRMR":
        return rel - red.mean(axis=0)
    if method == "MIQ":
        return rel / np.maximum(red.mean(axis=0), 1e-12)
    if method == "MRMTR":
        return rel - (2.0 / len(selected)) * red.sum(axis=0)
    cond = np.vstack([mi.conditional_row(j)[cand] for j in selected])
    if method == "CIFE":
        return rel - (red - cond).sum(axis=0)
    if method == "CMIM":
        return (rel[None, :] - (red - cond)).min(axis=0)
    raise SelectionError(f"unknown method {method!r}")


def _project_simplex(v):
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    return np.maximum(v - css[rho] / (rho + 1), 0.0)


def qpfs_weights(H, q, max_iter: int = 1000, tol: float = 1e-10):
    """Projected gradient for min 1/2 a'Ha - theta q'a on the probability simplex.

    theta = mean(q) / (mean(q) + mean(H)); step 1/L with L the largest
    eigenvalue magnitude of H.
    """
    H = (np.asarray(H, float) + np.asarray(H, float).T) / 2
    q = np.asarray(q, float)
    d = q.size
    theta = q.mean() / (q.mean() + H.mean()) if (q.mean() + H.mean()) > 0 else 0.5
    L = float(np.abs(np.linalg.eigvalsh(H)).max()) if d > 1 else float(abs(H[0, 0]))
    L = L if L > 0 else 1.0
    a = np.full(d, 1.0 / d)
    for it in range(max_iter):
        a_new = _project_simplex(a - (H @ a - theta * q) / L)
        if np.abs(a_new - a).max() < tol:
            return a_new, it + 1
        a = a_new
    resid = np.abs(_project_simplex(a - (H @ a - theta * q) / L) - a).max()
    if resid > 1e-6:
        raise QpfsConvergenceError(f"QPFS did not converge (residual {resid:.2e})")
    return a, max_iter


def rank_features(mi: MiTable, method: str, k: int) -> SelectorRanking:
    """Greedy forward selection of ``k`` features; ties go to the lowest index."""
    method = method.upper()
    if method not in METHODS:
        raise SelectionError(f"unknown method {method!r}")
    if mi.d == 0:
        raise SelectionError("empty candidate pool")
    if not 1 <= k <= mi.d:
        raise SelectionError(f"k={k} outside 1..{mi.d}")
    if method == "QPFS":
        alpha, _ = qpfs_weights(mi.redundancy, mi.relevance)
        order = np.lexsort((np.arange(mi.d), -alpha))[:k]
        return SelectorRanking(method, [int(i) for i in order], [float(alpha[i]) for i in order])
    selected, scores = [], []
    remaining = list(range(mi.d))
    for _ in range(k):
        cand = np.asarray(remaining)
        s = _step_scores(method, mi, selected, cand)
        best = int(np.argmax(s))
        selected.append(int(cand[best]))
        scores.append(float(s[best]))
        remaining.pop(best)
    return SelectorRanking(method, selected, scores)


@dataclass(frozen=True)
class ArrangementPlan:
    type: str = "Type2"
    K1: int | None = None
    K2: int | None = 13

    def __post_init__(self):
        t = {"type1": "Type1", "type2": "Type2"}.get(str(self.type).lower())
        if t is None:
            raise SelectionError(f"unknown arrangement {self.type!r}")
        object.__setattr__(self, "type", t)
        if t == "Type1" and (self.K1 is None or self.K1 < 1):
            raise SelectionError("Type1 needs K1 >= 1")
        if t == "Type2" and (self.K2 is None or self.K2 < 1):
            raise SelectionError("Type2 needs K2 >= 1")

    def as_dict(self):
        return {"type": self.type, "K1": self.K1, "K2": self.K2}


@dataclass
class Selection:
    columns: np.ndarray
    rankings: list = field(default_factory=list)
    seconds: float = 0.0


def select_arrangement(f: FeatureMatrix, labels, plan: ArrangementPlan,
                       method: str = "MRMR", bins: int | None = None) -> Selection:
    """Pick feature columns with ``method`` under a Type1 or Type2 arrangement.

    Type1 ranks each coefficient kind's band columns separately and keeps
    ``K1`` of each; Type2 ranks all columns at once and keeps ``K2``.
    """
    import time

    labels = np.asarray(labels).ravel()
    t0 = time.perf_counter()
    rankings = []
    if plan.type == "Type1":
        groups = f.kind_groups()
        m = min(len(g) for g in groups.values())
        if plan.K1 > m:
            raise SelectionError(f"K1={plan.K1} exceeds band count {m}")
        chosen = []
        for kind, cols in groups.items():
            mi = MiTable(f.values[:, cols], labels, bins)
            r = rank_features(mi, method, plan.K1)
            rankings.append(r)
            chosen.extend(cols[i] for i in r.order)
    else:
        d = f.values.shape[1]
        if plan.K2 > d:
            raise SelectionError(f"K2={plan.K2} exceeds feature count {d}")
        mi = MiTable(f.values, labels, bins)
        r = rank_features(mi, method, plan.K2)
        rankings.append(r)
        chosen = list(r.order)
    sel = Selection(np.array(sorted(chosen), dtype=int), rankings)
    sel.seconds = time.perf_counter() - t0
    return sel


def ranking_report(f: FeatureMatrix, sel: Selection, plan: ArrangementPlan, method: str) -> str:
    """JSON report: method, plan, selected columns with provenance, per-step scores."""
    return json.dumps({
        "method": method,
        "plan": plan.as_dict(),
        "selected": [{"index": int(i), "band": f.columns[i][0], "kind": f.columns[i][1],
                      "name": column_name(f.columns[i])} for i in sel.columns],
        "steps": [{"order": r.order, "scores": r.scores} for r in sel.rankings],
    }, indent=2)
