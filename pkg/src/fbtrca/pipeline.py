"""Cross-validated STRCA, CVT and FBTRCA benchmarks with a leakage audit.

Trials of both classes are pooled as ``[movement..., rest...]`` with labels
1 and 0; every fold, fit and audit entry refers to indices of that pool.
Band-pass filtering and per-trial z-scoring are fixed per-trial transforms
and are applied to all trials up front.  Everything trained (spatial
filters, templates, selector rankings, standardization constants,
classifiers) is fitted on training indices only, and each such fit is
recorded in an :class:`AuditLog`.
"""
from __future__ import annotations

import csv
import io
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .classify import train as train_classifier
from .data import COEF_KINDS, DataError, EpochSet, FeatureMatrix, zscore_normalize
from .fastccp import BandCache
from .featsel import ArrangementPlan, MiTable, rank_features, select_arrangement
from .filterbank import BandSpec, make_bands, make_filterbank, make_shifted_grid

METHODS = ("STRCA1", "STRCA2", "CVT", "FBTRCA-LDA", "FBTRCA-SVM", "FBTRCA-NN")
STRCA1_BAND = BandSpec(0.5, 10.0)
STRCA2_BAND = BandSpec(0.05, 10.0)
CHUNK_DOUBLES = 8_000_000
TIMING_KEYS = ("feature_selection_seconds", "seconds", "selection_seconds")


class PipelineError(ValueError):
    pass


@dataclass(frozen=True)
class CvConfig:
    outer_folds: int = 10
    inner_folds: int = 9
    seed: int = 0
    shuffle: bool = True
    zscore: str = "before"
    jobs: int = 1

    def __post_init__(self):
        if self.outer_folds < 2 or self.inner_folds < 2:
            raise PipelineError("folds must be >= 2")
        if self.zscore not in ("before", "after", "none"):
            raise PipelineError(f"zscore must be before/after/none, got {self.zscore!r}")
        if self.jobs < 1:
            raise PipelineError("jobs must be >= 1")

    def echo(self) -> dict:
        d = asdict(self)
        d.pop("jobs")
        return d


@dataclass
class BenchmarkResult:
    method: str
    per_fold_accuracy: list
    feature_selection_seconds: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def mean(self) -> float:
        return float(np.mean(self.per_fold_accuracy))

    @property
    def sd(self) -> float:
        a = np.asarray(self.per_fold_accuracy)
        return float(a.std(ddof=1)) if a.size > 1 else 0.0

    def to_dict(self) -> dict:
        return {"method": self.method, "per_fold_accuracy": list(self.per_fold_accuracy),
                "mean": self.mean, "sd": self.sd,
                "feature_selection_seconds": self.feature_selection_seconds,
                "meta": self.meta}


# -- folds and audit -----------------------------------------------------------

def stratified_folds(labels, k: int, seed=0, shuffle: bool = True) -> np.ndarray:
    """Fold id per trial; each class is spread round-robin over the folds."""
    labels = np.asarray(labels)
    fold = np.empty(labels.size, dtype=int)
    rng = np.random.default_rng(seed)
    offset = 0
    for c in np.unique(labels):
        idx = np.nonzero(labels == c)[0]
        if idx.size < k:
            raise PipelineError(f"class {c} has {idx.size} trials, fewer than {k} folds")
        if shuffle:
            idx = rng.permutation(idx)
        fold[idx] = (np.arange(idx.size) + offset) % k
        offset += idx.size
    return fold


def _inner_seed(cfg: CvConfig, outer: int):
    return np.random.SeedSequence([cfg.seed, 1, outer])


class AuditLog:
    """Ordered record of which trials each pipeline stage touched.

    ``kind`` is ``"fit"`` for stages that estimate something from the
    trials and ``"apply"`` for fixed or already-fitted transforms.
    """

    def __init__(self):
        self.entries = []

    def record(self, stage: str, kind: str, fold, trials):
        self.entries.append({"seq": len(self.entries), "stage": stage, "kind": kind,
                             "fold": fold, "trials": [int(t) for t in trials]})

    def extend(self, entries):
        for e in entries:
            self.record(e["stage"], e["kind"], e["fold"], e["trials"])

    def violations(self, fold_ids) -> list:
        """Entries that leak outer test trials into training.

        Flags fit entries that read an outer test trial, inner-CV entries
        (``fold`` given as ``(outer, inner)``) that touch one at all, and
        fits recorded after the outer fold's prediction.
        """
        fold_ids = np.asarray(fold_ids)
        bad, predicted = [], set()
        for e in self.entries:
            f = e["fold"]
            if f is None:
                continue
            outer = f[0] if isinstance(f, (list, tuple)) else f
            if e["stage"] == "predict":
                predicted.add(outer)
                continue
            reads_test = bool(np.any(fold_ids[e["trials"]] == outer))
            inner = isinstance(f, (list, tuple))
            if inner and reads_test:
                bad.append(e)
            elif e["kind"] == "fit" and (outer in predicted or reads_test):
                bad.append(e)
        return bad

    def test_reads_before_prediction(self, fold_ids) -> int:
        return len(self.violations(fold_ids))


# -- data preparation ------------------------------------------------------------

def _zscore_trials(x):
    mu = x.mean(axis=-1, keepdims=True)
    sd = x.std(axis=-1, ddof=1, keepdims=True)
    if np.any(sd == 0):
        raise DataError("zero-variance channel after filtering")
    return (x - mu) / sd


def pool(movement: EpochSet, rest: EpochSet, cfg: CvConfig):
    """Pooled trials ``(n, C, Ns)`` and labels (movement 1, rest 0)."""
    if movement.n_channels != rest.n_channels or movement.n_samples != rest.n_samples:
        raise DataError("movement and rest epochs differ in shape")
    if not np.isclose(movement.fs, rest.fs):
        raise DataError("movement and rest epochs differ in sampling rate")
    if cfg.zscore == "before":
        movement, rest = zscore_normalize(movement), zscore_normalize(rest)
    X = np.concatenate([movement.trials(), rest.trials()])
    y = np.r_[np.ones(movement.n_trials, int), np.zeros(rest.n_trials, int)]
    return X, y


def _chunks(n_bands, n, C):
    size = max(1, CHUNK_DOUBLES // (n * n * C * C))
    return [(s, min(s + size, n_bands)) for s in range(0, n_bands, size)]


def _chunk_features(X, fs, bands, fits, zscore_after):
    """CCP features ``(len(fits), len(bands), n, 6)``.

    ``fits`` lists ``(movement_idx, rest_idx)`` training sets, optionally
    with a third entry naming the trials to featurize (default all); rows
    of other trials are NaN.
    """
    fb = make_filterbank(bands, fs)
    xb = np.stack([fb.filter_array(X, b) for b in range(fb.m)])
    if zscore_after:
        xb = _zscore_trials(xb)
    cache = BandCache(xb)
    out = np.full((len(fits), len(bands), X.shape[0], 6), np.nan)
    for i, fit in enumerate(fits):
        idx = fit[2] if len(fit) > 2 else np.arange(X.shape[0])
        out[i][:, idx] = cache.features(cache.fit(fit[0], fit[1]), idx)
    return out


def _chunk_job(args):
    return _chunk_features(*args)


def band_features(X, fs, bands, fits, cfg: CvConfig, audit: AuditLog | None = None,
                  fit_folds=None, stage="strca-fit"):
    """Features for every (fit, band, trial), computed in band chunks.

    Chunks are fixed by the data size, not by ``cfg.jobs``, so results do
    not depend on the worker count.
    """
    bands = list(bands)
    n, C = X.shape[0], X.shape[1]
    spans = _chunks(len(bands), n, C)
    args = [(X, fs, bands[a:b], fits, cfg.zscore == "after") for a, b in spans]
    if cfg.jobs > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as ex:
            parts = list(ex.map(_chunk_job, args))
    else:
        parts = [_chunk_job(a) for a in args]
    if audit is not None:
        for i, fit in enumerate(fits):
            f = None if fit_folds is None else fit_folds[i]
            audit.record(stage, "fit", f, np.r_[fit[0], fit[1]])
            audit.record("strca-transform", "apply", f,
                         fit[2] if len(fit) > 2 else np.arange(n))
    return np.concatenate(parts, axis=1)


def _train_sets(y, fold_ids, k):
    fits = []
    for f in range(k):
        tr = fold_ids != f
        fits.append((np.nonzero(tr & (y == 1))[0], np.nonzero(tr & (y == 0))[0]))
    return fits


def _classify(kind, Ftr, ytr, Fte, seed, audit, fold):
    if audit is not None:
        if kind.upper() in ("SVM", "NN"):
            audit.record("standardize", "fit", fold, Ftr[1])
        audit.record("classifier-fit", "fit", fold, Ftr[1])
        audit.record("predict", "apply", fold, Fte[1])
    clf = train_classifier(kind, Ftr[0], ytr, seed=seed)
    return clf.predict(Fte[0])[0]


def _acc(pred, truth):
    return float(np.mean(np.asarray(pred) == np.asarray(truth)))


# -- benchmarks ---------------------------------------------------------------------

def _setup(movement, rest, cfg, labels=None):
    X, y = pool(movement, rest, cfg)
    if labels is not None:
        y = np.asarray(labels, int)
        if y.shape != (X.shape[0],):
            raise PipelineError("labels must have one entry per pooled trial")
    folds = stratified_folds(y, cfg.outer_folds, cfg.seed, cfg.shuffle)
    return X, y, folds, movement.fs


def run_strca(movement: EpochSet, rest: EpochSet, band: BandSpec, cfg: CvConfig,
              kind: str = "LDA", method: str = "STRCA", audit: AuditLog | None = None,
              labels=None) -> BenchmarkResult:
    """STRCA on one band: per fold fit on training trials, classify CCP features."""
    X, y, folds, fs = _setup(movement, rest, cfg, labels)
    fits = _train_sets(y, folds, cfg.outer_folds)
    F = band_features(X, fs, [band], fits, cfg, audit, list(range(cfg.outer_folds)))
    accs = []
    for f in range(cfg.outer_folds):
        tr, te = np.nonzero(folds != f)[0], np.nonzero(folds == f)[0]
        pred = _classify(kind, (F[f, 0, tr], tr), y[tr], (F[f, 0, te], te),
                         cfg.seed, audit, f)
        accs.append(_acc(pred, y[te]))
    return BenchmarkResult(method, accs, 0.0, {
        "band": band.as_dict(), "classifier": kind, "strca_trainings_per_fold": 1,
        "config": cfg.echo()})


def run_cvt(movement: EpochSet, rest: EpochSet, grid, cfg: CvConfig,
            audit: AuditLog | None = None) -> BenchmarkResult:
    """Best single band by inner CV on each outer training split, then STRCA+LDA there."""
    grid = list(grid)
    X, y, folds, fs = _setup(movement, rest, cfg)
    K, J = cfg.outer_folds, cfg.inner_folds
    fits, inner_meta = [], []
    for f in range(K):
        tr = np.nonzero(folds != f)[0]
        inner = stratified_folds(y[tr], J, _inner_seed(cfg, f), cfg.shuffle)
        for j in range(J):
            itr = tr[inner != j]
            fits.append((itr[y[itr] == 1], itr[y[itr] == 0], tr))
            inner_meta.append((f, j, itr, tr[inner == j]))
    F = band_features(X, fs, grid, fits, cfg, audit, [(f, j) for f, j, _, _ in inner_meta],
                      stage="strca-fit-inner")
    scores = np.zeros((K, len(grid), J))
    for i, (f, j, itr, ival) in enumerate(inner_meta):
        if audit is not None:
            audit.record("classifier-fit-inner", "fit", (f, j), itr)
        for b in range(len(grid)):
            clf = train_classifier("LDA", F[i, b, itr], y[itr])
            scores[f, b, j] = _acc(clf.predict(F[i, b, ival])[0], y[ival])
    mean_scores = scores.mean(axis=2)
    best = [int(np.argmax(mean_scores[f])) for f in range(K)]  # first max: lowest index
    accs = []
    outer_fits = _train_sets(y, folds, K)
    for f in range(K):
        Fb = band_features(X, fs, [grid[best[f]]], [outer_fits[f]], cfg, audit, [f])
        tr, te = np.nonzero(folds != f)[0], np.nonzero(folds == f)[0]
        pred = _classify("LDA", (Fb[0, 0, tr], tr), y[tr], (Fb[0, 0, te], te),
                         cfg.seed, audit, f)
        accs.append(_acc(pred, y[te]))
    return BenchmarkResult("CVT", accs, 0.0, {
        "selected_bands": [grid[b].as_dict() for b in best],
        "selected_band_index": best,
        "inner_scores": mean_scores.tolist(),
        "strca_trainings_per_fold": len(grid) * J + 1,
        "config": cfg.echo()})


def fbtrca_features(movement: EpochSet, rest: EpochSet, grid, cfg: CvConfig,
                    audit: AuditLog | None = None):
    """Per-fold CCP features of every band: ``(folds, n, bands, 6)``, labels, fold ids."""
    X, y, folds, fs = _setup(movement, rest, cfg)
    fits = _train_sets(y, folds, cfg.outer_folds)
    F = band_features(X, fs, list(grid), fits, cfg, audit, list(range(cfg.outer_folds)))
    return np.swapaxes(F, 1, 2), y, folds


def fold_matrix(F_fold, idx, y=None) -> FeatureMatrix:
    """FeatureMatrix of trials ``idx`` with band-major ``(band, kind)`` columns."""
    n_b = F_fold.shape[1]
    cols = [(b, k) for b in range(n_b) for k in COEF_KINDS]
    vals = F_fold[idx].reshape(len(idx), n_b * 6)
    return FeatureMatrix(vals, cols, None if y is None else y[idx])


def run_fbtrca(movement: EpochSet, rest: EpochSet, grid, method: str = "MRMR",
               plan: ArrangementPlan | None = None, kind: str = "SVM",
               cfg: CvConfig | None = None, audit: AuditLog | None = None,
               features=None) -> BenchmarkResult:
    """Filter-bank TRCA: per-band STRCA features, MI selection, classifier.

    ``features`` may carry a precomputed :func:`fbtrca_features` result to
    share extraction between classifiers.  ``plan=None`` uses all features.
    """
    cfg = cfg or CvConfig()
    grid = list(grid)
    F, y, folds = features if features is not None else fbtrca_features(
        movement, rest, grid, cfg, audit)
    accs, secs, n_sel = [], [], []
    for f in range(cfg.outer_folds):
        tr, te = np.nonzero(folds != f)[0], np.nonzero(folds == f)[0]
        ftr = fold_matrix(F[f], tr, y)
        if plan is None:
            cols = np.arange(ftr.values.shape[1])
        else:
            if audit is not None:
                audit.record("select", "fit", f, tr)
            sel = select_arrangement(ftr, y[tr], plan, method)
            cols = sel.columns
            secs.append(sel.seconds)
        fte = fold_matrix(F[f], te)
        n_sel.append(int(cols.size))
        pred = _classify(kind, (ftr.values[:, cols], tr), y[tr],
                         (fte.values[:, cols], te), cfg.seed, audit, f)
        accs.append(_acc(pred, y[te]))
    return BenchmarkResult(f"FBTRCA-{kind.upper()}", accs, float(np.sum(secs)), {
        "selector": method if plan is not None else None,
        "plan": plan.as_dict() if plan is not None else None,
        "classifier": kind.upper(), "n_bands": len(grid),
        "features_per_fold": n_sel, "strca_trainings_per_fold": len(grid),
        "config": cfg.echo()})


def compare_settings(movement: EpochSet, rest: EpochSet, settings=("M1", "M2", "M3"),
                     cfg: CvConfig | None = None, m: int = 10) -> list[dict]:
    """Per-band STRCA+LDA accuracy for each filter-bank setting."""
    cfg = cfg or CvConfig()
    X, y, folds, fs = _setup(movement, rest, cfg)
    fits = _train_sets(y, folds, cfg.outer_folds)
    rows = []
    for s in settings:
        bands = make_bands(s, m)
        F = band_features(X, fs, bands, fits, cfg)
        for b, band in enumerate(bands):
            accs = []
            for f in range(cfg.outer_folds):
                tr, te = np.nonzero(folds != f)[0], np.nonzero(folds == f)[0]
                clf = train_classifier("LDA", F[f, b, tr], y[tr])
                accs.append(_acc(clf.predict(F[f, b, te])[0], y[te]))
            rows.append({"setting": s, "band_index": b, "low_hz": band.low_hz,
                         "high_hz": band.high_hz, "mean": float(np.mean(accs)),
                         "sd": float(np.std(accs, ddof=1)), "per_fold_accuracy": accs})
    return rows


def sweep(movement: EpochSet, rest: EpochSet, grid, selectors, classifiers,
          cfg: CvConfig | None = None, k1_max: int = 5, k2_max: int = 30) -> list[dict]:
    """Accuracy versus K1 (Type1) and K2 (Type2) for each selector and classifier.

    Each selector ranks once per fold up to the largest K; smaller K use
    the ranking prefix, which is what a direct run with that K selects.
    """
    cfg = cfg or CvConfig()
    grid = list(grid)
    F, y, folds = fbtrca_features(movement, rest, grid, cfg)
    rows = []
    for method in selectors:
        prefixes = {"Type1": [], "Type2": []}
        seconds = {"Type1": 0.0, "Type2": 0.0}
        for f in range(cfg.outer_folds):
            tr = np.nonzero(folds != f)[0]
            ftr = fold_matrix(F[f], tr, y)
            t0 = time.perf_counter()
            groups = ftr.kind_groups()
            orders = [[cols[i] for i in rank_features(
                MiTable(ftr.values[:, cols], y[tr]), method, k1_max).order]
                for cols in groups.values()]
            seconds["Type1"] += time.perf_counter() - t0
            prefixes["Type1"].append(orders)
            t0 = time.perf_counter()
            order = rank_features(MiTable(ftr.values, y[tr]), method, k2_max).order
            seconds["Type2"] += time.perf_counter() - t0
            prefixes["Type2"].append(order)
        for kind in classifiers:
            for arr, kmax in (("Type1", k1_max), ("Type2", k2_max)):
                for k in range(1, kmax + 1):
                    accs = []
                    for f in range(cfg.outer_folds):
                        tr, te = np.nonzero(folds != f)[0], np.nonzero(folds == f)[0]
                        p = prefixes[arr][f]
                        cols = sorted(c for o in p for c in o[:k]) if arr == "Type1" \
                            else sorted(p[:k])
                        ftr, fte = fold_matrix(F[f], tr, y), fold_matrix(F[f], te)
                        clf = train_classifier(kind, ftr.values[:, cols], y[tr], seed=cfg.seed)
                        accs.append(_acc(clf.predict(fte.values[:, cols])[0], y[te]))
                    rows.append({"selector": method.upper(), "classifier": kind.upper(),
                                 "arrangement": arr, "K": k, "mean": float(np.mean(accs)),
                                 "sd": float(np.std(accs, ddof=1)),
                                 "selection_seconds": seconds[arr]})
    return rows


def best_k(rows) -> dict:
    """Best K per (selector, classifier, arrangement); ties go to the smaller K."""
    best = {}
    for r in rows:
        key = (r["selector"], r["classifier"], r["arrangement"])
        if key not in best or r["mean"] > best[key]["mean"]:
            best[key] = r
    return {f"{s}/{c}/{a}": {"K": r["K"], "mean": r["mean"]}
            for (s, c, a), r in sorted(best.items())}


# -- reporting ---------------------------------------------------------------------

def results_json(results, config: dict) -> str:
    payload = {"version": __version__, "config": config,
               "results": [r.to_dict() for r in results]}
    return json.dumps(payload, indent=2, sort_keys=True)


def strip_timing(obj):
    """Copy of a results structure without wall-clock timing fields."""
    if isinstance(obj, dict):
        return {k: strip_timing(v) for k, v in obj.items() if k not in TIMING_KEYS}
    if isinstance(obj, list):
        return [strip_timing(v) for v in obj]
    return obj


def results_csv(results) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "mean", "sd", "feature_selection_seconds", "n_folds"])
    for r in results:
        w.writerow([r.method, repr(r.mean), repr(r.sd), repr(r.feature_selection_seconds),
                    len(r.per_fold_accuracy)])
    return buf.getvalue()


def default_grid():
    return make_shifted_grid()
