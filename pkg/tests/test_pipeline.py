import json

import numpy as np
import pytest

from fbtrca.data import EpochSet
from fbtrca.featsel import ArrangementPlan
from fbtrca.filterbank import BandSpec
from fbtrca.pipeline import (AuditLog, BenchmarkResult, CvConfig, PipelineError, best_k,
                             compare_settings, fbtrca_features, results_csv, results_json,
                             run_cvt, run_fbtrca, run_strca, stratified_folds, strip_timing,
                             sweep)
from fbtrca.synth import SynthSpec, generate

GRID = [BandSpec(0.5, 3.0), BandSpec(0.5, 6.0), BandSpec(1.0, 3.0), BandSpec(2.0, 8.0)]
CFG = CvConfig(outer_folds=5, inner_folds=3, seed=1)


@pytest.fixture(scope="module")
def data():
    m, r, _ = generate(SynthSpec(n_channels=4, n_samples=128, n_trials=20, fs=64.0,
                                 template_band=(0.5, 4.0), snr=0.8, seed=2))
    return m, r


def test_stratified_folds_balanced():
    y = np.r_[np.ones(23, int), np.zeros(17, int)]
    f = stratified_folds(y, 5, seed=3)
    for k in range(5):
        assert abs((y[f == k] == 1).sum() - 23 / 5) < 1
        assert abs((y[f == k] == 0).sum() - 17 / 5) < 1
    assert np.array_equal(f, stratified_folds(y, 5, seed=3))


def test_stratified_folds_too_few():
    with pytest.raises(PipelineError):
        stratified_folds(np.r_[np.ones(3), np.zeros(10)], 5)


def test_cv_config_validation():
    with pytest.raises(PipelineError):
        CvConfig(outer_folds=1)
    with pytest.raises(PipelineError):
        CvConfig(zscore="sometimes")
    assert "jobs" not in CvConfig(jobs=4).echo()


def test_mean_sd_recomputable():
    r = BenchmarkResult("X", [0.5, 0.75, 1.0])
    d = r.to_dict()
    assert d["mean"] == pytest.approx(0.75)
    assert d["sd"] == pytest.approx(np.std([0.5, 0.75, 1.0], ddof=1))


def test_strca_deterministic(data):
    a = run_strca(*data, GRID[0], CFG)
    b = run_strca(*data, GRID[0], CFG)
    assert a.per_fold_accuracy == b.per_fold_accuracy
    assert len(a.per_fold_accuracy) == 5
    assert a.mean > 0.6


@pytest.mark.parametrize("zscore", ["before", "after", "none"])
def test_zscore_modes_run(data, zscore):
    r = run_strca(*data, GRID[0], CvConfig(outer_folds=5, zscore=zscore))
    assert 0 <= r.mean <= 1


def test_audit_clean_for_all_methods(data):
    logs = [AuditLog() for _ in range(3)]
    run_strca(*data, GRID[0], CFG, audit=logs[0])
    run_cvt(*data, GRID, CFG, audit=logs[1])
    run_fbtrca(*data, GRID, "MRMR", ArrangementPlan("Type2", K2=5), "SVM", CFG, logs[2])
    folds = stratified_folds(np.r_[np.ones(20), np.zeros(20)], 5, seed=1)
    for audit in logs:
        assert len(audit.entries) > 0
        assert audit.violations(folds) == []


def test_audit_detects_planted_leak():
    folds = np.array([0, 0, 1, 1])
    audit = AuditLog()
    audit.record("strca-fit", "fit", 0, [0, 2])
    audit.record("strca-fit-inner", "fit", (1, 0), [0, 2])
    audit.record("predict", "apply", 1, [2, 3])
    audit.record("classifier-fit", "fit", 1, [0, 1])
    assert len(audit.violations(folds)) == 3


def test_features_ignore_perturbed_test_trials(data):
    m, r = data
    folds = stratified_folds(np.r_[np.ones(20), np.zeros(20)], 5, seed=1)
    test_move = np.nonzero(folds[:20] == 0)[0]
    noisy = m.data.copy()
    noisy[:, :, test_move] = np.random.default_rng(0).standard_normal(
        (4, 128, test_move.size)) * 50
    m2 = EpochSet(noisy, m.fs, m.channel_names, m.label, m.window)
    F1 = fbtrca_features(m, r, GRID, CFG)[0]
    F2 = fbtrca_features(m2, r, GRID, CFG)[0]
    train = np.nonzero(folds != 0)[0]
    assert np.array_equal(F1[0][train], F2[0][train])
    assert not np.array_equal(F1[0][folds == 0], F2[0][folds == 0])


def test_cvt_inner_scores_ignore_test_trials(data):
    m, r = data
    folds = stratified_folds(np.r_[np.ones(20), np.zeros(20)], 5, seed=1)
    noisy = m.data.copy()
    noisy[:, :, folds[:20] == 0] *= -3
    m2 = EpochSet(noisy, m.fs, m.channel_names, m.label, m.window)
    a, b = run_cvt(m, r, GRID, CFG), run_cvt(m2, r, GRID, CFG)
    assert a.meta["inner_scores"][0] == b.meta["inner_scores"][0]
    assert a.meta["selected_band_index"][0] == b.meta["selected_band_index"][0]


def test_cvt_meta(data):
    res = run_cvt(*data, GRID, CFG)
    assert res.meta["strca_trainings_per_fold"] == len(GRID) * 3 + 1
    scores = np.array(res.meta["inner_scores"])
    assert scores.shape == (5, len(GRID))
    for f, b in enumerate(res.meta["selected_band_index"]):
        assert b == int(np.flatnonzero(scores[f] == scores[f].max())[0])


def test_cvt_tie_breaks_to_lowest_index(data):
    res = run_cvt(*data, [GRID[0], GRID[0], GRID[0]], CFG)
    assert set(res.meta["selected_band_index"]) == {0}


def test_fbtrca_type1_all_equals_no_selection(data):
    feats = fbtrca_features(*data, GRID, CFG)
    a = run_fbtrca(*data, GRID, "MRMR", ArrangementPlan("Type1", K1=len(GRID)), "LDA", CFG,
                   features=feats)
    b = run_fbtrca(*data, GRID, "MRMR", None, "LDA", CFG, features=feats)
    assert a.per_fold_accuracy == b.per_fold_accuracy


def test_fbtrca_selects_k2(data):
    res = run_fbtrca(*data, GRID, "MRMR", ArrangementPlan("Type2", K2=13), "SVM", CFG)
    assert res.meta["features_per_fold"] == [13] * 5
    assert res.method == "FBTRCA-SVM"
    assert res.feature_selection_seconds >= 0


def test_compare_settings_rows(data):
    rows = compare_settings(*data, ("M1", "M3"), CFG)
    assert [r["setting"] for r in rows] == ["M1"] * 10 + ["M3"] * 10
    for r in rows:
        assert r["mean"] == pytest.approx(np.mean(r["per_fold_accuracy"]))


def test_sweep_prefixes_match_direct_runs(data):
    rows = sweep(*data, GRID, ["MRMR"], ["LDA"], CFG, k1_max=2, k2_max=4)
    assert len(rows) == 6
    direct = run_fbtrca(*data, GRID, "MRMR", ArrangementPlan("Type2", K2=3), "LDA", CFG)
    row = next(r for r in rows if r["arrangement"] == "Type2" and r["K"] == 3)
    assert row["mean"] == pytest.approx(direct.mean)
    direct1 = run_fbtrca(*data, GRID, "MRMR", ArrangementPlan("Type1", K1=2), "LDA", CFG)
    row1 = next(r for r in rows if r["arrangement"] == "Type1" and r["K"] == 2)
    assert row1["mean"] == pytest.approx(direct1.mean)
    best = best_k(rows)
    assert set(best) == {"MRMR/LDA/Type1", "MRMR/LDA/Type2"}


def test_reporting_roundtrip(data):
    res = [run_strca(*data, GRID[0], CFG)]
    payload = json.loads(results_json(res, {"seed": 1}))
    assert payload["results"][0]["per_fold_accuracy"] == res[0].per_fold_accuracy
    assert "feature_selection_seconds" not in strip_timing(payload)["results"][0]
    assert results_csv(res).splitlines()[0].startswith("method,mean,sd")


def test_jobs_do_not_change_results(data):
    a = run_fbtrca(*data, GRID, "MRMR", ArrangementPlan("Type2", K2=5), "SVM", CFG)
    b = run_fbtrca(*data, GRID, "MRMR", ArrangementPlan("Type2", K2=5), "SVM",
                   CvConfig(outer_folds=5, inner_folds=3, seed=1, jobs=2))
    assert a.per_fold_accuracy == b.per_fold_accuracy
