import csv
import json

import numpy as np
import pytest

from fbtrca import cli
from fbtrca.filterbank import BandSpec, bands_to_json
from fbtrca.pipeline import strip_timing
from fbtrca.synth import generate_trajectory

SMALL = ["--channels", "4", "--samples", "128", "--trials", "15", "--fs", "64",
         "--band", "0.5", "4", "--snr", "0.8"]
CV = ["--folds", "5", "--inner-folds", "3"]


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert cli.main(["synth", "--out", str(root / "d"), *SMALL]) == 0
    bands = root / "bands.json"
    bands.write_text(bands_to_json([BandSpec(0.5, 3.0), BandSpec(0.5, 6.0),
                                    BandSpec(1.0, 4.0)]))
    return root / "d", bands


def _files(d):
    return {p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(d.rglob("*"))
            if p.is_file()}


def test_synth_byte_identical(tmp_path):
    assert cli.main(["synth", "--out", str(tmp_path / "a"), *SMALL, "--seed", "3"]) == 0
    assert cli.main(["synth", "--out", str(tmp_path / "b"), *SMALL, "--seed", "3"]) == 0
    assert _files(tmp_path / "a") == _files(tmp_path / "b")


def test_synth_csv_format(tmp_path):
    assert cli.main(["synth", "--out", str(tmp_path / "c"), *SMALL, "--format", "csv-dir"]) == 0
    assert (tmp_path / "c" / "truth.json").exists()


@pytest.mark.parametrize("argv", [["--snr", "0"], ["--band", "0", "3"],
                                  ["--extra", "1,2"], ["--presence", "2"]])
def test_synth_invalid_exits_2(tmp_path, argv):
    assert cli.main(["synth", "--out", str(tmp_path / "x"), *argv]) == 2


def test_missing_required_option_exits_2():
    assert cli.main(["synth"]) == 2


def test_bench_two_methods(dataset, tmp_path):
    d, bands = dataset
    out = tmp_path / "bench"
    rc = cli.main(["bench", "--data", str(d), "--out", str(out), "--methods",
                   "strca2,fbtrca:lda", "--bands", str(bands), "--k2", "5", *CV])
    assert rc == 0
    rows = list(csv.DictReader((out / "results.csv").open()))
    assert [r["method"] for r in rows] == ["STRCA2", "FBTRCA-LDA"]
    payload = json.loads((out / "results.json").read_text())
    opts = payload["config"]["options"]
    assert opts["folds"] == 5 and opts["k2"] == 5 and "jobs" not in opts
    assert "numpy" in payload["config"]["versions"]
    for r in payload["results"]:
        assert r["mean"] == pytest.approx(np.mean(r["per_fold_accuracy"]))


def test_bench_jobs_invariant(dataset, tmp_path):
    d, bands = dataset
    docs = []
    for jobs in ("1", "2"):
        out = tmp_path / f"j{jobs}"
        assert cli.main(["bench", "--data", str(d), "--out", str(out), "--methods",
                         "cvt,fbtrca:svm", "--bands", str(bands), "--k2", "5",
                         "--jobs", jobs, *CV]) == 0
        docs.append(strip_timing(json.loads((out / "results.json").read_text())))
    assert docs[0] == docs[1]


def test_config_file_layering(dataset, tmp_path):
    d, bands = dataset
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"methods": "strca1", "folds": 3, "seed": 4}))
    out = tmp_path / "o"
    assert cli.main(["bench", "--config", str(cfg), "--data", str(d), "--out", str(out),
                     "--seed", "5", "--inner-folds", "2"]) == 0
    opts = json.loads((out / "results.json").read_text())["config"]["options"]
    assert (opts["methods"], opts["folds"], opts["seed"]) == ("strca1", 3, 5)


def test_unknown_config_key_exits_2(dataset, tmp_path):
    d, _ = dataset
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"colour": "red"}))
    assert cli.main(["bench", "--config", str(cfg), "--data", str(d),
                     "--out", str(tmp_path / "o")]) == 2


def test_invalid_dataset_exits_2(tmp_path):
    assert cli.main(["bench", "--data", str(tmp_path / "none"), "--out", str(tmp_path / "o")]) == 2
    (tmp_path / "bad" / "movement").mkdir(parents=True)
    assert cli.main(["bench", "--data", str(tmp_path / "bad"), "--out", str(tmp_path / "o")]) == 2


def test_unknown_method_exits_2(dataset, tmp_path):
    d, _ = dataset
    assert cli.main(["bench", "--data", str(d), "--out", str(tmp_path / "o"),
                     "--methods", "magic"]) == 2


def test_runtime_error_exits_3(dataset, tmp_path, monkeypatch):
    d, _ = dataset

    def boom(*a, **k):
        raise RuntimeError("simulated failure")

    monkeypatch.setattr(cli, "run_strca", boom)
    assert cli.main(["bench", "--data", str(d), "--out", str(tmp_path / "o"),
                     "--methods", "strca2"]) == 3


def test_sweep_and_compare(dataset, tmp_path):
    d, bands = dataset
    assert cli.main(["sweep", "--data", str(d), "--out", str(tmp_path / "s"), "--bands",
                     str(bands), "--selectors", "MRMR,MIQ", "--classifiers", "lda",
                     "--k1-max", "2", "--k2-max", "3", *CV]) == 0
    payload = json.loads((tmp_path / "s" / "sweep.json").read_text())
    assert len(payload["rows"]) == 2 * (2 + 3)
    assert "MRMR/LDA/Type2" in payload["best_k"]
    assert cli.main(["compare-settings", "--data", str(d), "--out", str(tmp_path / "c"),
                     "--settings", "M1,M2", *CV]) == 0
    rows = list(csv.DictReader((tmp_path / "c" / "settings.csv").open()))
    assert len(rows) == 20


def test_export_features(dataset, tmp_path):
    d, bands = dataset
    out = tmp_path / "f.csv"
    assert cli.main(["export-features", "--data", str(d), "--out", str(out),
                     "--bands", str(bands)]) == 0
    rows = list(csv.reader(out.open()))
    assert len(rows) == 31 and len(rows[0]) == 3 * 6 + 1


def test_onset_command(tmp_path):
    src = tmp_path / "traj.csv"
    with src.open("w", newline="") as fh:
        w = csv.writer(fh)
        for i in range(3):
            w.writerow([i, *generate_trajectory("limb", 2.0, fs=256).samples])
    assert cli.main(["onset", "--input", str(src), "--out", str(tmp_path / "o")]) == 0
    rows = list(csv.DictReader((tmp_path / "o" / "onsets.csv").open()))
    assert [int(r["onset_index"]) for r in rows] == [512] * 3


def test_version(capsys):
    with pytest.raises(SystemExit) as e:
        cli.main(["--version"])
    assert e.value.code == 0
