"""Command-line entry point: ``fbtrca <command> [options]``.

Options come from three layers, later ones winning: built-in defaults, a
JSON file given with ``--config``, explicit command-line flags.  Exit codes
are 0 on success, 2 on invalid input or configuration, 3 on runtime
failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .data import DataError, FeatureMatrix, Trajectory, export_features, load_epochs
from .featsel import METHODS as SELECTORS, ArrangementPlan, SelectionError
from .filterbank import BandError, bands_from_json, make_bands, make_shifted_grid
from .onset import (OnsetError, fake_onset_rest, locate_onset_fit, locate_onset_limb,
                    write_report)
from .pipeline import (STRCA1_BAND, STRCA2_BAND, CvConfig, PipelineError, band_features,
                       best_k, compare_settings, fbtrca_features, fold_matrix, pool,
                       results_csv, results_json, run_cvt, run_fbtrca, run_strca, sweep)
from .synth import SynthError, SynthSpec, write_dataset

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 2, 3
BENCH_METHODS = ("strca1", "strca2", "cvt", "fbtrca:lda", "fbtrca:svm", "fbtrca:nn")

CV_DEFAULTS = {"folds": 10, "inner_folds": 9, "seed": 0, "zscore": "before",
               "shuffle": True, "jobs": 1}
DEFAULTS = {
    "synth": {"out": None, "channels": 11, "samples": 512, "trials": 60, "fs": 256.0,
              "snr": 1.0, "seed": 0, "band": [0.05, 3.0], "extra": [], "jitter": 0.0,
              "presence": 1.0, "rhythm": [],
              "format": "packed-binary"},
    "onset": {"input": None, "out": None, "fs": 256.0, "mode": "limb",
              "var_threshold": None, "onset_threshold": 0.2, "window": 31, "beep": 2.0},
    "bench": {"data": None, "out": None, "methods": "strca2,cvt,fbtrca:svm",
              "selector": "MRMR", "arrangement": "Type2", "k1": 3, "k2": 13,
              "bands": None, **CV_DEFAULTS},
    "sweep": {"data": None, "out": None, "selectors": ",".join(SELECTORS),
              "classifiers": "svm", "k1_max": 5, "k2_max": 30, "bands": None, **CV_DEFAULTS},
    "compare-settings": {"data": None, "out": None, "settings": "M1,M2,M3", "m": 10,
                         **CV_DEFAULTS},
    "export-features": {"data": None, "out": None, "bands": None, "zscore": "before"},
}


class ConfigError(ValueError):
    pass


VALIDATION_ERRORS = (ConfigError, DataError, SynthError, BandError, SelectionError,
                     PipelineError, OnsetError, FileNotFoundError, json.JSONDecodeError)


def _cv_args(p):
    p.add_argument("--folds", type=int)
    p.add_argument("--inner-folds", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--zscore", choices=("before", "after", "none"))
    p.add_argument("--no-shuffle", dest="shuffle", action="store_const", const=False)
    p.add_argument("--jobs", type=int, help="worker processes; results do not depend on it")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fbtrca", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out")
    p.add_argument("--channels", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("--trials", type=int, help="trials per class")
    p.add_argument("--fs", type=float)
    p.add_argument("--snr", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--band", type=float, nargs=2, metavar=("LOW", "HIGH"))
    p.add_argument("--extra", action="append", metavar="LOW,HIGH,AMP",
                   help="additional planted component (repeatable)")
    p.add_argument("--jitter", type=float, help="latency jitter sd in seconds")
    p.add_argument("--rhythm", action="append", metavar="LOW,HIGH,AMP",
                   help="ongoing rhythm with a random per-trial pattern (repeatable)")
    p.add_argument("--presence", type=float,
                   help="per-trial probability that each extra component appears")
    p.add_argument("--format", choices=("packed-binary", "csv-dir"))

    p = sub.add_parser("onset", help="locate movement onsets in trajectories")
    p.add_argument("--input", help="CSV: one trajectory per row, trial_id then samples")
    p.add_argument("--out", help="output directory")
    p.add_argument("--fs", type=float)
    p.add_argument("--mode", choices=("limb", "fit", "rest"))
    p.add_argument("--var-threshold", type=float)
    p.add_argument("--onset-threshold", type=float)
    p.add_argument("--window", type=int)
    p.add_argument("--beep", type=float, help="cue time in seconds (rest mode)")

    p = sub.add_parser("bench", help="cross-validated method comparison")
    p.add_argument("--data")
    p.add_argument("--out")
    p.add_argument("--methods", help=",".join(BENCH_METHODS))
    p.add_argument("--selector")
    p.add_argument("--arrangement")
    p.add_argument("--k1", type=int)
    p.add_argument("--k2", type=int)
    p.add_argument("--bands", help="band JSON file (default: 100-band grid)")
    _cv_args(p)

    p = sub.add_parser("sweep", help="accuracy versus K1/K2 per selector and classifier")
    p.add_argument("--data")
    p.add_argument("--out")
    p.add_argument("--selectors")
    p.add_argument("--classifiers")
    p.add_argument("--k1-max", type=int)
    p.add_argument("--k2-max", type=int)
    p.add_argument("--bands")
    _cv_args(p)

    p = sub.add_parser("compare-settings", help="per-band STRCA accuracy for M1/M2/M3")
    p.add_argument("--data")
    p.add_argument("--out")
    p.add_argument("--settings")
    p.add_argument("--m", type=int)
    _cv_args(p)

    p = sub.add_parser("export-features", help="CCP features of every band as CSV")
    p.add_argument("--data")
    p.add_argument("--out", help="output CSV path")
    p.add_argument("--bands")
    p.add_argument("--zscore", choices=("before", "after", "none"))

    for sp in sub.choices.values():
        sp.add_argument("--config", help="JSON file of option values")
    return ap


def resolve(args) -> dict:
    """Merge defaults, the config file and explicit flags (in that order)."""
    cmd = args.command
    opts = dict(DEFAULTS[cmd])
    if args.config:
        file_opts = json.loads(Path(args.config).read_text())
        if not isinstance(file_opts, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = set(file_opts) - set(opts)
        if unknown:
            raise ConfigError(f"unknown config keys for {cmd}: {sorted(unknown)}")
        opts.update(file_opts)
    for k, v in vars(args).items():
        if k in opts and v is not None:
            opts[k] = v
    missing = [k for k in ("out", "data", "input") if k in opts and opts[k] is None]
    if missing:
        raise ConfigError(f"missing required option(s): {', '.join('--' + m for m in missing)}")
    return opts


def _cv(o) -> CvConfig:
    return CvConfig(outer_folds=o["folds"], inner_folds=o["inner_folds"], seed=o["seed"],
                    shuffle=o["shuffle"], zscore=o["zscore"], jobs=o["jobs"])


def _echo(cmd, o) -> dict:
    echo = {k: v for k, v in o.items() if k not in ("jobs", "out", "config")}
    return {"command": cmd, "options": echo,
            "versions": {"fbtrca": __version__, "numpy": np.__version__,
                         "scipy": scipy.__version__}}


def _load(o):
    d = Path(o["data"])
    if not d.is_dir():
        raise DataError(f"dataset directory {d} not found")
    return load_epochs(d / "movement"), load_epochs(d / "rest")


def _grid(o):
    if o.get("bands"):
        return bands_from_json(Path(o["bands"]).read_text())
    return make_shifted_grid()


def _out_dir(o) -> Path:
    out = Path(o["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _triples(items, flag):
    out = []
    for item in items or []:
        parts = item.split(",") if isinstance(item, str) else item
        if len(parts) != 3:
            raise ConfigError(f"{flag} expects LOW,HIGH,AMP, got {item!r}")
        try:
            out.append(tuple(float(x) for x in parts))
        except ValueError:
            raise ConfigError(f"{flag} expects numbers, got {item!r}") from None
    return tuple(out)


def cmd_synth(o) -> int:
    extra = _triples(o["extra"], "--extra")
    rhythm = _triples(o["rhythm"], "--rhythm")
    spec = SynthSpec(n_channels=o["channels"], n_samples=o["samples"], n_trials=o["trials"],
                     fs=o["fs"], template_band=tuple(o["band"]), snr=o["snr"], seed=o["seed"],
                     extra_components=extra, latency_jitter_s=o["jitter"],
                     component_presence=o["presence"], rhythm_noise=rhythm)
    out = write_dataset(spec, o["out"], o["format"])
    (out / "config.json").write_text(json.dumps(_echo("synth", o), indent=2, sort_keys=True))
    return EXIT_OK


def _read_trajectories(path, fs):
    out = []
    with Path(path).open(newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].startswith("#"):
                continue
            try:
                tid = int(row[0])
            except ValueError:
                continue  # header
            out.append(Trajectory(np.array([float(v) for v in row[1:] if v != ""]), fs, tid))
    if not out:
        raise DataError(f"no trajectories in {path}")
    return out


def cmd_onset(o) -> int:
    trajs = _read_trajectories(o["input"], o["fs"])
    mode = o["mode"]
    res = []
    for t in trajs:
        if mode == "limb":
            vt = 0.05 if o["var_threshold"] is None else o["var_threshold"]
            res.append(locate_onset_limb(t, vt, o["onset_threshold"], o["window"]))
        elif mode == "fit":
            res.append(locate_onset_fit(t, onset_threshold=o["onset_threshold"],
                                        window_length=o["window"]))
        else:
            vt = 0.02 if o["var_threshold"] is None else o["var_threshold"]
            res.append(fake_onset_rest(t, vt, o["beep"]))
    out = _out_dir(o)
    write_report(res, out / "onsets.csv")
    (out / "config.json").write_text(json.dumps(_echo("onset", o), indent=2, sort_keys=True))
    return EXIT_OK


def _parse_methods(text):
    methods = [m.strip().lower() for m in text.split(",") if m.strip()]
    bad = [m for m in methods if m not in BENCH_METHODS]
    if bad or not methods:
        raise ConfigError(f"unknown method(s) {bad}; choose from {', '.join(BENCH_METHODS)}")
    return methods


def cmd_bench(o) -> int:
    methods = _parse_methods(o["methods"])
    cfg = _cv(o)
    plan = ArrangementPlan(o["arrangement"], K1=o["k1"], K2=o["k2"])
    selector = o["selector"].upper()
    if selector not in SELECTORS:
        raise ConfigError(f"unknown selector {o['selector']!r}")
    move, rest = _load(o)
    grid = _grid(o)
    results, feats = [], None
    for m in methods:
        if m == "strca1":
            results.append(run_strca(move, rest, STRCA1_BAND, cfg, method="STRCA1"))
        elif m == "strca2":
            results.append(run_strca(move, rest, STRCA2_BAND, cfg, method="STRCA2"))
        elif m == "cvt":
            results.append(run_cvt(move, rest, grid, cfg))
        else:
            if feats is None:
                feats = fbtrca_features(move, rest, grid, cfg)
            results.append(run_fbtrca(move, rest, grid, selector, plan, m.split(":")[1],
                                      cfg, features=feats))
    out = _out_dir(o)
    echo = _echo("bench", o)
    echo["aggregation"] = "folds of one dataset"
    (out / "results.json").write_text(results_json(results, echo))
    (out / "results.csv").write_text(results_csv(results))
    return EXIT_OK


def _csv_rows(rows, path, keys):
    with Path(path).open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def cmd_sweep(o) -> int:
    cfg = _cv(o)
    selectors = [s.strip().upper() for s in o["selectors"].split(",") if s.strip()]
    bad = [s for s in selectors if s not in SELECTORS]
    if bad:
        raise ConfigError(f"unknown selector(s) {bad}")
    classifiers = [c.strip().upper() for c in o["classifiers"].split(",") if c.strip()]
    bad = [c for c in classifiers if c not in ("LDA", "SVM", "NN")]
    if bad:
        raise ConfigError(f"unknown classifier(s) {bad}")
    move, rest = _load(o)
    rows = sweep(move, rest, _grid(o), selectors, classifiers, cfg, o["k1_max"], o["k2_max"])
    out = _out_dir(o)
    payload = {"config": _echo("sweep", o), "rows": rows, "best_k": best_k(rows)}
    (out / "sweep.json").write_text(json.dumps(payload, indent=2, sort_keys=True))
    _csv_rows(rows, out / "sweep.csv",
              ["selector", "classifier", "arrangement", "K", "mean", "sd", "selection_seconds"])
    return EXIT_OK


def cmd_compare_settings(o) -> int:
    cfg = _cv(o)
    settings = [s.strip().upper() for s in o["settings"].split(",") if s.strip()]
    move, rest = _load(o)
    for s in settings:
        make_bands(s, o["m"])  # validate before computing
    rows = compare_settings(move, rest, settings, cfg, o["m"])
    out = _out_dir(o)
    payload = {"config": _echo("compare-settings", o), "rows": rows}
    (out / "settings.json").write_text(json.dumps(payload, indent=2, sort_keys=True))
    _csv_rows(rows, out / "settings.csv",
              ["setting", "band_index", "low_hz", "high_hz", "mean", "sd"])
    return EXIT_OK


def cmd_export_features(o) -> int:
    """Fit STRCA on all trials of each band and export the labelled features."""
    move, rest = _load(o)
    grid = _grid(o)
    cfg = CvConfig(zscore=o["zscore"])
    n = move.n_trials + rest.n_trials
    X, y = pool(move, rest, cfg)
    fit = (np.nonzero(y == 1)[0], np.nonzero(y == 0)[0])
    F = band_features(X, move.fs, grid, [fit], cfg)
    fm = fold_matrix(np.swapaxes(F, 1, 2)[0], np.arange(n), y)
    out = Path(o["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    export_features(FeatureMatrix(fm.values, fm.columns, fm.labels), out)
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "onset": cmd_onset, "bench": cmd_bench, "sweep": cmd_sweep,
            "compare-settings": cmd_compare_settings, "export-features": cmd_export_features}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        opts = resolve(args)
        return COMMANDS[args.command](opts)
    except VALIDATION_ERRORS as e:
        print(f"fbtrca {args.command}: invalid input: {e}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as e:  # noqa: BLE001 - reported as a runtime failure
        print(f"fbtrca {args.command}: error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
