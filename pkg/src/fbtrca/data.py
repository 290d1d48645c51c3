"""Containers for EEG epochs, trajectories and CCP feature tables, plus IO.

Epochs are stored on disk as one directory per class::

    <dir>/meta.json     {"dims": [n_channels, n_samples, n_trials], "fs": ...,
                         "channel_names": [...], "label": ..., "window": [s, e]}
    <dir>/data.f64      little-endian float64, channel-major (C order of
                        the [channels, samples, trials] tensor)

A CSV variant (``data.csv``, one row per (channel, sample), one column per
trial) is accepted for small fixtures.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

COEF_KINDS = ("rho11", "rho12", "rho21", "rho22", "rho31", "rho32")
LABELS = ("movement", "rest")


class DataError(ValueError):
    """Invalid epoch, trajectory or feature data."""


class DegenerateChannelError(DataError):
    def __init__(self, channel, trial):
        self.channel = channel
        self.trial = trial
        super().__init__(f"zero variance in channel {channel!r}, trial {trial}")


@dataclass(frozen=True)
class EpochSet:
    """EEG trials of one class, shape ``(n_channels, n_samples, n_trials)``."""

    data: np.ndarray
    fs: float
    channel_names: tuple = ()
    label: str = "movement"
    window: tuple = (-2.0, 0.0)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3:
            raise DataError(f"epoch tensor must be 3-D, got shape {data.shape}")
        n_ch, n_s, n_t = data.shape
        if n_ch < 2:
            raise DataError("need at least 2 channels")
        if n_t < 2:
            raise DataError("need at least 2 trials")
        if not np.all(np.isfinite(data)):
            raise DataError("epoch data contains non-finite values")
        if self.fs <= 0:
            raise DataError("sampling rate must be positive")
        start, end = self.window
        if round((end - start) * self.fs) != n_s:
            raise DataError(
                f"window {self.window} at {self.fs} Hz implies "
                f"{round((end - start) * self.fs)} samples, data has {n_s}")
        names = tuple(self.channel_names) or tuple(f"ch{i}" for i in range(n_ch))
        if len(names) != n_ch:
            raise DataError("channel_names length does not match data")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "channel_names", names)
        object.__setattr__(self, "window", (float(start), float(end)))

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    @property
    def n_trials(self) -> int:
        return self.data.shape[2]

    def trials(self) -> np.ndarray:
        """Trial-major view, shape ``(n_trials, n_channels, n_samples)``."""
        return np.moveaxis(self.data, 2, 0)

    def with_data(self, data: np.ndarray) -> "EpochSet":
        return EpochSet(data, self.fs, self.channel_names, self.label, self.window)

    def subset(self, idx) -> "EpochSet":
        return self.with_data(self.data[:, :, np.asarray(idx)])

    @classmethod
    def from_trials(cls, trials: np.ndarray, fs: float, **kw) -> "EpochSet":
        """Build from a ``(n_trials, n_channels, n_samples)`` array."""
        trials = np.asarray(trials, dtype=np.float64)
        kw.setdefault("window", (-trials.shape[2] / fs, 0.0))
        return cls(np.moveaxis(trials, 0, 2), fs, **kw)


@dataclass(frozen=True)
class Trajectory:
    samples: np.ndarray
    fs: float
    trial_id: int = 0

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64).ravel()
        if x.size < 2:
            raise DataError("trajectory needs at least 2 samples")
        if self.fs <= 0:
            raise DataError("sampling rate must be positive")
        object.__setattr__(self, "samples", x)


@dataclass(frozen=True)
class FeatureMatrix:
    """Trials x CCP features with (band_index, kind) provenance per column."""

    values: np.ndarray
    columns: tuple
    labels: np.ndarray = field(default=None)

    def __post_init__(self):
        values = np.atleast_2d(np.asarray(self.values, dtype=np.float64))
        columns = tuple((int(b), str(k)) for b, k in self.columns)
        if values.shape[0] == 0:
            raise DataError("feature matrix has no trials")
        if values.shape[1] != len(columns):
            raise DataError("column provenance does not match value matrix")
        if len(set(columns)) != len(columns):
            raise DataError("duplicate (band, kind) column")
        bad = [k for _, k in columns if k not in COEF_KINDS]
        if bad:
            raise DataError(f"unknown coefficient kinds {bad}")
        if not np.all(np.isfinite(values)):
            raise DataError("feature matrix contains non-finite values")
        labels = self.labels
        if labels is not None:
            labels = np.asarray(labels, dtype=np.int64).ravel()
            if labels.shape[0] != values.shape[0]:
                raise DataError("labels length does not match trial count")
            if not np.isin(labels, (0, 1)).all():
                raise DataError("labels must be 0/1")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "columns", columns)
        object.__setattr__(self, "labels", labels)

    @property
    def n_bands(self) -> int:
        return len({b for b, _ in self.columns})

    def kind_groups(self) -> dict:
        """Column indices per coefficient kind, ordered by band."""
        groups = {k: [] for k in COEF_KINDS}
        for i, (b, k) in sorted(enumerate(self.columns), key=lambda t: (t[1][0], t[0])):
            groups[k].append(i)
        return {k: v for k, v in groups.items() if v}

    def take(self, cols) -> "FeatureMatrix":
        cols = list(cols)
        return FeatureMatrix(self.values[:, cols], [self.columns[c] for c in cols], self.labels)

    @staticmethod
    def concat(parts: Sequence["FeatureMatrix"]) -> "FeatureMatrix":
        return FeatureMatrix(np.hstack([p.values for p in parts]),
                             [c for p in parts for c in p.columns], parts[0].labels)


def zscore_normalize(e: EpochSet) -> EpochSet:
    """Z-score each (channel, trial) series over time, n-1 denominator."""
    x = e.data
    mu = x.mean(axis=1, keepdims=True)
    sd = x.std(axis=1, ddof=1, keepdims=True)
    zero = sd[:, 0, :] == 0
    if zero.any():
        ch, tr = np.argwhere(zero)[0]
        raise DegenerateChannelError(e.channel_names[ch], int(tr))
    return e.with_data((x - mu) / sd)


def save_epochs(e: EpochSet, path, format: str = "packed-binary") -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    meta = {"dims": list(e.data.shape), "fs": e.fs,
            "channel_names": list(e.channel_names), "label": e.label,
            "window": list(e.window)}
    if format == "packed-binary":
        (path / "data.f64").write_bytes(e.data.astype("<f8").tobytes(order="C"))
    elif format == "csv-dir":
        flat = e.data.reshape(-1, e.n_trials)
        with open(path / "data.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            for row in flat:
                w.writerow([repr(float(v)) for v in row])
    else:
        raise ValueError(f"unknown epoch format {format!r}")
    (path / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    return path


def load_epochs(path, format: str | None = None) -> EpochSet:
    path = Path(path)
    meta_file = path / "meta.json"
    if not meta_file.exists():
        raise FileNotFoundError(f"no meta.json in {path}")
    meta = json.loads(meta_file.read_text())
    dims = tuple(int(d) for d in meta["dims"])
    if format is None:
        format = "packed-binary" if (path / "data.f64").exists() else "csv-dir"
    if format == "packed-binary":
        raw = (path / "data.f64").read_bytes()
        if len(raw) != 8 * int(np.prod(dims)):
            raise DataError(f"payload has {len(raw) // 8} values, header declares {dims}")
        data = np.frombuffer(raw, dtype="<f8").reshape(dims).astype(np.float64)
    elif format == "csv-dir":
        fname = path / "data.csv"
        if not fname.exists():
            raise FileNotFoundError(fname)
        data = np.loadtxt(fname, delimiter=",", ndmin=2)
        if data.shape != (dims[0] * dims[1], dims[2]):
            raise DataError(f"CSV shape {data.shape} inconsistent with header {dims}")
        data = data.reshape(dims)
    else:
        raise ValueError(f"unknown epoch format {format!r}")
    if not np.all(np.isfinite(data)):
        raise DataError(f"non-finite samples in {path}")
    return EpochSet(data, float(meta["fs"]), tuple(meta["channel_names"]),
                    meta.get("label", "movement"), tuple(meta["window"]))


def column_name(col) -> str:
    band, kind = col
    return f"b{band}:{kind}"


def export_features(f: FeatureMatrix, path) -> Path:
    """Write features as RFC-4180 CSV, 17 significant digits, label last."""
    path = Path(path)
    if f.values.shape[0] == 0:
        raise DataError("empty feature matrix")
    labels = f.labels if f.labels is not None else np.full(f.values.shape[0], -1)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow([column_name(c) for c in f.columns] + ["label"])
        for row, lab in zip(f.values, labels):
            w.writerow([f"{v:.17g}" for v in row] + [int(lab)])
    return path


def import_features(path) -> FeatureMatrix:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    cols = []
    for name in header[:-1]:
        band, kind = name.split(":")
        cols.append((int(band[1:]), kind))
    values = np.array([[float(v) for v in r[:-1]] for r in body])
    labels = np.array([int(r[-1]) for r in body])
    return FeatureMatrix(values, cols, None if (labels < 0).all() else labels)
