"""Movement onset detection from trajectories and trial rejection."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import optimize, signal

from .data import Trajectory

STATUSES = ("accepted", "rejected-variance", "rejected-fit", "rejected-manual")


class OnsetError(ValueError):
    pass


@dataclass(frozen=True)
class OnsetResult:
    trial_id: int
    onset_index: int | None
    status: str
    fit_params: tuple | None = None

    def __post_init__(self):
        if self.status not in STATUSES:
            raise OnsetError(f"unknown status {self.status!r}")
        if (self.onset_index is not None) != (self.status == "accepted"):
            raise OnsetError("onset_index must be set exactly when accepted")


def _window(n, window_length):
    if window_length % 2 == 0 or window_length < 3:
        raise OnsetError("window_length must be odd and >= 3")
    if window_length > n:
        raise OnsetError(f"window_length {window_length} longer than signal ({n})")
    return window_length


def smooth_diff(t: Trajectory, window_length: int = 31) -> np.ndarray:
    """First difference smoothed by a first-order Savitzky-Golay filter.

    Returns ``len(t) - 1`` samples.
    """
    d = np.diff(np.asarray(t.samples, dtype=float))
    return signal.savgol_filter(d, _window(d.size, window_length), 1, mode="interp")


def _smooth(y, window_length):
    if y.size < window_length:
        return y
    return signal.savgol_filter(y, window_length, 1, mode="interp")


def _first_crossing(y, threshold):
    hit = np.nonzero(y > threshold)[0]
    return int(hit[0]) if hit.size else None


def _normalize(y):
    peak = np.max(y)
    return y / peak if peak > 0 else None


def locate_onset_limb(t: Trajectory, var_threshold: float = 0.05,
                      onset_threshold: float = 0.2, window_length: int = 31,
                      gate: str = "raw") -> OnsetResult:
    """Threshold-crossing onset on a max-normalized limb trajectory.

    The variance gate uses the raw trajectory (``gate="raw"``) or its
    smoothed first difference (``gate="smoothed-diff"``).
    """
    y = np.asarray(t.samples, dtype=float)
    if gate == "raw":
        v = np.var(y)
    elif gate == "smoothed-diff":
        v = np.var(smooth_diff(t, min(window_length, _odd_floor(y.size - 1))))
    else:
        raise OnsetError(f"unknown gate {gate!r}")
    if v < var_threshold:
        return OnsetResult(t.trial_id, None, "rejected-variance")
    z = _normalize(y)
    idx = None if z is None else _first_crossing(z, onset_threshold)
    if idx is None:
        return OnsetResult(t.trial_id, None, "rejected-manual")
    return OnsetResult(t.trial_id, idx, "accepted")


def _odd_floor(n):
    return max(3, n - 1 + n % 2)


def gaussian(x, a, b, c, d):
    return a * np.exp(-((x - b) / c) ** 2) + d


def fit_gaussian(y, max_iter: int = 200, rel_tol: float = 1e-8):
    """Levenberg-Marquardt fit of ``a*exp(-((x-b)/c)**2)+d``; None on failure."""
    x = np.arange(y.size, dtype=float)
    p0 = [y.max() - y.min(), float(np.argmax(y)), y.size / 10, y.min()]
    if p0[0] == 0:
        return None

    def resid(p):
        return gaussian(x, *p) - y

    try:
        res = optimize.least_squares(resid, p0, method="lm", max_nfev=max_iter * 5,
                                     ftol=rel_tol, xtol=rel_tol)
    except (ValueError, RuntimeError):
        return None
    if not res.success or not np.all(np.isfinite(res.x)):
        return None
    a, b, c, d = res.x
    return float(a), float(b), float(abs(c)), float(d)


def locate_onset_fit(t: Trajectory, a_min: float = 0.05, c_max: float = 100.0,
                     d_max: float = 10.0, onset_threshold: float = 0.2,
                     window_length: int = 31) -> OnsetResult:
    """Gaussian-fit validation followed by a threshold crossing.

    Fit parameters refer to the raw trajectory, with ``b`` and ``c`` in
    samples.  The trial is rejected when any of ``a < a_min``,
    ``c > c_max`` or ``d > d_max`` holds.  Accepted trials get the first
    index where the smoothed, max-normalized trajectory exceeds
    ``onset_threshold``.
    """
    y = np.asarray(t.samples, dtype=float)
    p = fit_gaussian(y)
    if p is None:
        return OnsetResult(t.trial_id, None, "rejected-fit", None)
    a, b, c, d = p
    if a < a_min or c > c_max or d > d_max:
        return OnsetResult(t.trial_id, None, "rejected-fit", p)
    w = min(window_length, _odd_floor(y.size))
    z = _normalize(_smooth(y, w) if w >= 3 else y)
    idx = None if z is None else _first_crossing(z, onset_threshold)
    if idx is None:
        return OnsetResult(t.trial_id, None, "rejected-manual", p)
    return OnsetResult(t.trial_id, idx, "accepted", p)


def fake_onset_rest(t: Trajectory, var_threshold: float = 0.02,
                    beep_time_s: float = 2.0, delay_s: float = 2.5) -> OnsetResult:
    """Fake onset ``delay_s`` after the beep; rejects variance above the threshold."""
    y = np.asarray(t.samples, dtype=float)
    idx = int(round((beep_time_s + delay_s) * t.fs))
    if idx >= y.size:
        raise OnsetError(f"trajectory of {y.size} samples ends before the fake onset {idx}")
    if np.var(y) > var_threshold:
        return OnsetResult(t.trial_id, None, "rejected-variance")
    return OnsetResult(t.trial_id, idx, "accepted")


def write_report(results, path) -> Path:
    """CSV with columns trial_id, status, onset_index, a, b, c, d (blank when absent)."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trial_id", "status", "onset_index", "a", "b", "c", "d"])
        for r in results:
            fp = [repr(v) for v in r.fit_params] if r.fit_params else [""] * 4
            w.writerow([r.trial_id, r.status, "" if r.onset_index is None else r.onset_index, *fp])
    return path


def read_report(path) -> list[OnsetResult]:
    out = []
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            fp = None if row["a"] == "" else tuple(float(row[k]) for k in "abcd")
            idx = None if row["onset_index"] == "" else int(row["onset_index"])
            out.append(OnsetResult(int(row["trial_id"]), idx, row["status"], fp))
    return out
