"""Band definitions and zero-phase Butterworth filter banks for low-frequency EEG."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from .data import EpochSet

SETTINGS = ("M1", "M2", "M3", "custom")
F_CEILING = 10.0


class BandError(ValueError):
    pass


@dataclass(frozen=True)
class BandSpec:
    low_hz: float
    high_hz: float
    setting: str = "custom"
    index: int = 0

    def __post_init__(self):
        if not 0 < self.low_hz < self.high_hz <= F_CEILING + 1e-12:
            raise BandError(f"invalid band {self.low_hz}-{self.high_hz} Hz")
        if self.setting not in SETTINGS:
            raise BandError(f"unknown setting {self.setting!r}")

    def as_dict(self):
        return {"low_hz": self.low_hz, "high_hz": self.high_hz,
                "setting": self.setting, "index": self.index}

    def __str__(self):
        return f"{self.low_hz:g}-{self.high_hz:g} Hz"


def _bands(edges, setting):
    return [BandSpec(round(lo, 10), round(hi, 10), setting, i)
            for i, (lo, hi) in enumerate(edges)]


def make_bands(setting: str, m: int = 10, f_min: float = 0.05,
               f_max: float = 10.0) -> list[BandSpec]:
    """Subbands of the M1 (equal width), M2 (doubling) or M3 (nested) setting.

    M1 and M3 split ``[0, f_max]`` into ``m`` 1 Hz steps, so they need
    ``m == f_max``; the first band starts at ``f_min`` instead of 0.
    M2 bands have a high edge twice the low edge, clipped at ``f_max``.
    """
    if m < 1:
        raise BandError("m must be >= 1")
    if setting in ("M1", "M3"):
        step = f_max / m
        if not np.isclose(step, 1.0):
            raise BandError(f"{setting} uses 1 Hz steps; m={m} inconsistent with f_max={f_max}")
        highs = [step * (k + 1) for k in range(m)]
        if setting == "M1":
            lows = [f_min] + highs[:-1]
        else:
            lows = [f_min] * m
        return _bands(zip(lows, highs), setting)
    if setting == "M2":
        return _bands(_m2_edges(m, f_min, f_max), "M2")
    raise BandError(f"unknown setting {setting!r}")


def _m2_edges(m, f_min, f_max):
    # lows step by 0.09*f_max per band (0.9 Hz for a 10 Hz ceiling), highs are
    # twice the low clipped at f_max: 0.05-0.9, 0.9-1.8, 1.8-3.6, 2.7-5.4, ..., 8.1-10
    step = 0.9 * f_max / m
    edges = [(f_min, step)]
    for k in range(1, m):
        lo = k * step
        edges.append((lo, min(2 * lo, f_max)))
    return edges


def make_shifted_grid(low_values=None, high_values=None) -> list[BandSpec]:
    """The nested grid with shifted low edges: 10 lows x 10 highs = 100 bands.

    Ordered lexicographically by (low, high).
    """
    if low_values is None:
        low_values = np.round(np.arange(1, 11) * 0.05, 10)
    if high_values is None:
        high_values = np.arange(1.0, 11.0)
    edges = [(float(lo), float(hi)) for lo in sorted(low_values)
             for hi in sorted(high_values) if lo < hi]
    return _bands(edges, "M3")


def bands_to_json(bands, config=None) -> str:
    payload = {"bands": [b.as_dict() for b in bands]}
    if config:
        payload.update(config)
    return json.dumps(payload, indent=2, sort_keys=True)


def bands_from_json(text: str) -> list[BandSpec]:
    """Accepts either ``{"bands": [...]}`` or ``{"setting", "m", "f_min", "f_max"}``."""
    cfg = json.loads(text)
    if "bands" in cfg:
        return [BandSpec(b["low_hz"], b["high_hz"], b.get("setting", "custom"),
                         b.get("index", i)) for i, b in enumerate(cfg["bands"])]
    if cfg.get("setting") == "grid":
        return make_shifted_grid()
    return make_bands(cfg["setting"], cfg.get("m", 10), cfg.get("f_min", 0.05),
                      cfg.get("f_max", 10.0))


def design_butterworth(band: BandSpec, fs: float, order: int = 8) -> np.ndarray:
    """Band-pass Butterworth as second-order sections.

    ``order`` is the analog prototype order; the band-pass transform doubles
    it, giving ``order`` biquads.
    """
    nyq = fs / 2
    if band.high_hz >= nyq:
        raise BandError(f"band edge {band.high_hz} Hz not below Nyquist {nyq} Hz")
    sos = signal.butter(order, [band.low_hz, band.high_hz], btype="bandpass",
                        fs=fs, output="sos")
    if np.abs(sos_poles(sos)).max() >= 1:
        raise BandError(f"unstable design for {band}")
    return sos


def sos_poles(sos) -> np.ndarray:
    return np.concatenate([np.roots(s[3:]) for s in sos])


@dataclass(frozen=True)
class FilterBank:
    bands: tuple
    fs: float
    order: int = 8
    design: tuple = field(default=(), repr=False)
    pad_seconds: float = 3.0

    def __post_init__(self):
        if not self.bands:
            raise BandError("filter bank needs at least one band")
        object.__setattr__(self, "bands", tuple(self.bands))
        if not self.design:
            object.__setattr__(self, "design", tuple(
                design_butterworth(b, self.fs, self.order) for b in self.bands))

    @property
    def m(self) -> int:
        return len(self.bands)

    def filter_array(self, x: np.ndarray, band: int) -> np.ndarray:
        """Zero-phase filter along the last axis."""
        n = x.shape[-1]
        padlen = int(round(self.pad_seconds * self.fs))
        xp = _reflect_pad(x, padlen)
        y = signal.sosfiltfilt(self.design[band], xp, axis=-1, padtype=None)
        return y[..., padlen:padlen + n]

    def apply(self, e: EpochSet) -> list[EpochSet]:
        return apply_bank(self, e)


def _odd_extend(x, n):
    left = 2 * x[..., :1] - x[..., n:0:-1]
    right = 2 * x[..., -1:] - x[..., -2:-(n + 2):-1]
    return np.concatenate([left, x, right], axis=-1)


def _reflect_pad(x, padlen):
    # odd reflection, repeated when the pad is longer than the signal
    done = 0
    while done < padlen:
        k = min(padlen - done, x.shape[-1] - 1)
        x = _odd_extend(x, k)
        done += k
    return x


def make_filterbank(bands, fs: float, order: int = 8) -> FilterBank:
    return FilterBank(tuple(bands), fs, order)


def apply_bank(fb: FilterBank, e: EpochSet) -> list[EpochSet]:
    if not np.isclose(e.fs, fb.fs):
        raise BandError(f"epoch fs {e.fs} differs from filter bank fs {fb.fs}")
    x = e.trials()
    out = []
    for b in range(fb.m):
        y = fb.filter_array(x, b)
        out.append(e.with_data(np.moveaxis(y, 0, 2)))
    return out
