"""Synthetic MRCP-like epochs and trajectories with known ground truth.

Movement trials follow the linear mixing model
``X[i, :, j] = a1[i, j] * s(t) + a2[i, :] @ n_j(t) + white``: a shared
band-limited readiness-potential template ``s`` with per-trial channel
gains, spatially mixed pink noise sources and independent white noise.
Rest trials contain the noise terms only.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .data import EpochSet, Trajectory, save_epochs


class SynthError(ValueError):
    pass


@dataclass(frozen=True)
class SynthSpec:
    """Generator parameters.

    ``snr`` is the ratio of the RMS of the planted component to the RMS of
    the noise, averaged over channels.  ``mixing`` optionally fixes the
    channel pattern of the planted component (length ``n_channels``).
    ``extra_components`` adds further planted components as
    ``(low_hz, high_hz, relative_amplitude)``, each with its own signed
    random channel pattern of RMS ``relative_amplitude``.
    ``latency_jitter_s`` shifts every movement trial by a random lag of
    that standard deviation.  ``component_presence`` is the
    probability that each extra component appears in a given movement trial.
    ``rhythm_noise`` adds ongoing rhythms to both classes as
    ``(low_hz, high_hz, amplitude)``: band-limited noise with a fresh random
    channel pattern on every trial, so no fixed spatial filter removes it.
    """
    n_channels: int = 11
    n_samples: int = 512
    n_trials: int = 60
    fs: float = 256.0
    template_band: tuple = (0.05, 3.0)
    snr: float = 1.0
    seed: int = 0
    mixing: tuple | None = None
    gain_jitter: float = 0.1
    white_fraction: float = 0.3
    n_noise_sources: int | None = None
    extra_components: tuple = ()
    latency_jitter_s: float = 0.0
    component_presence: float = 1.0
    rhythm_noise: tuple = ()
    channel_names: tuple = field(default=())

    def __post_init__(self):
        if not (self.snr > 0 and np.isfinite(self.snr)):
            raise SynthError("snr must be positive and finite")
        lo, hi = self.template_band
        if not 0 < lo < hi < self.fs / 2:
            raise SynthError(f"template_band {self.template_band} not within (0, fs/2)")
        if self.n_channels < 2 or self.n_trials < 2 or self.n_samples < 8:
            raise SynthError("need >= 2 channels, >= 2 trials, >= 8 samples")
        if self.mixing is not None and len(self.mixing) != self.n_channels:
            raise SynthError("mixing length must equal n_channels")
        if not 0 <= self.white_fraction <= 1:
            raise SynthError("white_fraction must lie in [0, 1]")
        for lo, hi, amp in self.extra_components:
            if not 0 < lo < hi < self.fs / 2 or amp < 0:
                raise SynthError(f"invalid extra component {(lo, hi, amp)}")
        if self.latency_jitter_s < 0:
            raise SynthError("latency_jitter_s must be >= 0")
        for lo, hi, amp in self.rhythm_noise:
            if not 0 < lo < hi < self.fs / 2 or amp < 0:
                raise SynthError(f"invalid rhythm {(lo, hi, amp)}")
        if not 0 <= self.component_presence <= 1:
            raise SynthError("component_presence must lie in [0, 1]")


def band_mask(n: int, fs: float, band) -> np.ndarray:
    f = np.fft.rfftfreq(n, 1 / fs)
    return (f >= band[0]) & (f <= band[1])


def template(n_samples: int, fs: float, band) -> np.ndarray:
    """Unit-RMS negative ramp steepening toward the epoch end, band-limited.

    The ramp is the negated integral of a Gaussian centred at the last
    sample; the result is restricted to ``band`` by zeroing DFT bins, so all
    of its energy lies inside the band.
    """
    t = np.arange(n_samples) / fs
    T = n_samples / fs
    g = np.exp(-0.5 * ((t - T) / (0.35 * T)) ** 2)
    s = -np.cumsum(g)
    s -= s.mean()
    S = np.fft.rfft(s)
    S[~band_mask(n_samples, fs, band)] = 0
    s = np.fft.irfft(S, n_samples)
    rms = np.sqrt(np.mean(s ** 2))
    if rms == 0:
        raise SynthError(f"band {band} holds no DFT bin at n={n_samples}, fs={fs}")
    return s / rms


def in_band_energy(s, fs, band) -> float:
    S = np.abs(np.fft.rfft(s)) ** 2
    return float(S[band_mask(len(s), fs, band)].sum() / S.sum())


def pink_noise(rng, shape, fs) -> np.ndarray:
    """Unit-variance 1/f noise along the last axis (spectrally shaped white noise)."""
    n = shape[-1]
    W = np.fft.rfft(rng.standard_normal(shape), axis=-1)
    f = np.fft.rfftfreq(n, 1 / fs)
    scale = np.zeros_like(f)
    scale[1:] = 1 / np.sqrt(f[1:])
    x = np.fft.irfft(W * scale, n, axis=-1)
    return x / x.std(axis=-1, keepdims=True)


@dataclass
class Truth:
    spec: dict
    s: np.ndarray
    pattern: np.ndarray
    gains: np.ndarray
    noise_mixing: np.ndarray
    amplitude: float
    extra: list = field(default_factory=list)
    lags: np.ndarray | None = None

    def to_json(self) -> str:
        d = {"spec": self.spec, "s": self.s.tolist(), "pattern": self.pattern.tolist(),
             "gains": self.gains.tolist(), "noise_mixing": self.noise_mixing.tolist(),
             "amplitude": self.amplitude,
             "extra_components": [{"s": e.tolist(), "pattern": p.tolist()}
                                  for e, p in self.extra],
             "lags_s": [] if self.lags is None else self.lags.tolist()}
        return json.dumps(d, indent=2, sort_keys=True)


def generate(spec: SynthSpec):
    """Movement and rest :class:`EpochSet` plus the generator :class:`Truth`.

    Every random draw derives from ``spec.seed``: one stream for the
    fixed mixing quantities and one sub-stream per trial.
    """
    C, Ns, n = spec.n_channels, spec.n_samples, spec.n_trials
    root = np.random.SeedSequence(spec.seed)
    fixed_seq, *trial_seqs = root.spawn(1 + 2 * n)
    rng = np.random.default_rng(fixed_seq)
    s = template(Ns, spec.fs, spec.template_band)
    if spec.mixing is None:
        pattern = 0.5 + rng.random(C)
    else:
        pattern = np.asarray(spec.mixing, dtype=float)
    q = spec.n_noise_sources or C
    A2 = rng.standard_normal((C, q)) / np.sqrt(q)
    gains = pattern[:, None] * (1 + spec.gain_jitter * rng.standard_normal((C, n)))
    extras = []
    for lo, hi, a in spec.extra_components:
        z = rng.standard_normal(C)
        extras.append((template(Ns, spec.fs, (lo, hi)), a * z / np.sqrt(np.mean(z ** 2))))
    trial_rng = np.random.default_rng(root.spawn(1)[0])
    lags = trial_rng.standard_normal(n) * spec.latency_jitter_s
    present = trial_rng.random((len(extras), n)) < spec.component_presence
    freqs = np.fft.rfftfreq(Ns, 1 / spec.fs)

    def shifted(x, lag):
        if lag == 0:
            return x
        return np.fft.irfft(np.fft.rfft(x) * np.exp(-2j * np.pi * freqs * lag), Ns)

    def noise(seq):
        r = np.random.default_rng(seq)
        pink = A2 @ pink_noise(r, (q, Ns), spec.fs)
        pink /= np.sqrt(np.mean(pink ** 2))
        white = r.standard_normal((C, Ns))
        wf = spec.white_fraction
        out = np.sqrt(1 - wf) * pink + np.sqrt(wf) * white
        for lo, hi, amp in spec.rhythm_noise:
            R = np.fft.rfft(r.standard_normal(Ns))
            R[~band_mask(Ns, spec.fs, (lo, hi))] = 0
            x = np.fft.irfft(R, Ns)
            z = r.standard_normal(C)
            out += amp * np.outer(z / np.sqrt(np.mean(z ** 2)), x / np.sqrt(np.mean(x ** 2)))
        return out

    # noise has unit mean power per channel, so the amplitude fixes the RMS ratio
    amp = spec.snr / np.sqrt(np.mean(pattern ** 2))
    move = np.empty((C, Ns, n))
    rest = np.empty((C, Ns, n))
    for j in range(n):
        sig = gains[:, j:j + 1] * shifted(s, lags[j])
        for k, (e, pat) in enumerate(extras):
            if present[k, j]:
                sig = sig + pat[:, None] * shifted(e, lags[j])
        move[:, :, j] = amp * sig + noise(trial_seqs[j])
        rest[:, :, j] = noise(trial_seqs[n + j])
    names = spec.channel_names or tuple(f"ch{i}" for i in range(C))
    window = (-Ns / spec.fs, 0.0)
    me = EpochSet(move, spec.fs, names, "movement", window)
    re = EpochSet(rest, spec.fs, names, "rest", window)
    return me, re, Truth(asdict(spec), s, pattern, gains, A2, float(amp),
                         [(e, p) for e, p in extras], lags)


def write_dataset(spec: SynthSpec, out_dir, format: str = "packed-binary") -> Path:
    """Write ``movement/``, ``rest/`` and ``truth.json`` under ``out_dir``."""
    out = Path(out_dir)
    move, rest, truth = generate(spec)
    out.mkdir(parents=True, exist_ok=True)
    save_epochs(move, out / "movement", format)
    save_epochs(rest, out / "rest", format)
    (out / "truth.json").write_text(truth.to_json())
    return out


def generate_trajectory(kind: str, onset_s: float, fs: float = 256.0, noise_sd: float = 0.0,
                        seed: int = 0, duration_s: float | None = None,
                        params: tuple | None = None, rise_s: float = 0.1,
                        trial_id: int = 0) -> Trajectory:
    """Synthetic trajectory with a known onset.

    ``limb``: logistic rise to 1 with time constant ``rise_s``, shifted so
    it reaches 0.2 of its final value exactly at ``onset_s``.
    ``hand``: Gaussian bump ``a*exp(-((x-b)/c)**2)+d`` with ``params``
    (default ``(0.5, onset_s*fs, 40, 0)``), ``x`` in samples.
    ``rest``: zero plus noise.
    """
    if duration_s is None:
        duration_s = onset_s + 3.0
    n = int(round(duration_s * fs))
    if not 0 <= onset_s * fs < n:
        raise SynthError("onset outside the trajectory")
    x = np.arange(n, dtype=float)
    if kind == "limb":
        tau = rise_s * fs
        centre = onset_s * fs + tau * np.log(4.0)
        y = 1 / (1 + np.exp(-(x - centre) / tau))
    elif kind == "hand":
        a, b, c, d = params if params is not None else (0.5, onset_s * fs, 40.0, 0.0)
        y = a * np.exp(-((x - b) / c) ** 2) + d
    elif kind == "rest":
        y = np.zeros(n)
    else:
        raise SynthError(f"unknown trajectory kind {kind!r}")
    if noise_sd > 0:
        y = y + noise_sd * np.random.default_rng(seed).standard_normal(n)
    return Trajectory(y, fs, trial_id)
