import json

import numpy as np
import pytest
from scipy import signal

from fbtrca.data import EpochSet
from fbtrca.filterbank import (BandError, BandSpec, FilterBank, apply_bank, bands_from_json,
                               bands_to_json, design_butterworth, make_bands,
                               make_filterbank, make_shifted_grid, sos_poles)

FS = 256.0


def edges(bands):
    return [(b.low_hz, b.high_hz) for b in bands]


def test_m1_bands():
    b = make_bands("M1", 10)
    assert edges(b)[0] == (0.05, 1.0) and edges(b)[-1] == (9.0, 10.0)
    assert [hi for _, hi in edges(b)] == [float(k) for k in range(1, 11)]


def test_m3_bands_nested():
    b = make_bands("M3", 10)
    assert edges(b) == [(0.05, float(k)) for k in range(1, 11)]


def test_m2_bands_follow_doubling_sequence():
    got = edges(make_bands("M2", 10))
    want = [(0.05, 0.9), (0.9, 1.8), (1.8, 3.6), (2.7, 5.4), (3.6, 7.2), (4.5, 9.0),
            (5.4, 10.0), (6.3, 10.0), (7.2, 10.0), (8.1, 10.0)]
    assert got == want


def test_m1_rejects_inconsistent_m():
    with pytest.raises(BandError):
        make_bands("M1", 5)


def test_shifted_grid():
    g = make_shifted_grid()
    assert len(g) == 100
    e = edges(g)
    assert (0.05, 10.0) in e and (0.5, 1.0) in e
    assert all(lo < hi for lo, hi in e)
    assert e == sorted(e)


def test_bandspec_validation():
    with pytest.raises(BandError):
        BandSpec(2.0, 1.0)
    with pytest.raises(BandError):
        BandSpec(0.05, 12.0)


def test_json_round_trip():
    bands = make_bands("M2", 10)
    assert edges(bands_from_json(bands_to_json(bands))) == edges(bands)
    assert edges(bands_from_json(json.dumps({"setting": "M3", "m": 10}))) == \
        edges(make_bands("M3", 10))


def test_design_passband_and_stopband():
    sos = design_butterworth(BandSpec(1.0, 3.0), FS)
    _, h = signal.sosfreqz(sos, [2.0, 0.1], fs=FS)
    assert abs(h[0]) >= 0.99 and abs(h[1]) <= 0.01


def test_design_rejects_nyquist():
    with pytest.raises(BandError):
        design_butterworth(BandSpec(1.0, 10.0), 20.0)


def test_order_is_prototype_order():
    sos = design_butterworth(BandSpec(1.0, 3.0), FS)
    assert sos.shape == (8, 6)


def _all_bands():
    return make_shifted_grid() + make_bands("M1") + make_bands("M2") + make_bands("M3")


def test_every_band_stable_with_decaying_impulse_response():
    imp = np.zeros(int(200 * FS))
    imp[0] = 1
    for b in _all_bands():
        sos = design_butterworth(b, FS)
        assert np.abs(sos_poles(sos)).max() < 1
        e = np.cumsum(signal.sosfilt(sos, imp) ** 2)
        assert 1 - e[int(120 * FS)] / e[-1] < 1e-6, b


def _trial(x):
    return EpochSet(x[None, None, :].repeat(2, 0).repeat(2, 2).reshape(2, -1, 2), FS,
                    window=(-x.size / FS, 0.0))


def test_sinusoid_pass_and_stop():
    t = np.arange(int(4 * FS)) / FS
    x = np.sin(2 * np.pi * 5 * t)
    fb = make_filterbank([BandSpec(4.0, 6.0), BandSpec(8.0, 10.0)], FS)
    out = apply_bank(fb, _trial(x))
    rms = lambda v: np.sqrt(np.mean(v ** 2))
    assert rms(out[0].data[0, :, 0]) >= 0.9 * rms(x)
    assert rms(out[1].data[0, :, 0]) <= 0.05 * rms(x)


def test_zero_and_linearity(rng):
    fb = make_filterbank(make_bands("M3")[:3], FS)
    a, b = rng.standard_normal((2, 3, 512, 2))
    ea, eb = (EpochSet(v, FS, window=(-2.0, 0.0)) for v in (a, b))
    z = apply_bank(fb, EpochSet(np.zeros_like(a), FS, window=(-2.0, 0.0)))
    assert all(np.all(o.data == 0) for o in z)
    lhs = apply_bank(fb, EpochSet(2.5 * a - 0.5 * b, FS, window=(-2.0, 0.0)))
    ra, rb = apply_bank(fb, ea), apply_bank(fb, eb)
    for k in range(3):
        want = 2.5 * ra[k].data - 0.5 * rb[k].data
        assert np.abs(lhs[k].data - want).max() <= 1e-9 * np.abs(want).max()


def test_output_shape_and_order(rng):
    e = EpochSet(rng.standard_normal((3, 512, 4)), FS, window=(-2.0, 0.0))
    bands = make_bands("M1")
    out = make_filterbank(bands, FS).apply(e)
    assert len(out) == 10 and all(o.data.shape == e.data.shape for o in out)


def test_fs_mismatch_rejected(rng):
    fb = make_filterbank(make_bands("M1")[:1], FS)
    e = EpochSet(rng.standard_normal((2, 256, 2)), 128.0, window=(-2.0, 0.0))
    with pytest.raises(BandError):
        apply_bank(fb, e)


def test_reflect_pad_longer_than_signal(rng):
    fb = FilterBank((BandSpec(1.0, 3.0),), 64.0)
    x = rng.standard_normal((2, 50))
    y = fb.filter_array(x, 0)
    assert y.shape == x.shape and np.all(np.isfinite(y))
