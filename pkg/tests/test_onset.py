import numpy as np
import pytest

from fbtrca.data import Trajectory
from fbtrca.onset import (OnsetError, OnsetResult, fake_onset_rest, fit_gaussian,
                          locate_onset_fit, locate_onset_limb, read_report, smooth_diff,
                          write_report)
from fbtrca.synth import generate_trajectory


def test_limb_onset_exact_on_clean_logistic():
    t = generate_trajectory("limb", 2.0, fs=256)
    r = locate_onset_limb(t)
    assert r.status == "accepted"
    assert r.onset_index == 512


@pytest.mark.parametrize("seed", range(5))
def test_limb_onset_within_tolerance_with_noise(seed):
    t = generate_trajectory("limb", 2.0, fs=256, noise_sd=0.01, seed=seed)
    r = locate_onset_limb(t)
    assert r.status == "accepted"
    assert abs(r.onset_index - 512) <= 0.05 * 256


def test_step_onset():
    y = np.zeros(300)
    y[100:] = 1.0
    r = locate_onset_limb(Trajectory(y, 100.0, 4))
    assert (r.onset_index, r.status, r.trial_id) == (100, "accepted", 4)


def test_flat_limb_rejected_by_variance():
    r = locate_onset_limb(generate_trajectory("rest", 2.0, noise_sd=0.01))
    assert r.status == "rejected-variance" and r.onset_index is None


def test_smoothed_diff_gate(rng):
    t = generate_trajectory("limb", 2.0)
    assert locate_onset_limb(t, gate="smoothed-diff", var_threshold=1e-9).status == "accepted"
    assert locate_onset_limb(t, gate="smoothed-diff").status == "rejected-variance"
    with pytest.raises(OnsetError):
        locate_onset_limb(t, gate="other")


def test_smooth_diff_shape_and_window():
    t = generate_trajectory("limb", 1.0, fs=100)
    assert smooth_diff(t).shape == (t.samples.size - 1,)
    with pytest.raises(OnsetError):
        smooth_diff(t, window_length=30)


def test_gaussian_fit_recovers_parameters():
    t = generate_trajectory("hand", 2.0, fs=256, noise_sd=0.005, seed=1)
    a, b, c, d = fit_gaussian(t.samples)
    assert a == pytest.approx(0.5, abs=0.01)
    assert b == pytest.approx(512, abs=1)
    assert c == pytest.approx(40, abs=1)
    assert d == pytest.approx(0, abs=0.01)


def test_hand_accepted_with_onset_before_peak():
    t = generate_trajectory("hand", 2.0, fs=256)
    r = locate_onset_fit(t)
    assert r.status == "accepted"
    assert 512 - 60 < r.onset_index < 512
    assert len(r.fit_params) == 4


def test_small_amplitude_rejected():
    t = generate_trajectory("hand", 2.0, params=(0.01, 512, 40, 0))
    r = locate_onset_fit(t)
    assert r.status == "rejected-fit" and r.onset_index is None


def test_wide_gaussian_rejected():
    t = generate_trajectory("hand", 2.0, params=(0.5, 512, 150, 0))
    assert locate_onset_fit(t).status == "rejected-fit"


def test_all_zero_rejected_by_fit():
    assert locate_onset_fit(Trajectory(np.zeros(500), 256.0)).status == "rejected-fit"


def test_fake_rest_onset():
    t = generate_trajectory("rest", 5.0, fs=256, duration_s=6.0, noise_sd=0.01)
    r = fake_onset_rest(t)
    assert (r.status, r.onset_index) == ("accepted", 1152)


def test_fake_rest_rejects_movement_and_short():
    t = generate_trajectory("limb", 2.0, fs=256, duration_s=6.0)
    assert fake_onset_rest(t).status == "rejected-variance"
    with pytest.raises(OnsetError):
        fake_onset_rest(Trajectory(np.zeros(100), 256.0))


def test_result_invariant():
    with pytest.raises(OnsetError):
        OnsetResult(0, None, "accepted")
    with pytest.raises(OnsetError):
        OnsetResult(0, 5, "rejected-fit")
    with pytest.raises(OnsetError):
        OnsetResult(0, None, "maybe")


def test_report_roundtrip(tmp_path):
    rs = [locate_onset_fit(generate_trajectory("hand", 2.0, trial_id=i)) for i in range(2)]
    rs.append(OnsetResult(9, None, "rejected-variance"))
    assert read_report(write_report(rs, tmp_path / "r.csv")) == rs
