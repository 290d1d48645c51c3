"""Movement onsets from limb and hand trajectories, and fake onsets for rest."""
from fbtrca.onset import fake_onset_rest, locate_onset_fit, locate_onset_limb
from fbtrca.synth import generate_trajectory

limb = generate_trajectory("limb", onset_s=2.0, fs=256, noise_sd=0.01, seed=0)
print("limb:", locate_onset_limb(limb), "(true onset 512)")

hand = generate_trajectory("hand", onset_s=2.0, fs=256, noise_sd=0.005, seed=0)
r = locate_onset_fit(hand)
print("hand:", r.status, r.onset_index, "fit a,b,c,d =", [round(p, 3) for p in r.fit_params])

flat = generate_trajectory("hand", onset_s=2.0, params=(0.01, 512, 40, 0))
print("tiny bump:", locate_onset_fit(flat).status)

rest = generate_trajectory("rest", onset_s=5.0, duration_s=6.0, noise_sd=0.01)
print("rest:", fake_onset_rest(rest), "(beep 2 s + 2.5 s = sample 1152)")
