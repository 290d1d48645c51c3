"""The three frequency-range settings and the 100-band shifted grid."""
import numpy as np
from scipy import signal

from fbtrca.filterbank import make_bands, make_filterbank, make_shifted_grid

for setting in ("M1", "M2", "M3"):
    bands = make_bands(setting)
    print(setting, ", ".join(f"{b.low_hz:g}-{b.high_hz:g}" for b in bands))

grid = make_shifted_grid()
print(f"\nshifted grid: {len(grid)} bands, first {grid[0].low_hz}-{grid[0].high_hz} Hz, "
      f"last {grid[-1].low_hz}-{grid[-1].high_hz} Hz")

# each band is an order-8 Butterworth applied forward and backward
fs = 256.0
fb = make_filterbank(make_bands("M1")[:3], fs)
for band, sos in zip(fb.bands, fb.design):
    _, h = signal.sosfreqz(sos, [band.low_hz, band.high_hz], fs=fs)
    print(f"{band.low_hz:g}-{band.high_hz:g} Hz: edge gain {20 * np.log10(np.abs(h)).round(2)} dB "
          "(single pass; the zero-phase pass squares it)")

# zero phase: a centred impulse comes out symmetric
imp = np.zeros(int(60 * fs) + 1)
imp[imp.size // 2] = 1.0
y = fb.filter_array(imp, 1)
print(f"impulse response peak offset: {np.argmax(np.abs(y)) - imp.size // 2} samples")
