"""
Calibrated binary forecasts on a deterministic stream
=====================================================

The alternating-parity stream emits 0, 1, 0, 1, ... with a constant datum.
A forecaster that looks only at its own past forecasts can still end up
calibrated, and the quadratic capital stays small.
"""

import numpy as np

from defensive_forecasting import calibration_bins
from defensive_forecasting.harness import RunConfig, run_game

# %%
# Play 400 rounds with the default forecast-mode kernel.
cfg = RunConfig.from_dict({"stream": "alternating_parity", "rounds": 400, "skeptics": ["slln"]})
t = run_game(cfg)
p1 = t.P[:, 1]
print("first forecasts:", np.round(p1[:6], 3))
print("last forecasts: ", np.round(p1[-6:], 3))

# %%
# Bucket the forecasts and compare against observed frequencies.
for b in calibration_bins(t, 0.1):
    print(f"bin {b.lo:.1f}-{b.hi:.1f}  count={b.count:4d}  |mean p - freq|={b.deviation:.4f}")

# %%
# Neither skeptic gets rich: the quadratic capital grows at most linearly
# in N, and the SLLN bettor stays bounded.
caps = t.capitals("quadratic")
print(f"quadratic capital / N = {caps[-1] / len(t):.4f}")
print(f"SLLN capital = {t.capitals('slln')[-1]:.4f}")
