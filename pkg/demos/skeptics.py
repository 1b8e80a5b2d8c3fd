"""
Betting against forecasts
=========================

A skeptic starts with unit capital and bets on each outcome at the odds the
forecaster announces. Against honest forecasts no skeptic gets rich. A
forecaster stuck at 0.5 on a 0.7 coin is exposed quickly by the SLLN bettor,
while the mixture skeptic, hedged over many stake sizes, moves slowly.
"""

import numpy as np

from defensive_forecasting import SLLNSkeptic, make_skeptic
from defensive_forecasting.harness.config import default_kernel

rng = np.random.default_rng(0)
kernel = default_kernel("forecast")
N = 3000

# %%
# Outcomes are Bernoulli(0.7). One forecaster tells the truth, the other
# always says 0.5.
ys = (rng.random(N) < 0.7).astype(int)
xs = rng.uniform(-1, 1, (N, 1))


def final_capital(p):
    sk = {"slln": SLLNSkeptic(), "mixture": make_skeptic("mixture", kernel)}
    P = np.array([1 - p, p])
    for x, y in zip(xs, ys):
        for s in sk.values():
            s.observe(x, P, int(y))
    return {name: s.capital for name, s in sk.items()}


# %%
# The mixture skeptic starts at pi^2 / 6 rather than one: it stakes 1/k^2
# on each of its levels k = 1, 2, ...
for p in (0.7, 0.5):
    caps = final_capital(p)
    print(f"forecast {p}: " + ", ".join(f"{k}={v:.3g}" for k, v in caps.items()))
