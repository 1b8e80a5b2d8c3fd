"""
Portfolio selection under log loss
==================================

With two stocks whose price relatives take one of two values, each round
has four possible outcomes. The decision is a portfolio and the loss is
minus the log of the wealth ratio.
"""

import numpy as np

from defensive_forecasting.harness import RunConfig, run_game

# %%
# Outcome order follows the grid {0.5, 2}^2: (lo, lo), (lo, hi), (hi, lo),
# (hi, hi). The first stock doubles more often than the second.
theta = [0.2, 0.1, 0.5, 0.2]
cfg = RunConfig.from_dict({
    "mode": "decide",
    "rounds": 150,
    "loss": {"kind": "cover", "stocks": 2, "clamp": [0.5, 2.0]},
    "stream": {"kind": "bernoulli", "theta": theta},
})
t = run_game(cfg)
gammas = np.array(t.column("gamma"))
print("first portfolios:", np.round(gammas[:3], 3).tolist())
print("last portfolios: ", np.round(gammas[-3:], 3).tolist())

# %%
# Compare log wealth with each single stock held throughout.
rel = cfg.loss.outcomes[t.Y]
print(f"log wealth, ours:    {-np.sum(t.column('loss')):.2f}")
for j in range(2):
    print(f"log wealth, stock {j}: {np.log(rel[:, j]).sum():.2f}")
