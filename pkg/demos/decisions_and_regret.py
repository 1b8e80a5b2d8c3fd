"""
Decisions from forecasts, and regret against a fixed rule
=========================================================

In decide mode each forecast is turned into an action that is nearly
optimal under it. Here outcomes follow a logistic rule and the action is a
point prediction under absolute loss.
"""

import numpy as np

from defensive_forecasting import regret
from defensive_forecasting.harness import RunConfig, run_game
from defensive_forecasting.metrics import fit_rule_norm, residual_slack

# %%
# A logistic stream with a strong signal.
cfg = RunConfig.from_dict({
    "mode": "decide",
    "rounds": 500,
    "seed": 3,
    "loss": {"kind": "absolute"},
    "stream": {"kind": "logistic_rule", "weights": [4.0]},
})
t = run_game(cfg)
print("mean loss per round:", np.mean(t.column("loss")))

# %%
# Compare with the constant rule that always predicts 1/2. The rule is
# approximated in the kernel's space; the fit error enters the bound as a
# slack term.
X = t.X
grid = np.linspace(X.min(), X.max(), 200)[:, None]
fit = fit_rule_norm(0.5, cfg.loss, cfg.kernel, grid)
eta = residual_slack(fit.max_residual, cfg.loss.c_lambda, t.meta["c_F"], len(t))
rep = regret(t, 0.5, cfg.loss, t.meta["c_F"], fit.norm, eta)
print(f"regret vs 1/2: {rep.regret:.2f}  (bound {rep.bound:.2f})")

# %%
# Against the oracle that knows each outcome the regret is large, as it
# must be: no rule in the space can see the noise.
oracle = {tuple(x): float(y) for x, y in zip(X, t.Y)}
print(f"regret vs oracle: {regret(t, oracle, cfg.loss).regret:.1f}")
