"""Benchmark suites.  Each suite plays the games it needs, checks its
inequalities at fixed tolerances and returns a :class:`SuiteResult` whose
rows go straight into the metrics CSV.

The suites are shared by ``defensive-forecasting bench`` and the acceptance
tests, so both check exactly the same thing.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from ..decision import LossSpec, choice, expected_loss
from ..forecaster import ForecastState
from ..kernel import Gaussian, Kronecker, Product, imbedding_constant, unit_residual_kernel
from ..metrics import (
    calibration_bins,
    fit_rule_norm,
    hoeffding_band,
    kernel_discrepancy,
    random_test_function,
    regret,
    residual_slack,
)
from ..points import ForecastPoint
from ..reference import ReferenceForecaster
from ..skeptic import make_skeptic
from ..solvers import simplex_grid
from ..transcript import Transcript
from .config import RuleSpec, RunConfig
from .game import constant_forecaster_config, run_game

TOL_NEUTRAL = 1e-6
SLACK_PER_ROUND = 1e-6  # neutrality slack carried into every bound

# (label, stream dict); the first two streams ignore the seed
NEUTRALITY_STREAMS = (
    ("alternating_parity", {"kind": "alternating_parity"}),
    ("sign_flip_adversary", {"kind": "sign_flip_adversary"}),
    ("bernoulli(0.3)", {"kind": "bernoulli", "theta": 0.3}),
    ("bernoulli(0.5)", {"kind": "bernoulli", "theta": 0.5}),
    ("bernoulli(0.7)", {"kind": "bernoulli", "theta": 0.7}),
    ("logistic_rule", {"kind": "logistic_rule", "weights": [2.0]}),
)
DETERMINISTIC = ("alternating_parity", "sign_flip_adversary")


@dataclass
class SuiteResult:
    name: str
    passed: bool
    summary: str
    rows: list = field(default_factory=list)
    elapsed_s: float = 0.0

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.summary}"


def _row(metric, params, N, statistic, bound):
    ratio = None if bound in (None, 0) else statistic / bound
    return {"metric": metric, "params": params, "N": N, "statistic": statistic, "bound": bound, "ratio": ratio}


def _params(**kw) -> str:
    return ";".join(f"{k}={v}" for k, v in kw.items())


# ---------------------------------------------------------------------------
# Forecast-mode runs shared by several suites.
# ---------------------------------------------------------------------------


@dataclass
class ForecastRun:
    stream: str
    seed: int
    config: RunConfig
    transcript: Transcript


def forecast_runs(rounds: int = 2000, seeds=range(5), skeptics=("mixture",)) -> list[ForecastRun]:
    """Defensive forecasts on every neutrality stream and seed.  Streams that
    ignore the seed are played once."""
    runs = []
    for label, stream in NEUTRALITY_STREAMS:
        for seed in (list(seeds)[:1] if label in DETERMINISTIC else seeds):
            cfg = RunConfig.from_dict({"stream": stream, "rounds": rounds, "seed": int(seed), "skeptics": list(skeptics)})
            runs.append(ForecastRun(label, int(seed), cfg, run_game(cfg)))
    return runs


def _certificates(t: Transcript) -> np.ndarray:
    return np.array([np.nan if r.cert is None else r.cert for r in t.rounds])


def neutrality_suite(runs: list[ForecastRun], tol: float = TOL_NEUTRAL, target_s: float = 60.0) -> SuiteResult:
    """Every round's forecast leaves the Skeptic a gain of at most ``tol``;
    on the two-class path ``|S(p)| <= binary_tol`` or ``p`` is on the boundary."""
    rows, bad, slow = [], 0, 0
    for run in runs:
        t = run.transcript
        cert = _certificates(t)
        ok = np.isfinite(cert) & (cert <= tol)
        if t.meta["m"] == 2:
            p = t.P[:, 1]
            # the certificate is max_y 2 (y - p) S(p) <= 2 |S(p)|
            ok &= (cert <= 2.0 * run.config.binary_tol * (1 + 1e-12)) | (p == 0.0) | (p == 1.0)
        bad += int((~ok).sum())
        elapsed = t.meta["elapsed_s"]
        slow += elapsed > target_s
        rows.append(_row("neutrality", _params(stream=run.stream, seed=run.seed, elapsed_s=f"{elapsed:.2f}"), len(t), float(np.nanmax(cert)), tol))
    worst = max(r["statistic"] for r in rows)
    summary = f"{len(runs)} runs, worst certificate {worst:.3e} (tol {tol:.0e}), {bad} violating rounds"
    if slow:
        summary += f", {slow} runs over the {target_s:.0f} s runtime target"
    return SuiteResult("neutrality", bad == 0, summary, rows)


def discrepancy_suite(runs: list[ForecastRun], n_functions: int = 20) -> SuiteResult:
    """Random representer test functions against ``2 c_F |f| sqrt(N)``."""
    rows, worst, fails = [], 0.0, 0
    for i, run in enumerate(runs):
        t = run.transcript
        N = len(t)
        kernel = run.config.kernel
        rng = np.random.default_rng([run.seed, i, 4])
        ratios = []
        for _ in range(n_functions):
            f = random_test_function(kernel, rng, d=t.X.shape[1], m=t.meta["m"])
            stat, bound, ratio = kernel_discrepancy(t, f)
            fails += not stat < bound + N * SLACK_PER_ROUND
            ratios.append((ratio, stat, bound))
        ratio, stat, bound = max(ratios)
        worst = max(worst, ratio)
        rows.append(_row("kernel_discrepancy", _params(stream=run.stream, seed=run.seed, functions=n_functions), N, stat, bound))
    return SuiteResult("discrepancy", fails == 0, f"{len(runs) * n_functions} test functions, max ratio {worst:.3f}, {fails} over the bound", rows)


def capital_suite(runs: list[ForecastRun], rounds: int = 2000, seeds=range(20), band=(0.1, 0.25)) -> SuiteResult:
    """Quadratic capital of defensive runs stays below ``n * 1e-6``; a constant
    0.9 forecaster on fair coins is caught at rate about ``0.16 N^2``."""
    rows, over = [], 0
    for run in runs:
        caps = np.array(run.transcript.capitals("quadratic"))
        n = np.arange(1, caps.size + 1)
        over += int((caps > n * SLACK_PER_ROUND).sum())
        rows.append(_row("quadratic_capital", _params(stream=run.stream, seed=run.seed), caps.size, float(caps.max()), caps.size * SLACK_PER_ROUND))
    ratios = []
    for seed in seeds:
        base = RunConfig.from_dict({
            "stream": {"kind": "bernoulli", "theta": 0.5}, "rounds": rounds, "seed": int(seed),
            "kernel": unit_residual_kernel().to_dict(), "skeptics": ["quadratic"],
        })
        t = run_game(constant_forecaster_config(base, [0.1, 0.9]))
        S = t.capitals("quadratic")[-1]
        ratios.append(S / rounds**2)
        rows.append(_row("miscalibrated_capital_over_N2", _params(forecast=0.9, seed=seed), rounds, S / rounds**2, band[1]))
    lo_hi_ok = all(band[0] <= r <= band[1] for r in ratios)
    summary = (
        f"{over} prefixes above n*1e-6 in {len(runs)} defensive runs; constant 0.9: S/N^2 in "
        f"[{min(ratios):.3f}, {max(ratios):.3f}] (band {band[0]}-{band[1]})"
    )
    return SuiteResult("capital", over == 0 and lo_hi_ok, summary, rows)


def mixture_suite(runs: list[ForecastRun], tol: float = TOL_NEUTRAL) -> SuiteResult:
    """The mixture starts at pi^2/6 and never gains more than ``tol`` a round."""
    rows, worst_jump, start_err = [], -math.inf, 0.0
    for run in runs:
        m = run.transcript.meta["m"]
        initial = make_skeptic("mixture", run.config.kernel, m).capital
        start_err = max(start_err, abs(initial - math.pi**2 / 6))
        caps = np.concatenate([[initial], run.transcript.capitals("mixture")])
        jump = float(np.diff(caps).max())
        worst_jump = max(worst_jump, jump)
        rows.append(_row("mixture_max_increment", _params(stream=run.stream, seed=run.seed), len(caps) - 1, jump, tol))
    ok = start_err <= 1e-12 and worst_jump <= tol
    return SuiteResult("mixture", ok, f"|K_0 - pi^2/6| = {start_err:.1e}, largest one-round gain {worst_jump:.3e} (tol {tol:.0e})", rows)


# ---------------------------------------------------------------------------
# Decision-mode suites.
# ---------------------------------------------------------------------------

REGRET_PREFIXES = (250, 500, 1000, 2000)


def regret_cases():
    """(label, stream, loss, benchmark rules) for the regret suite."""
    binary_rules = [RuleSpec("constant", gamma=g) for g in (0.0, 0.3, 0.5, 0.7, 1.0)]
    binary_rules += [RuleSpec("logistic", weights=[2.0]), RuleSpec("logistic", weights=[-1.0], bias=0.5)]
    logistic = {"kind": "logistic_rule", "weights": [2.0]}
    brier_rules = [RuleSpec("constant", gamma=g) for g in ([1 / 3, 1 / 3, 1 / 3], [0.2, 0.3, 0.5], [0.0, 0.0, 1.0])]
    brier_rules.append(RuleSpec("logistic", weights=[[1.0], [0.0], [-1.0]], bias=[0.0, 0.0, 0.5]))
    cover_rules = [RuleSpec("constant", gamma=g) for g in ([0.5, 0.5], [1.0, 0.0], [0.0, 1.0], [0.3, 0.7])]
    cover_rules.append(RuleSpec("logistic", weights=[[1.0], [-1.0]], bias=[0.0, 0.0]))
    return [
        ("absolute", logistic, {"kind": "absolute"}, binary_rules),
        ("quadratic", logistic, {"kind": "quadratic"}, binary_rules),
        ("brier", {"kind": "bernoulli", "theta": [0.2, 0.3, 0.5]}, {"kind": "brier", "classes": 3}, brier_rules),
        ("cover", {"kind": "bernoulli", "theta": [0.1, 0.2, 0.3, 0.4]}, {"kind": "cover", "stocks": 2}, cover_rules),
        ("absolute/sign_flip", {"kind": "sign_flip_adversary"}, {"kind": "absolute"}, binary_rules),
    ]


def _rule_grid(t: Transcript, n: int = 200):
    lo, hi = t.X.min(axis=0), t.X.max(axis=0)
    if t.X.shape[1] == 1:
        return np.linspace(lo[0], hi[0], n)[:, None]
    return np.random.default_rng(7).uniform(lo, hi, size=(n, t.X.shape[1]))


def regret_suite(rounds: int = 2000, seed: int = 0, max_growth: float = 1.7, prefixes=REGRET_PREFIXES) -> SuiteResult:
    """Regret against constant and smooth rules stays under the bound, and
    grows sublinearly over the doubling prefixes."""
    rows, over, growth_fail, worst = [], 0, 0, -math.inf
    prefixes = [p for p in prefixes if p <= rounds] or [rounds]
    worst_growth = -math.inf
    for label, stream, loss_d, rules in regret_cases():
        cfg = RunConfig.from_dict({"stream": stream, "loss": loss_d, "mode": "decide", "rounds": rounds, "seed": seed})
        t = run_game(cfg)
        loss = cfg.loss
        c_F = imbedding_constant(cfg.kernel)
        grid = _rule_grid(t)
        check = _rule_grid(t, 1000)
        for rs in rules:
            rule = rs.build(loss)
            fit = fit_rule_norm(rule, loss, cfg.kernel, grid, check)
            eta = residual_slack(fit.max_residual, loss.c_lambda, c_F, len(t))
            rep = regret(t, rule, loss, c_F, fit.norm, eta)
            bound = rep.bound + len(t) * SLACK_PER_ROUND
            over += not rep.regret <= bound
            worst = max(worst, rep.regret / bound)
            name = rs.to_dict()
            rows.append(_row("regret", _params(loss=label, rule=name, norm=f"{fit.norm:.4g}", eta=f"{eta:.3g}"), len(t), rep.regret, bound))
            # sublinear growth over doubling prefixes
            prev = None
            for N in prefixes:
                r = regret(t.slice(0, N), rule, loss).regret
                if prev is not None:
                    g = r / max(prev, 1.0)
                    worst_growth = max(worst_growth, g)
                    growth_fail += not g <= max_growth
                    rows.append(_row("regret_growth", _params(loss=label, rule=name, prefix=N // 2), N, g, max_growth))
                prev = r
    summary = f"max regret/bound {worst:.3f}, {over} over the bound; max growth ratio {worst_growth:.3f} (limit {max_growth}), {growth_fail} above"
    return SuiteResult("regret", over == 0 and growth_fail == 0, summary, rows)


def randomization_suite(n_runs: int = 100, rounds: int = 1000, delta: float = 0.01, need: int = 95, seed: int = 0) -> SuiteResult:
    """Sampled predictions: the realised loss difference stays within the
    Hoeffding band in at least ``need`` of ``n_runs`` plays."""
    rows, inside = [], 0
    for s in range(seed, seed + n_runs):
        cfg = RunConfig.from_dict({
            "stream": {"kind": "logistic_rule", "weights": [2.0]}, "loss": {"kind": "absolute"}, "mode": "decide",
            "rounds": rounds, "seed": s, "randomize": True,
            "benchmark": {"kind": "logistic", "weights": [2.0], "bias": 0.0},
        })
        t = run_game(cfg)
        dev, band = hoeffding_band(t, delta, cfg.loss)
        inside += abs(dev) <= band
        rows.append(_row("hoeffding_deviation", _params(seed=s, delta=delta), rounds, abs(dev), band))
    return SuiteResult("randomization", inside >= need, f"{inside}/{n_runs} plays within the band (need {need})", rows)


# ---------------------------------------------------------------------------
# Choice functions.
# ---------------------------------------------------------------------------

CHOICE_LOSSES = (
    LossSpec("absolute"),
    LossSpec("quadratic"),
    LossSpec("brier", classes=3),
    LossSpec("cover", stocks=2),
    LossSpec("cover", stocks=3),
)


def _brute_force_grid(loss: LossSpec, n: int = 10_000):
    """About ``n`` candidate predictions and the covering radius of the grid."""
    if loss.gamma_dim == 0:
        g = np.linspace(0.0, 1.0, n)
        return g, 0.5 / (n - 1)
    K = loss.gamma_dim
    res = 1
    while math.comb(res + K, K - 1) <= n:
        res += 1
    grid = np.asarray(simplex_grid(K, res))
    return grid, math.sqrt(K) / res


def _lipschitz(loss: LossSpec) -> float:
    """Bound on the gradient norm of the expected loss in ``gamma``."""
    if loss.kind == "absolute":
        return 1.0
    if loss.kind == "quadratic":
        return 2.0
    if loss.kind == "brier":
        return 2.0 * math.sqrt(2.0)
    lo, hi = loss.clamp
    return math.sqrt(loss.gamma_dim) * hi / lo


def choice_suite(n_cases: int = 1000, seed: int = 0) -> SuiteResult:
    """Choice outputs are within ``eps`` of a brute-force grid minimum of the
    expected loss, and the two-class absolute loss gives exact 0/1 answers
    away from 1/2."""
    rng = np.random.default_rng(seed)
    grids = {id(loss): _brute_force_grid(loss) for loss in CHOICE_LOSSES}
    rows, fails, worst = [], 0, -math.inf
    x = np.zeros(1)
    for i in range(n_cases):
        loss = CHOICE_LOSSES[i % len(CHOICE_LOSSES)]
        P = rng.dirichlet(np.full(loss.m, 0.5))
        eps = 2.0 ** -int(rng.integers(1, 21))
        grid, radius = grids[id(loss)]
        g = choice(loss, x, P, eps)
        mine = expected_loss(loss, x, g, P)
        best = float((loss.losses(grid) @ P).min())
        slack = _lipschitz(loss) * radius
        excess = mine - best
        # above: eps-optimality; below: a grid minimum cannot beat the true one by more than the slack
        ok = excess <= eps + 1e-12 and excess >= -slack - 1e-12
        fails += not ok
        worst = max(worst, excess / eps)
        if i < 50 or not ok:
            rows.append(_row("choice_excess", _params(loss=loss.kind, K=loss.m, case=i, eps=eps), 1, excess, eps))
    exact = []
    absolute = LossSpec("absolute")
    for n in range(1, 31):
        for p1, want in ((0.2, 0.0), (0.7, 1.0)):
            got = choice(absolute, x, np.array([1.0 - p1, p1]), 2.0**-n)
            exact.append(float(got) == want)
            fails += float(got) != want
    rows.append(_row("choice_exact_cases", _params(p1="0.2;0.7", eps="2^-1..2^-30"), len(exact), float(sum(exact)), float(len(exact))))
    return SuiteResult("choice", fails == 0, f"{n_cases} random cases, max excess/eps {worst:.3f}; {sum(exact)}/{len(exact)} exact 0/1 cases", rows)


# ---------------------------------------------------------------------------
# Calibration on the alternating stream.
# ---------------------------------------------------------------------------


def parity_kernel():
    """Narrow Gaussian on the parity datum, so the two parities never mix."""
    return Product(x=Gaussian(0.1), p=Gaussian(1.0), y=Kronecker())


def calibration_suite(rounds: int = 10_000, limit: float = 0.05) -> SuiteResult:
    """Per-parity mean ``|P_n(1) - frequency|`` over the second half, and the
    binned table of the constant 1/2 forecaster (calibrated but useless)."""
    cfg = RunConfig.from_dict({"stream": "alternating_parity", "rounds": rounds, "kernel": parity_kernel().to_dict()})
    t = run_game(cfg)
    p, y = t.P[:, 1], t.Y
    n = np.arange(1, rounds + 1)
    tail = n > rounds - rounds // 2
    rows, devs = [], []
    for parity in (0, 1):
        sel = tail & (n % 2 == parity)
        dev = float(np.abs(p[sel] - y[sel].mean()).mean())
        devs.append(dev)
        rows.append(_row("parity_group_deviation", _params(parity=parity, rounds=f"{rounds - rounds // 2 + 1}-{rounds}"), int(sel.sum()), dev, limit))
    half = run_game(constant_forecaster_config(cfg, [0.5, 0.5]))
    bins = calibration_bins(half, 0.1, 1)
    binned = max(b.deviation for b in bins)
    rows.append(_row("constant_half_binned_deviation", _params(width=0.1, bins=len(bins)), len(half), binned, None))
    ok = max(devs) <= limit and binned == 0.0
    return SuiteResult(
        "calibration", ok,
        f"parity-group deviations {devs[0]:.3e} / {devs[1]:.3e} (limit {limit}); constant 1/2: {len(bins)} bin, deviation {binned}",
        rows,
    )


# ---------------------------------------------------------------------------
# Incremental engine against the from-scratch reference.
# ---------------------------------------------------------------------------


def oracle_suite(n_games: int = 100, rounds: int = 20, seed: int = 0) -> SuiteResult:
    """Random small games: cached forecasts equal the reference's bit for bit."""
    rows, mismatched = [], 0
    for g in range(seed, seed + n_games):
        rng = np.random.default_rng([g, 9])
        m = int(rng.integers(2, 4))
        d = int(rng.integers(1, 3))
        kernel = Product(x=Gaussian(float(rng.uniform(0.3, 2.0))), p=Gaussian(float(rng.uniform(0.3, 2.0))), y=Kronecker())
        fast, ref = ForecastState(kernel, m), ReferenceForecaster(kernel, m)
        diff = 0
        for _ in range(rounds):
            x = rng.uniform(-1.0, 1.0, d)
            P1, P2 = fast.defensive_forecast(x), ref.forecast(x)
            diff += not np.array_equal(P1, P2)
            y = int(rng.integers(m))
            fast.observe(x, P1, y)
            ref.observe(ForecastPoint(x, P2, y))
        mismatched += diff > 0
        rows.append(_row("oracle_mismatched_rounds", _params(game=g, m=m, d=d), rounds, float(diff), 0.0))
    return SuiteResult("oracle", mismatched == 0, f"{n_games} games of {rounds} rounds, {mismatched} with any differing forecast", rows)


# ---------------------------------------------------------------------------
# Registry used by the CLI.
# ---------------------------------------------------------------------------

ALIASES = {"theorem4": "discrepancy", "theorem5": "regret", "hoeffding": "randomization"}
SUITE_NAMES = ("neutrality", "discrepancy", "capital", "regret", "randomization", "choice", "calibration", "mixture", "oracle")


def run_suite(name: str, rounds: int | None = None, seed: int = 0, runs=None) -> SuiteResult:
    """Run one suite by name; ``rounds`` overrides its horizon."""
    name = ALIASES.get(name, name)
    if name not in SUITE_NAMES:
        raise KeyError(name)
    start = time.perf_counter()
    if name in ("neutrality", "discrepancy", "capital", "mixture"):
        if runs is None:
            runs = forecast_runs(rounds or 2000, range(seed, seed + 5))
        if name == "neutrality":
            res = neutrality_suite(runs)
        elif name == "discrepancy":
            res = discrepancy_suite(runs)
        elif name == "capital":
            res = capital_suite(runs, rounds or 2000, range(seed, seed + 20))
        else:
            res = mixture_suite(runs)
    elif name == "regret":
        res = regret_suite(rounds or 2000, seed)
    elif name == "randomization":
        res = randomization_suite(rounds=rounds or 1000, seed=seed)
    elif name == "choice":
        res = choice_suite(seed=seed)
    elif name == "calibration":
        res = calibration_suite(rounds or 10_000)
    else:
        res = oracle_suite(rounds=rounds or 20, seed=seed)
    res.elapsed_s = time.perf_counter() - start
    return res
