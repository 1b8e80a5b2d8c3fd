"""Evaluation of transcripts: binned calibration, the kernel
calibration-cum-resolution statistic, regret and the randomisation band."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .decision import LossSpec
from .kernel import Kernel, imbedding_constant
from .points import InputError, PointBatch
from .transcript import Transcript


class DegenerateFunctionError(ValueError):
    """A test function with zero RKHS norm."""


# ---------------------------------------------------------------------------
# Binned calibration.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CalibrationBin:
    bin: int
    lo: float
    hi: float
    count: int
    mean_forecast: float
    frequency: float
    deviation: float


def calibration_bins(t: Transcript, width: float = 0.1, cls: int = 1) -> list[CalibrationBin]:
    """Group rounds by ``P_n(cls)`` into bins of the given width.

    A diagnostic only: indicator bins are discontinuous and carry no
    guarantee, unlike :func:`kernel_discrepancy`.
    """
    if not 0 < width <= 1:
        raise InputError("bin width must lie in (0, 1]")
    if len(t) == 0:
        return []
    p = t.P[:, cls]
    hit = (t.Y == cls).astype(float)
    nbins = int(math.ceil(1.0 / width - 1e-12))
    idx = np.minimum(np.floor(p / width).astype(int), nbins - 1)
    rows = []
    for j in np.unique(idx):
        sel = idx == j
        mf = float(p[sel].mean())
        fr = float(hit[sel].mean())
        rows.append(CalibrationBin(int(j), j * width, min((j + 1) * width, 1.0), int(sel.sum()), mf, fr, abs(fr - mf)))
    return rows


# ---------------------------------------------------------------------------
# Kernel test functions.
# ---------------------------------------------------------------------------


@dataclass
class TestFunction:
    """``f = sum_j coef_j k(anchor_j, .)`` for a finite set of anchors."""

    __test__ = False  # not a pytest class

    kernel: Kernel
    anchors: PointBatch
    coefs: np.ndarray

    def __post_init__(self):
        self.coefs = np.asarray(self.coefs, dtype=float).reshape(-1)
        if len(self.anchors) == 0 or self.coefs.size == 0:
            raise DegenerateFunctionError("empty representer combination")
        if self.coefs.size != len(self.anchors):
            raise InputError("one coefficient per anchor")

    @property
    def norm(self) -> float:
        K = self.kernel.gram(self.anchors, self.anchors)
        return math.sqrt(max(float(self.coefs @ K @ self.coefs), 0.0))

    def __call__(self, points: PointBatch) -> np.ndarray:
        return self.coefs @ self.kernel.gram(self.anchors, points)


def random_test_function(kernel: Kernel, rng: np.random.Generator, d: int, m: int = 2, n_anchors: int = 5, scale: float = 1.0) -> TestFunction:
    """Random anchors ``x ~ U[-scale, scale]^d``, ``P ~ Dirichlet(1)``, uniform ``y``
    with standard normal coefficients."""
    x = rng.uniform(-scale, scale, size=(n_anchors, d))
    P = rng.dirichlet(np.ones(m), size=n_anchors)
    y = rng.integers(0, m, size=n_anchors)
    return TestFunction(kernel, PointBatch(x, P, y), rng.standard_normal(n_anchors))


def kernel_discrepancy(t: Transcript, f: TestFunction) -> tuple[float, float, float]:
    """``(statistic, bound, ratio)`` with statistic
    ``|sum_n f(x_n, P_n, y_n) - sum_y P_n(y) f(x_n, P_n, y)|`` and bound
    ``2 c_F |f| sqrt(N)``."""
    norm = f.norm
    if norm == 0.0:
        raise DegenerateFunctionError("test function has zero norm")
    N = len(t)
    if N == 0:
        return 0.0, 0.0, 0.0
    batch = PointBatch(t.X, t.P, t.Y)
    vals = f(batch.all_outcomes()).reshape(N, batch.m)
    realised = vals[np.arange(N), t.Y]
    expected = (vals * t.P).sum(axis=1)
    stat = abs(float((realised - expected).sum()))
    bound = 2.0 * imbedding_constant(f.kernel) * norm * math.sqrt(N)
    return stat, bound, stat / bound


# ---------------------------------------------------------------------------
# Regret.
# ---------------------------------------------------------------------------

Rule = Callable[[np.ndarray], object]


def as_rule(rule, loss: LossSpec) -> Callable[[np.ndarray], object]:
    """Accept a callable ``x -> gamma``, a constant prediction or a dict keyed
    by ``tuple(x)``."""
    if callable(rule):
        return rule
    if isinstance(rule, dict):
        table = {tuple(float(v) for v in k): g for k, g in rule.items()}

        def lookup(x):
            key = tuple(float(v) for v in np.asarray(x).reshape(-1))
            if key not in table:
                raise InputError(f"rule undefined at x={list(key)}")
            return table[key]

        return lookup
    const = loss.check_gamma(rule)
    return lambda x: const


def rule_predictions(t: Transcript, rule, loss: LossSpec) -> list:
    f = as_rule(rule, loss)
    return [loss.check_gamma(f(np.asarray(r.x))) for r in t.rounds]


def cumulative_losses(t: Transcript, gammas, loss: LossSpec) -> np.ndarray:
    if len(t) == 0:
        return np.zeros(0)
    L = np.vstack([loss.losses(g) for g in gammas])
    return L[np.arange(len(t)), t.Y]


def regret_bound(c_lambda: float, c_F: float, rule_norm: float, N: int, eta: float = 0.0) -> float:
    """``sqrt(c_lambda^2 + 4 c_F^2) (|lambda_D| + eta + 1) sqrt(N) + 1``."""
    return math.sqrt(c_lambda**2 + 4.0 * c_F**2) * (rule_norm + eta + 1.0) * math.sqrt(N) + 1.0


@dataclass(frozen=True)
class RegretReport:
    predictor_loss: float
    rule_loss: float
    regret: float
    bound: float | None


def regret(t: Transcript, rule, loss: LossSpec, c_F: float | None = None, rule_norm: float | None = None, eta: float = 0.0) -> RegretReport:
    """Cumulative loss of the transcript's predictions minus that of ``rule``.

    The bound is filled in when both ``c_F`` and a norm estimate are given.
    """
    if any(r.gamma is None for r in t.rounds):
        raise InputError("transcript has no predictions")
    own = cumulative_losses(t, [loss.check_gamma(r.gamma) for r in t.rounds], loss).sum()
    other = cumulative_losses(t, rule_predictions(t, rule, loss), loss).sum()
    bound = None
    if c_F is not None and rule_norm is not None:
        bound = regret_bound(loss.c_lambda, c_F, rule_norm, len(t), eta)
    return RegretReport(float(own), float(other), float(own - other), bound)


@dataclass(frozen=True)
class RuleFit:
    norm: float  # RKHS norm of the fitted representer combination
    max_residual: float  # max |lambda_D - fit| over the evaluated points
    ridge: float


def _xy_batch(X, m):
    n = X.shape[0]
    return PointBatch(np.repeat(X, m, axis=0), np.full((n * m, m), 1.0 / m), np.tile(np.arange(m), n))


def fit_rule_norm(rule, loss: LossSpec, kernel: Kernel, grid: np.ndarray, check: np.ndarray | None = None, ridges=None) -> RuleFit:
    """Fit ``lambda_D(x, y) = lambda(x, D(x), y)`` by kernel ridge regression on
    ``grid`` (all outcomes per grid point) and report the fit's norm and its
    worst residual on ``check`` (default: the grid).

    The kernel must not depend on the forecast.  Among the candidate ridge
    parameters the one minimising ``norm + residual`` is kept.
    """
    if kernel.depends_on_p:
        raise InputError("rule fitting needs a kernel on (x, y) only")
    f = as_rule(rule, loss)
    m = loss.m
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    check = grid if check is None else np.atleast_2d(np.asarray(check, dtype=float))
    A = _xy_batch(grid, m)
    targets = np.concatenate([loss.losses(loss.check_gamma(f(x)))[0] for x in grid])
    C = _xy_batch(check, m)
    truth = np.concatenate([loss.losses(loss.check_gamma(f(x)))[0] for x in check])
    K = kernel.gram(A, A)
    KC = kernel.gram(A, C)
    scale = float(np.trace(K)) / K.shape[0]
    best = None
    for r in ridges if ridges is not None else 10.0 ** np.arange(-10, 1):
        c = np.linalg.solve(K + r * scale * np.eye(K.shape[0]), targets)
        norm = math.sqrt(max(float(c @ K @ c), 0.0))
        res = float(np.abs(c @ KC - truth).max())
        if best is None or norm + res < best.norm + best.max_residual:
            best = RuleFit(norm, res, float(r))
    return best


def residual_slack(max_residual: float, c_lambda: float, c_F: float, N: int) -> float:
    """The ``eta`` that turns a fit residual into extra norm in the bound.

    Replacing ``lambda_D`` by its fit changes the comparison by at most
    ``2 N max_residual``; dividing by ``sqrt(c_lambda^2 + 4 c_F^2) sqrt(N)``
    expresses that as a norm increment.
    """
    return 2.0 * max_residual * math.sqrt(N) / math.sqrt(c_lambda**2 + 4.0 * c_F**2)


# ---------------------------------------------------------------------------
# Randomised predictions.
# ---------------------------------------------------------------------------


def hoeffding_band(t: Transcript, delta: float, loss: LossSpec) -> tuple[float, float]:
    """``(deviation, band)`` for a transcript carrying sampled predictions.

    deviation = ``sum [lambda(g_n) - lambda(gamma_n)] - sum [lambda(d_n) - lambda(D(x_n))]``
    evaluated at the realised outcomes, band = ``c_lambda sqrt(2 ln(1/delta)) sqrt(N)``.
    """
    if not 0 < delta < 1:
        raise InputError("delta must lie in (0, 1)")
    N = len(t)
    band = loss.c_lambda * math.sqrt(2.0 * math.log(1.0 / delta)) * math.sqrt(N)
    if N == 0:
        return 0.0, band
    for r in t.rounds:
        if r.g is None or r.d is None or r.d_pred is None or r.gamma is None:
            raise InputError(f"round {r.n} carries no sampled predictions")
    col = lambda name: [loss.check_gamma(getattr(r, name)) for r in t.rounds]  # noqa: E731
    dev = (
        cumulative_losses(t, col("g"), loss).sum()
        - cumulative_losses(t, col("gamma"), loss).sum()
        - cumulative_losses(t, col("d"), loss).sum()
        + cumulative_losses(t, col("d_pred"), loss).sum()
    )
    return float(dev), band


# ---------------------------------------------------------------------------
# CSV output.
# ---------------------------------------------------------------------------

CSV_COLUMNS = ("metric", "params", "N", "statistic", "bound", "ratio")


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12g}"
    return str(v)


def write_metrics_csv(path, rows) -> Path:
    """Rows are mappings with keys from :data:`CSV_COLUMNS`; reals use 12
    significant digits."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for row in rows:
            w.writerow([fmt(row.get(c)) for c in CSV_COLUMNS])
    return path
