"""Skeptic strategies for the testing protocol.

Each round the Skeptic announces a bet ``f: Y -> R`` with ``sum_y P(y) f(y) <= 0``
and its capital moves by ``f(y)`` once the outcome is known.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import special

from .forecaster import ForecastState
from .kernel import Kernel, imbedding_constant
from .points import InputError, as_datum, as_simplex

VALIDITY_TOL = 1e-10


class InvalidBet(RuntimeError):
    """A strategy announced a bet with positive expected value under the forecast."""


class Skeptic:
    """Base class: subclasses implement :meth:`bet` and :meth:`_advance`."""

    name = "skeptic"
    bankruptcy_free = True

    def __init__(self):
        self.capitals: list[float] = []
        self.n = 0

    @property
    def capital(self) -> float:
        raise NotImplementedError

    def bet(self, x, P) -> np.ndarray:
        raise NotImplementedError

    def _advance(self, x, P, y):
        raise NotImplementedError

    def observe(self, x, P, y: int) -> float:
        """Settle one round; returns the new capital."""
        P = np.asarray(P, dtype=float)
        f = self.bet(x, P)
        if float(P @ f) > VALIDITY_TOL:
            raise InvalidBet(f"{self.name}: expected gain {float(P @ f):.3e} under the forecast")
        self._advance(x, P, int(y))
        self.n += 1
        cap = self.capital
        self.capitals.append(cap)
        return cap


class SLLNSkeptic(Skeptic):
    """Average of multiplicative accounts ``K <- K (1 + eps (y - p))`` over
    ``eps in {+-1/2, +-1/4, ..., +-2**-depth}``; binary outcomes only."""

    name = "slln"

    def __init__(self, depth: int = 8):
        super().__init__()
        mags = 2.0 ** -np.arange(1, depth + 1)
        self.eps = np.concatenate([mags, -mags])
        self.accounts = np.ones(self.eps.size)

    @property
    def capital(self) -> float:
        return float(self.accounts.mean())

    def bet(self, x, P):
        P = as_simplex(P, 2)
        slope = float((self.accounts * self.eps).mean())
        return slope * (np.arange(2) - P[1])

    def _advance(self, x, P, y):
        self.accounts = self.accounts * (1.0 + self.eps * (y - P[1]))


class QuadraticSkeptic(Skeptic):
    """Signed capital ``S_N = |sum Psi|^2 - sum |Psi|^2`` of the kernel strategy.

    This is a test statistic rather than a bankruptcy-free account: it starts
    at 0 and can go negative.
    """

    name = "quadratic"
    bankruptcy_free = False

    def __init__(self, kernel: Kernel, m: int = 2):
        super().__init__()
        self.state = ForecastState(kernel, m)

    @property
    def capital(self) -> float:
        return self.state.S

    def bet(self, x, P):
        return self.state.gains(as_datum(x), as_simplex(P, self.state.m)[None, :])[0]

    def _advance(self, x, P, y):
        self.state.observe(x, P, y)

    def growth_ratio(self) -> float:
        """``|sum Psi| / (sqrt(N) log N)``, the empirical constant of the
        ``O(sqrt(N) log N)`` growth rate (undefined for N < 2)."""
        N = len(self.state)
        if N < 2:
            return float("nan")
        norm_sq = max(self.state.S + self.state.sum_residual_sq, 0.0)
        return math.sqrt(norm_sq) / (math.sqrt(N) * math.log(N))


class MixtureSkeptic(Skeptic):
    """Non-negative mixture ``sum_k k^-2 2^-k S^k_N`` of shifted quadratic accounts.

    Account ``k`` holds ``2^k + S_N`` while ``c^2 N <= 2^k`` and is frozen
    afterwards, where ``c`` bounds ``|Psi|``.  Levels above ``k_max`` are
    never frozen within any feasible run and are summed analytically.
    """

    name = "mixture"

    def __init__(self, kernel: Kernel, c: float, m: int = 2, k_max: int = 64):
        super().__init__()
        if not c > 0:
            raise InputError("mixture constant c must be positive")
        self.c = float(c)
        self.k_max = int(k_max)
        self.quad = QuadraticSkeptic(kernel, m)
        self.k = np.arange(1, self.k_max + 1, dtype=float)
        self.weights = self.k**-2 * 2.0**-self.k
        self.base = 2.0**self.k
        self.levels = self.base.copy()  # S^k_0 = 2^k
        self.live = np.ones(self.k_max, dtype=bool)
        self.tail_const = float(special.zeta(2.0, self.k_max + 1))  # sum_{k > k_max} k^-2
        kk = np.arange(self.k_max + 1, self.k_max + 200, dtype=float)
        self.tail_weight = float(np.sum(kk**-2 * 2.0**-kk))

    @property
    def capital(self) -> float:
        return float(self.weights @ self.levels) + self.tail_const + self.tail_weight * self.quad.capital

    def bet(self, x, P):
        live_next = self.c**2 * (self.n + 1) <= self.base
        w = float(self.weights[live_next].sum()) + self.tail_weight
        return w * self.quad.bet(x, P)

    def _advance(self, x, P, y):
        self.quad._advance(x, P, y)
        N = self.n + 1
        self.live = self.c**2 * N <= self.base
        self.levels = np.where(self.live, self.base + self.quad.capital, self.levels)


def slln_step(state: SLLNSkeptic, P, y) -> SLLNSkeptic:
    state.observe(None, P, y)
    return state


def quadratic_step(state: QuadraticSkeptic, x, P, y) -> QuadraticSkeptic:
    state.observe(x, P, y)
    return state


def mixture_step(state: MixtureSkeptic, x, P, y) -> MixtureSkeptic:
    state.observe(x, P, y)
    return state


def make_skeptic(name: str, kernel: Kernel | None = None, m: int = 2, c: float | None = None) -> Skeptic:
    if name == "slln":
        if m != 2:
            raise InputError("the slln Skeptic needs binary outcomes")
        return SLLNSkeptic()
    if kernel is None:
        raise InputError(f"the {name} Skeptic needs a kernel")
    if name == "quadratic":
        return QuadraticSkeptic(kernel, m)
    if name == "mixture":
        if c is None:
            c = 2.0 * imbedding_constant(kernel)
        return MixtureSkeptic(kernel, c, m)
    raise InputError(f"unknown Skeptic {name!r}")
