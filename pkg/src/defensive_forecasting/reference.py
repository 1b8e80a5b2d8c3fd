"""From-scratch reference forecaster.

Keeps no cached sums: every gain is rebuilt from the stored history with the
four kernel sums written out term by term.  It is slow on purpose and exists
to cross-check :class:`~defensive_forecasting.forecaster.ForecastState`.
"""

from __future__ import annotations

import numpy as np

from .kernel import Kernel
from .points import PointBatch, uniform
from .solvers import binary_root, simplex_root


def reference_gains(kernel: Kernel, history, x, P) -> np.ndarray:
    """``<A, Psi(x, P, y)>`` for every ``y``, with ``A = 2 sum_i Psi_i`` expanded
    into the four kernel sums."""
    P = np.asarray(P, dtype=float)
    m = P.size
    if not history:
        return np.zeros(m)
    x = np.asarray(x, dtype=float)
    n = len(history)
    cand = PointBatch(np.repeat(x[None, :], m, axis=0), np.repeat(P[None, :], m, axis=0), np.arange(m))
    rows = PointBatch(
        np.repeat(np.stack([h.x for h in history]), m, axis=0),
        np.repeat(np.stack([h.p for h in history]), m, axis=0),
        np.tile(np.arange(m), n),
    )
    K = kernel.gram(rows, cand).reshape(n, m, m)  # K[i, y'', y]
    Pi = np.stack([h.p for h in history])
    yi = np.array([h.y for h in history])
    realised = K[np.arange(n), yi, :]  # k(z_i, c_y)
    t1 = realised
    t2 = realised @ P  # sum_y' P(y') k(z_i, c_y')
    t3 = np.einsum("ij,ijy->iy", Pi, K)  # sum_y'' P_i(y'') k(z_i'', c_y)
    t4 = np.einsum("ij,ijy,y->i", Pi, K, P)
    return 2.0 * (t1 - t2[:, None] - t3 + t4[:, None]).sum(axis=0)


def reference_gain(kernel: Kernel, history, x, P, y) -> float:
    return float(reference_gains(kernel, history, x, P)[int(y)])


class ReferenceForecaster:
    def __init__(self, kernel: Kernel, m: int, tol_neutral: float = 1e-6, binary_tol: float = 1e-9):
        self.kernel, self.m = kernel, m
        self.tol_neutral, self.binary_tol = tol_neutral, binary_tol
        self.history = []

    def gain(self, x, P, y):
        return reference_gain(self.kernel, self.history, x, P, y)

    def gains(self, x, P):
        return reference_gains(self.kernel, self.history, x, P)

    def forecast(self, x):
        if not self.history:
            return uniform(self.m)
        if self.m == 2:
            def S(ps):
                out = []
                for p in ps:
                    g = self.gains(x, np.array([1.0 - p, p]))
                    out.append(0.5 * (g[1] - g[0]))
                return np.array(out)

            p, _ = binary_root(S, self.binary_tol)
            return np.array([1.0 - p, p])

        def gains(Ps):
            return np.array([self.gains(x, P) for P in Ps])

        P, _ = simplex_root(gains, self.m, self.tol_neutral)
        return P / P.sum()

    def observe(self, point):
        self.history.append(point)
