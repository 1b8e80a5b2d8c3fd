"""The defensive forecaster.

The Skeptic being defended against bets ``f_N(y) = <A, Psi(x_N, P, y)>`` where
``A = 2 sum_{i<N} Psi(x_i, P_i, y_i)`` and ``Psi(x, P, y) = Phi(x, P, y) -
sum_y' P(y') Phi(x, P, y')`` with ``Phi`` the kernel feature map.  Expanding
the inner products, the gain at a candidate forecast is

    g(y, P) = 2 sum_i sum_y'' E_i[y''] (k(z_i'', c_y) - sum_y' P(y') k(z_i'', c_y'))

with ``E_i = onehot(y_i) - P_i``, ``z_i'' = (x_i, P_i, y'')`` and
``c_y = (x, P, y)``.  Each round the forecaster picks ``P`` with
``max_y g(y, P) <= tol``; such a ``P`` always exists because ``g`` is
continuous in ``P`` and ``sum_y P(y) g(y, P) = 0``.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .kernel import Kernel, imbedding_constant
from .points import ForecastPoint, InputError, PointBatch, as_datum, as_simplex, uniform
from .solvers import SolverFailure, binary_root, simplex_root

GainFn = Callable[[np.ndarray], np.ndarray]


class _Growing:
    """Append-only 2-D buffer with amortised O(1) appends."""

    def __init__(self, width, dtype=float):
        self._buf = np.zeros((16, width), dtype=dtype)
        self.n = 0

    def append(self, row):
        if self.n == self._buf.shape[0]:
            self._buf = np.concatenate([self._buf, np.zeros_like(self._buf)])
        self._buf[self.n] = row
        self.n += 1

    @property
    def view(self):
        return self._buf[: self.n]


class ForecastState:
    """History of realised rounds plus the running capital of the kernel Skeptic.

    Parameters
    ----------
    kernel : Kernel
        Forecast-continuous kernel on (x, P, y) triples.
    m : int
        Number of observation classes.
    tol_neutral, binary_tol : float
        Acceptance thresholds for ``max_y g`` (general path) and ``|S(p)|``
        (two-class path).
    """

    def __init__(self, kernel: Kernel, m: int, tol_neutral: float = 1e-6, binary_tol: float = 1e-9):
        if m < 2:
            raise InputError("need at least two classes")
        self.kernel = kernel
        self.m = int(m)
        self.tol_neutral = float(tol_neutral)
        self.binary_tol = float(binary_tol)
        self._x: _Growing | None = None
        self._p = _Growing(self.m)
        self._e = _Growing(self.m)
        self._y: list[int] = []
        self._slice_key = None
        self._slice = None
        self.S = 0.0  # ||sum Psi||^2 - sum ||Psi||^2
        self.sum_residual_sq = 0.0
        self.last_certificate: float | None = None

    # -- history -----------------------------------------------------------

    def __len__(self) -> int:
        return len(self._y)

    @property
    def history(self) -> list[ForecastPoint]:
        if not self._y:
            return []
        return [ForecastPoint(x, p, y) for x, p, y in zip(self._x.view, self._p.view, self._y)]

    def batch(self) -> PointBatch:
        return PointBatch(self._x.view, self._p.view, np.asarray(self._y, dtype=int))

    @property
    def imbedding_constant(self) -> float:
        return imbedding_constant(self.kernel)

    def _check_datum(self, x):
        x = as_datum(x)
        if self._x is not None and x.size != self._x.view.shape[1]:
            raise InputError(f"datum dimension {x.size} != {self._x.view.shape[1]}")
        return x

    # -- gains -------------------------------------------------------------

    def _round_slice(self, x: np.ndarray):
        key = (len(self), x.tobytes())
        if key != self._slice_key:
            self._slice = self.kernel.round_slice(self.batch(), self._e.view, x)
            self._slice_key = key
        return self._slice

    def gains(self, x, P: np.ndarray) -> np.ndarray:
        """Gains ``g(y, P_g)`` for a batch of candidates ``P`` of shape (G, m)."""
        x = self._check_datum(x)
        return self._gains(x, np.atleast_2d(np.asarray(P, dtype=float)))

    def _gains(self, x: np.ndarray, P: np.ndarray) -> np.ndarray:
        if not self._y:
            return np.zeros_like(P)
        u = self._round_slice(x).contract(P)
        return 2.0 * (u - (P * u).sum(axis=1)[:, None])

    def linear_payoff(self, x) -> np.ndarray:
        """``2 <A, Phi(x, ., y)>`` per outcome for a kernel that ignores the
        forecast; the gain is then ``payoff_y - sum_y' P(y') payoff_y'``."""
        if self.kernel.depends_on_p:
            raise InputError("the payoff depends on the forecast for this kernel")
        x = self._check_datum(x)
        if not self._y:
            return np.zeros(self.m)
        return 2.0 * self._round_slice(x).contract(uniform(self.m)[None, :])[0]

    def neutrality_gain(self, x, P, y: int) -> float:
        P = as_simplex(P, self.m)
        if not 0 <= int(y) < self.m:
            raise InputError(f"class {y} out of range")
        return float(self.gains(x, P[None, :])[0, int(y)])

    def S_function(self, x) -> Callable[[np.ndarray], np.ndarray]:
        """Two-class neutrality function ``S(p) = (g(1, p) - g(0, p)) / 2``."""
        if self.m != 2:
            raise InputError("S(p) is defined for two classes only")
        x = self._check_datum(x)

        def S(ps):
            ps = np.asarray(ps, dtype=float)
            g = self._gains(x, np.stack([1.0 - ps, ps], axis=1))
            return 0.5 * (g[:, 1] - g[:, 0])

        return S

    # -- forecasting -------------------------------------------------------

    def binary_neutral_root(self, x, extra: GainFn | None = None) -> float:
        """Probability of class 1 neutralising the two-class gain."""
        if self.m != 2:
            raise InputError("binary_neutral_root needs m = 2")
        x = self._check_datum(x)
        if len(self) == 0 and extra is None:
            return 0.5
        total = self._total_gain(x, extra)

        def S(ps):
            P = np.empty((ps.size, 2))
            P[:, 0] = 1.0 - ps
            P[:, 1] = ps
            g = total(P)
            return 0.5 * (g[:, 1] - g[:, 0])

        p, _ = binary_root(S, self.binary_tol)
        return p

    def _total_gain(self, x, extra):
        if extra is None:
            return lambda P: self._gains(x, P)
        return lambda P: self._gains(x, P) + extra(P)

    def defensive_forecast(self, x, extra: GainFn | None = None, hint: np.ndarray | None = None) -> np.ndarray:
        """Forecast ``P`` with ``max_y g(y, P) <= tol_neutral``.

        ``extra`` adds further gain components (same calling convention as
        :meth:`gains`); the decision layer uses it for its loss component.
        ``hint`` is a candidate found by a specialised solver; it is used
        only if it passes the same neutrality check.
        """
        x = self._check_datum(x)
        total = self._total_gain(x, extra)
        if hint is not None:
            hint = np.asarray(hint, dtype=float)
            cert = float(total(hint[None, :]).max())
            if cert <= self.tol_neutral:
                self.last_certificate = cert
                return hint
        if len(self) == 0 and extra is None:
            P = uniform(self.m)
        elif self.m == 2:
            p = self.binary_neutral_root(x, extra)
            P = np.array([1.0 - p, p])
        else:
            P, _ = simplex_root(total, self.m, self.tol_neutral)
            P = P / P.sum()
        cert = float(total(P[None, :]).max())
        if cert > self.tol_neutral:
            raise SolverFailure(f"forecast leaves Skeptic a gain of {cert:.3e} > {self.tol_neutral:.1e}")
        self.last_certificate = cert
        return P

    def residual_norm_sq(self, x, P) -> np.ndarray:
        """``|Psi(x, P, y)|^2`` for every outcome ``y``."""
        x = self._check_datum(x)
        P = as_simplex(P, self.m)
        rows = PointBatch(np.repeat(x[None, :], self.m, axis=0), np.repeat(P[None, :], self.m, axis=0), np.arange(self.m))
        K = self.kernel.gram(rows, rows)
        KP = K @ P
        return np.diag(K) - 2.0 * KP + P @ KP

    def observe(self, x, P, y: int) -> "ForecastState":
        """Append the realised round and advance the Skeptic's capital."""
        x = self._check_datum(x)
        P = as_simplex(P, self.m)
        y = int(y)
        if not 0 <= y < self.m:
            raise InputError(f"class {y} out of range for m={self.m}")
        self.S += self.neutrality_gain(x, P, y)
        self.sum_residual_sq += float(self.residual_norm_sq(x, P)[y])
        if self._x is None:
            self._x = _Growing(x.size)
        self._x.append(x)
        self._p.append(P)
        e = -P.copy()
        e[y] += 1.0
        self._e.append(e)
        self._y.append(y)
        self._slice_key = None
        return self
