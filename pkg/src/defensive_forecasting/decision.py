"""Loss functions, continuous approximate choice functions and the master
prediction algorithm that turns defensive forecasts into decisions."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .forecaster import ForecastState
from .kernel import Kernel
from .points import DomainError, InputError, as_datum, as_simplex
from .solvers import grid_resolution, simplex_grid

LOSS_KINDS = ("absolute", "quadratic", "brier", "cover")
_GAMMA_TOL = 1e-12


@dataclass(frozen=True)
class LossSpec:
    """A built-in loss ``lambda(x, gamma, y)`` and its prediction space.

    * ``absolute`` / ``quadratic``: two classes, ``gamma in [0, 1]``.
    * ``brier``: ``classes`` outcomes, ``gamma`` in the simplex.
    * ``cover``: ``stocks`` assets, ``gamma`` a portfolio; outcome ``y``
      indexes a grid of price-relative vectors with ``levels`` values per
      asset spread over ``clamp = (lo, hi)``; loss ``-ln <gamma, r_y>``.
    """

    kind: str
    classes: int = 2
    stocks: int = 2
    clamp: tuple = (0.5, 2.0)
    levels: int = 2
    outcomes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise InputError(f"unknown loss kind {self.kind!r}")
        object.__setattr__(self, "clamp", tuple(float(c) for c in self.clamp))
        if self.kind == "brier" and self.classes < 2:
            raise InputError("brier loss needs at least two classes")
        if self.kind == "cover":
            lo, hi = self.clamp
            if not (0 < lo < hi and math.isfinite(hi)):
                raise InputError("cover clamp must satisfy 0 < lo < hi")
            if self.stocks < 2 or self.levels < 2:
                raise InputError("cover needs at least two stocks and two levels")
            grid = np.linspace(lo, hi, self.levels)
            r = np.array(list(itertools.product(grid, repeat=self.stocks)))
        else:
            r = np.zeros((0, 0))
        object.__setattr__(self, "outcomes", r)

    # -- metadata ----------------------------------------------------------

    @property
    def m(self) -> int:
        if self.kind == "brier":
            return self.classes
        if self.kind == "cover":
            return self.levels**self.stocks
        return 2

    @property
    def gamma_dim(self) -> int:
        """0 for scalar predictions, otherwise the length of the prediction vector."""
        if self.kind == "brier":
            return self.classes
        if self.kind == "cover":
            return self.stocks
        return 0

    @property
    def c_lambda(self) -> float:
        """Oscillation ``sup lambda - inf lambda`` over all (x, gamma, y)."""
        if self.kind in ("absolute", "quadratic"):
            return 1.0
        if self.kind == "brier":
            return 2.0
        lo, hi = self.clamp
        return math.log(hi / lo)

    @property
    def strictly_convex(self) -> bool:
        return self.kind in ("quadratic", "brier")

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "brier":
            d["classes"] = self.classes
        if self.kind == "cover":
            d.update(stocks=self.stocks, clamp=list(self.clamp), levels=self.levels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LossSpec":
        kind = d.get("kind")
        if kind == "cover":
            return cls("cover", stocks=int(d.get("stocks", 2)), clamp=tuple(d.get("clamp", (0.5, 2.0))), levels=int(d.get("levels", 2)))
        if kind == "brier":
            return cls("brier", classes=int(d.get("classes", 2)))
        return cls(kind)

    # -- evaluation --------------------------------------------------------

    def check_gamma(self, gamma) -> np.ndarray | float:
        if self.gamma_dim == 0:
            g = float(gamma)
            if not (-_GAMMA_TOL <= g <= 1.0 + _GAMMA_TOL):
                raise DomainError(f"prediction {g} outside [0, 1]")
            return min(max(g, 0.0), 1.0)
        g = np.asarray(gamma, dtype=float).reshape(-1)
        if g.size != self.gamma_dim or np.any(g < -_GAMMA_TOL) or abs(g.sum() - 1.0) > 1e-9:
            raise DomainError(f"prediction {g} is not a point of the {self.gamma_dim}-simplex")
        return np.clip(g, 0.0, None)

    def losses(self, gammas) -> np.ndarray:
        """Loss of every outcome for a batch of predictions: shape (G, m)."""
        g = np.asarray(gammas, dtype=float)
        if self.kind == "absolute":
            g = g.reshape(-1, 1)
            return np.hstack([g, 1.0 - g])
        if self.kind == "quadratic":
            g = g.reshape(-1, 1)
            return np.hstack([g * g, (1.0 - g) ** 2])
        g = g.reshape(-1, self.gamma_dim)
        if self.kind == "brier":
            sq = (g * g).sum(axis=1, keepdims=True)
            return sq - 2.0 * g + 1.0
        return -np.log(g @ self.outcomes.T)

    def loss(self, x, gamma, y: int) -> float:
        """``lambda(x, gamma, y)``; the built-ins ignore ``x``."""
        y = int(y)
        if not 0 <= y < self.m:
            raise InputError(f"outcome {y} out of range")
        return float(self.losses(self.check_gamma(gamma))[0, y])

    def sample(self, gamma, rng: np.random.Generator):
        """Draw a prediction whose expected loss equals that of ``gamma``.

        Absolute loss is linear in ``gamma`` for binary outcomes, so a coin
        with bias ``gamma`` is a faithful randomisation; other losses return
        ``gamma`` unchanged.
        """
        if self.kind == "absolute":
            return float(rng.random() < float(gamma))
        return gamma


def expected_loss(loss: LossSpec, x, gamma, P) -> float:
    """``sum_y P(y) lambda(x, gamma, y)``."""
    P = as_simplex(P, loss.m)
    return float(loss.losses(loss.check_gamma(gamma))[0] @ P)


# ---------------------------------------------------------------------------
# Continuous approximate choice functions.
# ---------------------------------------------------------------------------

_RAMP_CAP = 0.2


def choice_batch(loss: LossSpec, P: np.ndarray, eps: float) -> np.ndarray:
    """ε-optimal predictions for a batch of forecasts ``P`` (G, m).

    The map ``P -> gamma`` is continuous for every ``eps > 0``:

    * absolute loss: a linear ramp of width ``W = min(4 eps, 0.2)`` around
      ``p = 1/2``; its excess expected loss is at most ``W / 8``;
    * quadratic and Brier: the exact minimiser (the mean);
    * Cover: the minimiser of the expected loss plus ``eps/2`` times a
      normalised quadratic pull towards the uniform portfolio, which is
      strictly convex and so has a unique, continuous argmin.
    """
    if not eps > 0:
        raise InputError("eps must be positive")
    P = np.atleast_2d(np.asarray(P, dtype=float))
    if loss.kind == "absolute":
        W = min(4.0 * eps, _RAMP_CAP)
        return np.clip(0.5 + (P[:, 1] - 0.5) / W, 0.0, 1.0)
    if loss.kind == "quadratic":
        return P[:, 1].copy()
    if loss.kind == "brier":
        return P.copy()
    return _cover_choice(loss, P, eps)


def choice(loss: LossSpec, x, P, eps: float):
    """Continuous approximate choice function ``G(x, P)`` with slack ``eps``."""
    P = as_simplex(P, loss.m)
    g = choice_batch(loss, P[None, :], eps)[0]
    return float(g) if loss.gamma_dim == 0 else g


def _cover_choice(loss: LossSpec, P: np.ndarray, eps: float) -> np.ndarray:
    R = loss.outcomes  # (m, K)
    K = loss.stocks
    # R(g) = |g - 1/K|^2 / (1 - 1/K) lies in [0, 1], so weight eps/2 costs at most eps/2
    reg = 0.5 * eps / (1.0 - 1.0 / K)
    if K == 2:
        t = _two_stock_log_optimal(R[:, 0], R[:, 1], P, reg)
        return np.stack([t, 1.0 - t], axis=1)
    return _regularised_log_optimal(R, P, reg)


def _two_stock_log_optimal(a, b, P, reg, max_iter=200):
    """Weight ``t`` on the first stock: root of the derivative of
    ``-sum P ln(t a + (1 - t) b) + 2 reg (t - 1/2)^2`` by bracketed Newton."""
    d = a - b

    def deriv(t, Q):
        v = b + t[:, None] * d
        w = Q * d / v
        return -w.sum(axis=1) + 4.0 * reg * (t - 0.5), (w * d / v).sum(axis=1) + 4.0 * reg

    G = P.shape[0]
    f0, _ = deriv(np.zeros(G), P)
    f1, _ = deriv(np.ones(G), P)
    t = np.where(f0 >= 0, 0.0, np.where(f1 <= 0, 1.0, 0.5))
    live = (f0 < 0) & (f1 > 0)
    lo, hi = np.zeros(G), np.ones(G)
    for _ in range(max_iter):
        idx = np.flatnonzero(live)
        if idx.size == 0:
            break
        ti, li, hi_i = t[idx], lo[idx], hi[idx]
        f, fp = deriv(ti, P[idx])
        li = np.where(f < 0, ti, li)
        hi_i = np.where(f > 0, ti, hi_i)
        nt = ti - f / fp
        nt = np.where((nt <= li) | (nt >= hi_i), 0.5 * (li + hi_i), nt)
        conv = (f == 0) | (np.abs(nt - ti) <= 4e-16) | (hi_i - li <= 4e-16)
        t[idx] = np.where(f == 0, ti, nt)
        lo[idx], hi[idx] = li, hi_i
        live[idx[conv]] = False
    return t


def _cover_objective(R, P, reg, g):
    K = g.shape[1]
    return -(P * np.log(g @ R.T)).sum(axis=1) + reg * ((g - 1.0 / K) ** 2).sum(axis=1)


def _regularised_log_optimal(R, P, reg, max_iter=200):
    """Exact minimiser of ``-sum_y P(y) ln <g, r_y> + reg |g - 1/K|^2`` over the
    simplex, for a batch of ``P``, by a primal active-set Newton method.

    Every price relative is at least ``min(R) > 0``, so the objective is finite
    on the whole simplex and strongly convex; the minimiser is unique and
    depends continuously on ``P``.  Newton steps converge to machine precision,
    which keeps the returned map numerically continuous as well.  A
    coordinate re-enters the active face through a projected-gradient step,
    which is guaranteed to increase it.
    """
    G, K = P.shape[0], R.shape[1]
    g = np.full((G, K), 1.0 / K)
    active = np.ones((G, K), dtype=bool)
    eye = np.eye(K)
    live = np.ones(G, dtype=bool)
    for _ in range(max_iter):
        idx = np.flatnonzero(live)
        if idx.size == 0:
            break
        gi, Pi, Ai = g[idx], P[idx], active[idx]
        v = gi @ R.T
        w = Pi / v
        grad = -w @ R + 2.0 * reg * (gi - 1.0 / K)
        H = np.einsum("gy,yj,yk->gjk", w / v, R, R) + 2.0 * reg * eye
        # equality-constrained Newton step on the active face
        mask = Ai[:, :, None] & Ai[:, None, :]
        M = np.zeros((idx.size, K + 1, K + 1))
        M[:, :K, :K] = np.where(mask, H, eye)
        M[:, :K, K] = Ai
        M[:, K, :K] = Ai
        rhs = np.zeros((idx.size, K + 1))
        rhs[:, :K] = np.where(Ai, -grad, 0.0)
        sol = np.linalg.solve(M, rhs[..., None])[..., 0]
        d = np.where(Ai, sol[:, :K], 0.0)
        mu = -sol[:, K]  # grad_k = mu on the face at its optimum
        dec = -(grad * d).sum(axis=1)
        # the face is optimal once the projected gradient is at rounding level
        resid = np.where(Ai, np.abs(grad - mu[:, None]), 0.0).max(axis=1)
        done = (np.abs(dec) <= 1e-30) | (resid <= 1e-14 * np.maximum(1.0, np.abs(grad).max(axis=1)))
        # at the face optimum, release the most attractive inactive coordinate
        viol = np.where(~Ai, mu[:, None] - grad, -np.inf)
        best = viol.argmax(axis=1)
        release = done & (viol[np.arange(idx.size), best] > 1e-13)
        live[idx[done & ~release]] = False
        if np.any(release):
            rel = np.flatnonzero(release)
            Ai[rel, best[rel]] = True
            active[idx[rel], best[rel]] = True
            # projected gradient on the enlarged face
            ga = np.where(Ai[rel], grad[rel], 0.0)
            mean = ga.sum(axis=1) / Ai[rel].sum(axis=1)
            d[rel] = np.where(Ai[rel], mean[:, None] - grad[rel], 0.0)
            done[rel] = False
        step = ~done
        if not np.any(step):
            continue
        s_idx = idx[step]
        gs, ds = gi[step], d[step]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios = np.where(ds < 0, -gs / ds, np.inf)
        amax = np.minimum(ratios.min(axis=1), 1.0)
        is_grad = release[step]
        # gradient steps start at the inverse curvature along the direction
        curv = np.einsum("gj,gjk,gk->g", ds, H[step], ds)
        a0 = np.where(is_grad, (ds * ds).sum(axis=1) / np.maximum(curv, 1e-300), 1.0)
        alpha = np.minimum(amax, a0)
        f0 = _cover_objective(R, P[s_idx], reg, gs)
        slope = (grad[step] * ds).sum(axis=1)
        # objective values cannot resolve tiny decrements; there Newton runs on the gradient alone
        tiny = ~is_grad & (-slope <= 1e-10 * np.maximum(1.0, np.abs(f0)))
        for _ in range(60):
            trial = np.maximum(gs + alpha[:, None] * ds, 0.0)
            ok = tiny | (_cover_objective(R, P[s_idx], reg, trial) <= f0 + 1e-4 * alpha * slope + 1e-15 * np.abs(f0))
            if np.all(ok):
                break
            alpha = np.where(ok, alpha, 0.5 * alpha)
        new = np.maximum(gs + alpha[:, None] * ds, 0.0)
        blocked = (alpha == amax) & (amax < 1.0) & np.isfinite(ratios.min(axis=1))
        if np.any(blocked):
            hit = np.argmin(ratios, axis=1)
            b = np.flatnonzero(blocked)
            new[b, hit[b]] = 0.0
            active[s_idx[b], hit[b]] = False
        g[s_idx] = new / new.sum(axis=1, keepdims=True)
    return g


def _cover_saddle(loss: LossSpec, b: np.ndarray, eps: float, tol: float = 1e-13):
    """Neutral forecast for the merged Cover gain with a positive loss weight.

    With per-outcome payoff ``b_y + lambda(gamma, y)`` (kernel part already
    divided by the loss weight) a neutral ``P`` is a saddle point of
    ``sum_y P(y) (b_y + lambda(gamma, y)) + reg |gamma - 1/K|^2``:
    ``gamma`` minimises
    ``F(gamma) = max_y (b_y + lambda(gamma, y)) + reg |gamma - 1/K|^2``
    and ``P`` is the multiplier vector of the max.  Candidate active sets
    come from ranking the outcomes at an approximate minimiser; Newton on
    the KKT equations pins down ``(gamma, P)`` to machine precision and a
    candidate is kept only if every optimality condition holds.
    Returns ``P`` or ``None``.
    """
    R = loss.outcomes
    m, K = R.shape
    reg = 0.5 * eps / (1.0 - 1.0 / K)

    def c(g):
        return b - np.log(g @ R.T)

    def F(g):
        g = np.atleast_2d(g)
        return c(g).max(axis=1) + reg * ((g - 1.0 / K) ** 2).sum(axis=1)

    grid = simplex_grid(K, grid_resolution(K, 32, 4000))
    g = grid[np.argmin(F(grid))].copy()
    P = _saddle_active_sets(R, b, reg, g, c, tol)
    if P is None:
        # The LP stage cannot resolve the tiny regulariser, but it gets
        # close enough for the ranking of the outcomes to be right.
        g = _saddle_slp(R, b, reg, g, c, F)
        P = _saddle_active_sets(R, b, reg, g, c, tol)
    return P


def _saddle_active_sets(R, b, reg, g, c, tol):
    """Try active sets made of the top-ranked outcomes at ``g``, smallest first."""
    m, K = R.shape
    pool = np.argsort(-c(g), kind="stable")[: min(m, K + 3)]
    supports = [np.arange(K)]
    if np.any(g <= 1e-7):
        supports.append(np.flatnonzero(g > 1e-7))
    t = float(c(g).max())
    for size in range(1, min(K + 1, pool.size) + 1):
        for S in itertools.combinations(pool, size):
            S = np.sort(np.array(S, dtype=int))
            for J in supports:
                P = _saddle_newton(R, b, reg, g, t, S, J, tol)
                if P is not None:
                    return P
    return None


def _saddle_slp(R, b, reg, g, c, F, max_iter=60):
    """Trust-region successive linear programming on ``F`` over the simplex."""
    m, K = R.shape
    radius = 0.25
    f = float(F(g)[0])
    for _ in range(max_iter):
        v = R @ g
        cg = c(g)
        grads = -R / v[:, None]  # (m, K)
        # variables (d_1..d_K, t); minimise t + grad(reg part) . d
        cost = np.append(2.0 * reg * (g - 1.0 / K), 1.0)
        A_ub = np.hstack([grads, -np.ones((m, 1))])
        b_ub = -cg
        A_eq = np.append(np.ones(K), 0.0)[None, :]
        bounds = [(max(-gk, -radius), min(1.0 - gk, radius)) for gk in g] + [(None, None)]
        lp = optimize.linprog(cost, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=[0.0], bounds=bounds, method="highs")
        if lp.status != 0:
            break
        d = lp.x[:K]
        predicted = f - (lp.x[K] + reg * np.sum((g - 1.0 / K) ** 2) + cost[:K] @ d)
        if predicted <= 1e-15 * max(1.0, abs(f)):
            break
        trial = np.clip(g + d, 0.0, None)
        trial /= trial.sum()
        f_new = float(F(trial)[0])
        ratio = (f - f_new) / predicted
        if ratio > 0.1:
            g, f = trial, f_new
            if ratio > 0.75:
                radius = min(2.0 * radius, 1.0)
        else:
            radius *= 0.25
        if radius < 1e-15:
            break
    return g


def _saddle_newton(R, b, reg, g_init, t0, S, J, tol, max_iter=60):
    m, K = R.shape
    s, j = S.size, J.size
    RS = R[S][:, J]
    # initial multipliers: least squares on the stationarity rows
    v = R[S] @ g_init
    grads = -RS / v[:, None]  # d lambda_y / d gamma_k, (s, j)
    A = np.vstack([np.hstack([grads.T, -np.ones((j, 1))]), np.append(np.ones(s), 0.0)])
    rhs = np.append(-2.0 * reg * (g_init[J] - 1.0 / K), 1.0)
    sol, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    P = np.clip(sol[:s], 0.0, None)
    P = P / P.sum() if P.sum() > 0 else np.full(s, 1.0 / s)
    u = np.concatenate([g_init[J], P, [sol[s], t0]])
    for _ in range(max_iter):
        gJ, PS, mu, t = u[:j], u[j : j + s], u[j + s], u[j + s + 1]
        v = RS @ gJ
        if np.any(v <= 0):
            return None
        F = np.concatenate([
            -(PS / v) @ RS + 2.0 * reg * (gJ - 1.0 / K) - mu,
            [gJ.sum() - 1.0],
            b[S] - np.log(v) - t,
            [PS.sum() - 1.0],
        ])
        if not np.all(np.isfinite(F)):
            return None
        if np.abs(F).max() <= tol:
            break
        n = j + s + 2
        Jm = np.zeros((n, n))
        Jm[:j, :j] = np.einsum("y,yk,yl->kl", PS / v**2, RS, RS) + 2.0 * reg * np.eye(j)
        Jm[:j, j : j + s] = -(RS / v[:, None]).T
        Jm[:j, j + s] = -1.0
        Jm[j, :j] = 1.0
        Jm[j + 1 : j + 1 + s, :j] = -RS / v[:, None]
        Jm[j + 1 : j + 1 + s, j + s + 1] = -1.0
        Jm[j + 1 + s, j : j + s] = 1.0
        try:
            step = np.linalg.solve(Jm, -F)
        except np.linalg.LinAlgError:
            try:
                step = np.linalg.lstsq(Jm, -F, rcond=None)[0]
            except np.linalg.LinAlgError:
                return None
        if not np.all(np.isfinite(step)):
            return None
        u = u + step
        if np.abs(step).max() <= 1e-16:
            break
    gJ, PS, mu, t = u[:j], u[j : j + s], u[j + s], u[j + s + 1]
    if not np.abs(F).max() <= 1e-10 or np.any(gJ < -1e-12) or np.any(PS < -1e-12):
        return None
    # the solution must also satisfy the conditions left out of the system
    gam = np.zeros(K)
    gam[J] = np.clip(gJ, 0.0, None)
    v_all = R @ gam
    if np.any(v_all <= 0) or np.any(b - np.log(v_all) > t + 1e-10):
        return None
    out = np.setdiff1d(np.arange(K), J)
    if out.size:
        grad = -(PS / (R[S] @ gam)) @ R[S][:, out] + 2.0 * reg * (0.0 - 1.0 / K)
        if np.any(grad < mu - 1e-10):
            return None
    P = np.zeros(m)
    P[S] = np.clip(PS, 0.0, None)
    return P / P.sum()


# ---------------------------------------------------------------------------
# Master prediction algorithm.
# ---------------------------------------------------------------------------


@dataclass
class DecisionConfig:
    """Loss plus the per-round slack schedule ``eps_n = max(2**-n, eps_floor)``."""

    loss: LossSpec
    eps_floor: float = 1e-6

    def epsilon(self, n: int) -> float:
        if n < 1:
            raise InputError("round indices start at 1")
        return max(2.0**-n, self.eps_floor)


class MasterPredictor:
    """Forecast with the merged (loss component ⊕ RKHS component) Skeptic, then
    predict with the round's approximate choice function.

    The merged feature map is ``(Psi_0, Psi_1)`` with unit weights, where
    ``Psi_0(x, P, y) = lambda(x, G_n(x, P), y) - lambda(x, G_n(x, P), P)`` is
    scalar and ``Psi_1 = k_{x,y} - k_{x,P}`` lives in the kernel's RKHS.
    The two parts are accumulated separately: the scalar part needs only the
    running sum ``2 sum psi_0`` and the kernel part is the forecaster's own
    gain.
    """

    def __init__(self, kernel: Kernel, config: DecisionConfig, tol_neutral: float = 1e-6, binary_tol: float = 1e-9):
        self.config = config
        self.loss = config.loss
        self.fstate = ForecastState(kernel, self.loss.m, tol_neutral, binary_tol)
        self.c_F = self.fstate.imbedding_constant
        self.loss_stake = 0.0  # 2 * sum of realised loss residuals
        self.sum_loss_residual = 0.0
        self.sum_loss_residual_sq = 0.0
        self.n = 0
        self._pending = None

    @property
    def m(self):
        return self.loss.m

    def _loss_residual(self, P: np.ndarray, eps: float) -> np.ndarray:
        L = self.loss.losses(choice_batch(self.loss, P, eps))
        return L - (P * L).sum(axis=1)[:, None]

    def predict(self, x, n: int | None = None):
        """One master step: returns ``(P_n, gamma_n)``."""
        n = self.n + 1 if n is None else int(n)
        eps = self.config.epsilon(n)
        x = as_datum(x)
        stake = self.loss_stake
        extra = None if stake == 0.0 else (lambda P: stake * self._loss_residual(P, eps))
        hint = None
        if stake > 0 and self.loss.kind == "cover" and not self.fstate.kernel.depends_on_p:
            hint = _cover_saddle(self.loss, self.fstate.linear_payoff(x) / stake, eps)
        P = self.fstate.defensive_forecast(x, extra, hint)
        gamma = choice(self.loss, x, P, eps)
        self._pending = (x, P, gamma, eps)
        return P, gamma

    def certificate(self, x, P, gamma) -> dict:
        """Norms of both feature components at the realised forecast."""
        L = self.loss.losses(gamma)[0]
        loss_residual = np.abs(L - L @ P)
        kernel_residual = np.sqrt(np.maximum(self.fstate.residual_norm_sq(x, P), 0.0))
        return {"loss_residual": float(loss_residual.max()), "kernel_residual": float(kernel_residual.max()), "c_lambda": self.loss.c_lambda, "c_F": self.c_F}

    def observe(self, y: int):
        if self._pending is None:
            raise InputError("observe() called before predict()")
        x, P, gamma, eps = self._pending
        L = self.loss.losses(gamma)[0]
        loss_residual = float(L[int(y)] - L @ P)
        self.loss_stake += 2.0 * loss_residual
        self.sum_loss_residual += loss_residual
        self.sum_loss_residual_sq += loss_residual * loss_residual
        self.fstate.observe(x, P, y)
        self.n += 1
        self._pending = None
        return loss_residual

    @property
    def merged_capital(self) -> float:
        """``|sum Psi|^2 - sum |Psi|^2`` for the merged feature map."""
        return self.fstate.S + self.sum_loss_residual**2 - self.sum_loss_residual_sq


def master_predict_step(predictor: MasterPredictor, x, n: int):
    return predictor.predict(x, n)
