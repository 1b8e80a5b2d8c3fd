"""Root finders for the neutralisation step.

Both solvers see the gain only through a batched callable, so the same code
drives the plain forecaster, the merged decision kernel and the reference
oracle.

``binary_root`` works on the scalar ``S(p)``: for two classes every gain has
the form ``g(y, p) = 2 (y - p) S(p)``, so a neutral ``p`` is a root of ``S`` or
a boundary point where ``S`` has the right sign.

``simplex_root`` handles ``m > 2``: a grid scan over the simplex, exact
bisection along every edge, then Nelder-Mead and a face-restricted Newton
polish from the best grid points.
"""

from __future__ import annotations

import functools
import itertools
import math
from typing import Callable

import numpy as np
from scipy import optimize

N_SCAN = 65


class SolverFailure(RuntimeError):
    """No forecast meeting the neutrality tolerance was found."""


def binary_root(S: Callable[[np.ndarray], np.ndarray], tol: float, n_scan: int = N_SCAN) -> tuple[float, float]:
    """Return ``(p, S(p))`` with ``|S(p)| <= tol`` or a correctly signed boundary.

    ``S`` maps an array of probabilities to an array of values.  Ties between
    several scan points that already meet ``tol`` go to the one nearest 1/2.
    """
    ps = np.linspace(0.0, 1.0, n_scan)
    s = np.asarray(S(ps), dtype=float)
    close = np.flatnonzero(np.abs(s) <= tol)
    if close.size:
        j = close[np.argmin(np.abs(ps[close] - 0.5))]
        return float(ps[j]), float(s[j])
    if np.all(s > 0):
        return 1.0, float(s[-1])
    if np.all(s < 0):
        return 0.0, float(s[0])
    flips = np.flatnonzero(np.sign(s[:-1]) != np.sign(s[1:]))
    j = flips[np.argmin(np.abs(0.5 * (ps[flips] + ps[flips + 1]) - 0.5))]
    lo, hi, s_lo, s_hi = ps[j], ps[j + 1], s[j], s[j + 1]
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        s_mid = float(S(np.array([mid]))[0])
        if abs(s_mid) <= tol:
            return float(mid), s_mid
        if (s_mid > 0) == (s_lo > 0):
            lo, s_lo = mid, s_mid
        else:
            hi, s_hi = mid, s_mid
    # adjacent doubles: S jumps across zero faster than the grid resolves
    return (float(lo), float(s_lo)) if abs(s_lo) <= abs(s_hi) else (float(hi), float(s_hi))


@functools.lru_cache(maxsize=32)
def simplex_grid(m: int, resolution: int) -> np.ndarray:
    """All points of the simplex with coordinates in ``{0, 1/r, ..., 1}``.

    Cached and read-only; callers must copy before modifying.
    """
    pts = []
    for bars in itertools.combinations(range(resolution + m - 1), m - 1):
        edges = (-1,) + bars + (resolution + m - 1,)
        pts.append([edges[i + 1] - edges[i] - 1 for i in range(m)])
    grid = _ordered(np.asarray(pts, dtype=float) / resolution)
    grid.flags.writeable = False
    return grid


def grid_resolution(m: int, max_resolution: int = 32, max_points: int = 20000) -> int:
    r = max_resolution
    while r > 2 and math.comb(r + m - 1, m - 1) > max_points:
        r //= 2
    return r


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, v.size + 1)
    rho = np.flatnonzero(u - css / k > 0)[-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def _ordered(grid: np.ndarray) -> np.ndarray:
    """Sort grid points by distance to uniform, then lexicographically."""
    m = grid.shape[1]
    d = np.round(np.sum((grid - 1.0 / m) ** 2, axis=1), 12)
    keys = [grid[:, j] for j in reversed(range(m))] + [d]
    return grid[np.lexsort(keys)]


def _max_gain(gains, P, chunk=8192):
    out = np.empty(P.shape[0])
    for s in range(0, P.shape[0], chunk):
        out[s : s + chunk] = gains(P[s : s + chunk]).max(axis=1)
    return out


def simplex_root(
    gains: Callable[[np.ndarray], np.ndarray],
    m: int,
    tol: float,
    resolution: int = 32,
    n_seeds: int = 6,
) -> tuple[np.ndarray, float]:
    """Find ``P`` with ``max_y gains(P)[y] <= tol``.  Returns ``(P, max gain)``.

    Search order: the uniform forecast, the vertices, exact bisection along
    every edge, a grid scan, Newton solves on the faces of the best grid
    points, and finally Nelder-Mead on ``max_y g`` from the same seeds.
    """
    unif = np.full((1, m), 1.0 / m)
    h0 = _max_gain(gains, unif)[0]
    if h0 <= tol:
        return unif[0], float(h0)

    verts = np.eye(m)
    hv = _max_gain(gains, verts)
    ok = np.flatnonzero(hv <= tol)
    if ok.size:
        return verts[ok[0]].copy(), float(hv[ok[0]])

    P, val = _edge_roots(gains, m, tol)
    if P is not None:
        return P, val
    if m == 2:
        raise SolverFailure("no neutral forecast on the only edge")

    res = grid_resolution(m, resolution)
    grid = simplex_grid(m, res)
    h = _max_gain(gains, grid)
    ok = np.flatnonzero(h <= tol)
    if ok.size:
        return grid[ok[0]].copy(), float(h[ok[0]])

    # steep interior roots look worse on the grid than flat corners, so every
    # basin gets a seed before the remaining best points are used
    minima = _grid_local_minima(grid, h, res)
    rest = np.setdiff1d(np.argsort(h, kind="stable"), minima, assume_unique=True)
    rest = rest[np.argsort(h[rest], kind="stable")]
    seeds = grid[np.concatenate([minima, rest])[: 4 * n_seeds]]
    for seed in seeds:
        P, val = _face_polish(gains, seed, tol)
        if val <= tol:
            return _snap(gains, P, val, tol)
    for seed in seeds[:n_seeds]:
        P, val = _local_search(gains, seed.copy(), tol)
        if val <= tol:
            return _snap(gains, P, val, tol)
    raise SolverFailure(f"no neutral forecast found (best max gain {float(h.min()):.3e} > {tol:.1e})")


SNAP = 2.0**-30


def _snap(gains, P, val, tol):
    """Round a continuous solver's output to the dyadic lattice ``SNAP * Z^m``.

    Implementations that sum the same gains in a different order then agree
    bit for bit (unless a coordinate sits within rounding noise of a lattice
    midpoint).  The rounded point is kept only if it is still neutral.
    """
    Q = np.rint(P / SNAP) * SNAP
    top = int(np.argmax(Q))
    Q[top] = 0.0
    Q[top] = 1.0 - Q.sum()  # exact: all terms are multiples of SNAP
    if Q[top] < 0:
        return P, val
    qval = float(gains(Q[None, :]).max())
    if qval <= tol:
        return Q, qval
    return P, val


def _grid_local_minima(grid, h, res):
    """Indices of grid points whose value is not above any grid neighbour's,
    sorted by value."""
    n, m = grid.shape
    units = np.rint(grid * res).astype(np.int64)
    base = (res + 1) ** np.arange(m, dtype=np.int64)
    keys = units @ base
    order = np.argsort(keys)
    sorted_keys = keys[order]
    is_min = np.ones(n, dtype=bool)
    for i, j in itertools.permutations(range(m), 2):
        nb = keys - base[i] + base[j]
        valid = (units[:, i] > 0) & (units[:, j] < res)
        pos = np.clip(np.searchsorted(sorted_keys, nb), 0, n - 1)
        found = valid & (sorted_keys[pos] == nb)
        idx = order[pos]
        is_min &= ~(found & (h[idx] < h))
    cand = np.flatnonzero(is_min)
    return cand[np.argsort(h[cand], kind="stable")]


def _edge_roots(gains, m, tol, n_scan=N_SCAN):
    """Bisection for ``g_j = g_i`` along all edges ``(i, j)`` at once.

    Per edge this follows :func:`binary_root` on ``t -> g_j - g_i``; the
    first edge (in lexicographic order) whose candidate is neutral wins.
    """
    pairs = np.array(list(itertools.combinations(range(m), 2)))
    E = len(pairs)
    ar = np.arange(E)

    def diff(t):  # t: (E, k) -> (E, k)
        k = t.shape[1]
        P = np.zeros((E, k, m))
        P[ar[:, None], np.arange(k)[None, :], pairs[:, 0:1]] = 1.0 - t
        P[ar[:, None], np.arange(k)[None, :], pairs[:, 1:2]] = t
        g = gains(P.reshape(E * k, m)).reshape(E, k, m)
        return g[ar, :, pairs[:, 1]] - g[ar, :, pairs[:, 0]], P

    half = tol / 2
    ts = np.broadcast_to(np.linspace(0.0, 1.0, n_scan), (E, n_scan))
    s, _ = diff(ts)
    t_out = np.full(E, np.nan)
    lo = np.zeros(E)
    hi = np.zeros(E)
    s_lo = np.zeros(E)
    s_hi = np.zeros(E)
    bisect = np.zeros(E, dtype=bool)
    for e in range(E):
        se = s[e]
        close = np.flatnonzero(np.abs(se) <= half)
        if close.size:
            t_out[e] = ts[e, close[np.argmin(np.abs(ts[e, close] - 0.5))]]
        elif np.all(se > 0):
            t_out[e] = 1.0
        elif np.all(se < 0):
            t_out[e] = 0.0
        else:
            flips = np.flatnonzero(np.sign(se[:-1]) != np.sign(se[1:]))
            j = flips[np.argmin(np.abs(0.5 * (ts[e, flips] + ts[e, flips + 1]) - 0.5))]
            lo[e], hi[e], s_lo[e], s_hi[e] = ts[e, j], ts[e, j + 1], se[j], se[j + 1]
            bisect[e] = True
    while np.any(bisect):
        mid = 0.5 * (lo + hi)
        stuck = bisect & ((mid <= lo) | (mid >= hi))
        for e in np.flatnonzero(stuck):
            t_out[e] = lo[e] if abs(s_lo[e]) <= abs(s_hi[e]) else hi[e]
        bisect &= ~stuck
        if not np.any(bisect):
            break
        s_mid = diff(np.where(bisect, mid, 0.5)[:, None])[0][:, 0]
        hit = bisect & (np.abs(s_mid) <= half)
        t_out[hit] = mid[hit]
        bisect &= ~hit
        same = (s_mid > 0) == (s_lo > 0)
        move_lo = bisect & same
        move_hi = bisect & ~same
        lo = np.where(move_lo, mid, lo)
        s_lo = np.where(move_lo, s_mid, s_lo)
        hi = np.where(move_hi, mid, hi)
        s_hi = np.where(move_hi, s_mid, s_hi)
    _, P = diff(t_out[:, None])
    P = P[:, 0, :]
    vals = gains(P).max(axis=1)
    ok = np.flatnonzero(vals <= tol)
    if ok.size:
        return P[ok[0]], float(vals[ok[0]])
    return None, float(vals.min())


def _local_search(gains, seed, tol):
    m = seed.size

    def h(v):
        return float(gains(project_simplex(v)[None, :]).max())

    res = optimize.minimize(
        h, seed, method="Nelder-Mead",
        options={"xatol": 1e-13, "fatol": tol * 1e-3, "maxiter": 4000 * m, "initial_simplex": _initial_simplex(seed)},
    )
    P = project_simplex(res.x)
    val = h(P)
    if val <= tol:
        return P, val
    return _face_polish(gains, P, tol)


def _initial_simplex(seed, step=1.0 / 64):
    m = seed.size
    pts = [seed]
    for k in range(m):
        v = seed.copy()
        v[k] += step
        pts.append(v)
    return np.asarray(pts[: m + 1])


def _face_polish(gains, P, tol):
    """Newton-type solve of ``g(y, P) = 0`` on the face spanned by supp(P)."""
    support = np.flatnonzero(P > 1e-9)
    if support.size < 2:
        return P, float(gains(P[None, :]).max())
    m = P.size

    def embed(theta):
        Q = np.zeros(m)
        Q[support[:-1]] = theta
        Q[support[-1]] = 1.0 - theta.sum()
        return Q

    def F(theta):
        return gains(embed(theta)[None, :])[0, support[:-1]]

    sol = optimize.root(F, P[support[:-1]], method="hybr", options={"xtol": 1e-14})
    Q = embed(sol.x)
    if np.all(Q >= 0):
        val = float(gains(Q[None, :]).max())
        return Q, val
    return P, float(gains(P[None, :]).max())
