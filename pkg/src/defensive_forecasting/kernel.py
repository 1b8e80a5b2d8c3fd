"""Kernels on (datum, forecast, observation) triples.

Points are embedded by concatenating the datum ``x``, the forecast weights
``p`` and a one-hot code of the observation ``y``.  Every kernel exposes

* ``gram(a, b)`` -- the matrix ``k(a_i, b_j)`` for two :class:`PointBatch` es,
* ``imbedding_constant()`` -- ``sup_w sqrt(k(w, w))`` computed structurally,
* ``round_slice(history, weights, x)`` -- a per-round evaluator used by the
  forecaster to contract the history against many candidate forecasts.

Specs are immutable and serialise to plain JSON-compatible dicts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .points import DomainError, ForecastPoint, InputError, PointBatch


class UnboundedConstantError(ValueError):
    """The kernel has no finite imbedding constant on its declared domain."""


def _sqdist(U: np.ndarray, V: np.ndarray) -> np.ndarray:
    # explicit differences keep gram(A, B) == gram(B, A).T bit for bit
    out = np.zeros((U.shape[0], V.shape[0]))
    for k in range(U.shape[1]):
        d = U[:, k, None] - V[None, :, k]
        out += d * d
    return out


def _inner(U: np.ndarray, V: np.ndarray) -> np.ndarray:
    return np.einsum("ik,jk->ij", U, V)


# ---------------------------------------------------------------------------
# Block kernels: act on one coordinate block (or the whole embedding).
# ---------------------------------------------------------------------------


class Kernel:
    """Base class; concrete kernels are frozen dataclasses."""

    type_name = ""

    def gram(self, a: PointBatch, b: PointBatch) -> np.ndarray:
        raise NotImplementedError

    def diag(self, a: PointBatch) -> np.ndarray:
        return np.array([self.gram(_row(a, i), _row(a, i))[0, 0] for i in range(len(a))])

    def imbedding_constant(self) -> float:
        raise NotImplementedError

    @property
    def depends_on_p(self) -> bool:
        return True

    def to_dict(self) -> dict:
        raise NotImplementedError

    def round_slice(self, history: PointBatch, weights: np.ndarray, x: np.ndarray) -> "RoundSlice":
        return GenericSlice(self, history, weights, x)


def _row(a: PointBatch, i: int) -> PointBatch:
    return PointBatch(a.x[i : i + 1], a.p[i : i + 1], a.y[i : i + 1])


class BlockKernel(Kernel):
    """A kernel on a real coordinate block; used standalone on the full embedding."""

    def arrays(self, U: np.ndarray, V: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def block_constant(self, block: str) -> float:
        return self.imbedding_constant()

    def against(self, U: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
        """``V -> arrays(U, V)`` with any per-``U`` work done once."""
        return lambda V: self.arrays(U, V)

    def gram(self, a, b):
        return self.arrays(a.embed(), b.embed())


@dataclass(frozen=True)
class Gaussian(BlockKernel):
    """``exp(-|u - v|^2 / sigma^2)``."""

    sigma: float = 1.0
    type_name = "gaussian"

    def __post_init__(self):
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise InputError("sigma must be a positive finite number")

    def arrays(self, U, V):
        return np.exp(-_sqdist(U, V) / self.sigma**2)

    def against(self, U):
        cols = [np.ascontiguousarray(U[:, k, None]) for k in range(U.shape[1])]
        s2 = self.sigma**2

        def f(V):
            out = np.zeros((U.shape[0], V.shape[0]))
            for k, c in enumerate(cols):
                d = c - V[None, :, k]
                out += d * d
            return np.exp(-out / s2)

        return f

    def diag(self, a):
        return np.ones(len(a))

    def imbedding_constant(self):
        return 1.0

    def to_dict(self):
        return {"type": "gaussian", "sigma": self.sigma}

    def round_slice(self, history, weights, x):
        # the concatenated-coordinate Gaussian factorises over the three blocks
        g = Gaussian(self.sigma)
        return Product(g, g, OneHotGaussian(self.sigma)).round_slice(history, weights, x)


@dataclass(frozen=True)
class InfPoly(BlockKernel):
    """``1 / (1 - <s u, s v>)`` on the open unit ball.

    ``scale`` multiplies the coordinates before use; ``radius`` is a declared
    bound ``|s u| <= radius < 1`` that makes the imbedding constant finite.
    """

    radius: float | None = None
    scale: float = 1.0
    type_name = "inf_poly"

    def __post_init__(self):
        if self.radius is not None and not 0.0 <= self.radius < 1.0:
            raise InputError("inf_poly radius must lie in [0, 1)")
        if not (math.isfinite(self.scale) and self.scale > 0):
            raise InputError("inf_poly scale must be positive")

    def _check(self, U):
        norms = self.scale * np.sqrt(np.einsum("ik,ik->i", U, U))
        limit = 1.0 if self.radius is None else self.radius
        bad = norms >= 1.0 if self.radius is None else norms > limit
        if np.any(bad):
            raise DomainError(f"inf_poly point of norm {norms.max():.6g} outside the ball of radius {limit}")

    def arrays(self, U, V):
        self._check(U)
        self._check(V)
        return 1.0 / (1.0 - self.scale**2 * _inner(U, V))

    def imbedding_constant(self):
        if self.radius is None:
            raise UnboundedConstantError("inf_poly needs a declared radius < 1 for a finite constant")
        return math.sqrt(1.0 / (1.0 - self.radius**2))

    def to_dict(self):
        return {"type": "inf_poly", "radius": self.radius, "scale": self.scale}


@dataclass(frozen=True)
class Constant(BlockKernel):
    """``k == value``; the neutral factor of a product."""

    value: float = 1.0
    type_name = "constant"

    def __post_init__(self):
        if not (math.isfinite(self.value) and self.value >= 0):
            raise InputError("constant kernel value must be non-negative")

    def arrays(self, U, V):
        return np.full((U.shape[0], V.shape[0]), float(self.value))

    def imbedding_constant(self):
        return math.sqrt(self.value)

    @property
    def depends_on_p(self):
        return False

    def to_dict(self):
        return {"type": "constant", "value": self.value}

    def round_slice(self, history, weights, x):
        # every history row of ``weights`` sums to zero
        return ConstantSlice(np.zeros(history.m))


@dataclass(frozen=True)
class Linear(Kernel):
    """Rank-one kernel ``phi(w) phi(w')`` with an affine feature.

    ``phi(x, P, y) = <x_coef, x> + <p_coef, P> + y_coef[y]``.  With
    ``p_coef = (0, -1)`` and ``y_coef = (0, 1)`` this is the binary residual
    kernel ``(y - p)(y' - p')``.
    """

    x_coef: tuple = ()
    p_coef: tuple = ()
    y_coef: tuple = ()
    type_name = "linear"

    def __post_init__(self):
        for name in ("x_coef", "p_coef", "y_coef"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))

    def feature(self, a: PointBatch) -> np.ndarray:
        out = np.zeros(len(a))
        if self.x_coef:
            out = out + a.x @ np.asarray(self.x_coef)
        if self.p_coef:
            out = out + a.p @ np.asarray(self.p_coef)
        if self.y_coef:
            out = out + np.asarray(self.y_coef)[a.y]
        return out

    def gram(self, a, b):
        return np.multiply.outer(self.feature(a), self.feature(b))

    def diag(self, a):
        return self.feature(a) ** 2

    def imbedding_constant(self):
        if any(c != 0.0 for c in self.x_coef):
            raise UnboundedConstantError("linear kernel with a datum coefficient is unbounded")
        pc = self.p_coef or (0.0,)
        yc = self.y_coef or (0.0,)
        return max(abs(a + b) for a in pc for b in yc)

    @property
    def depends_on_p(self):
        return any(c != 0.0 for c in self.p_coef)

    def to_dict(self):
        return {"type": "linear", "x": list(self.x_coef), "p": list(self.p_coef), "y": list(self.y_coef)}

    def round_slice(self, history, weights, x):
        m = history.m
        h = history.all_outcomes()
        coef = float(weights.reshape(-1) @ self.feature(h))
        xpart = float(np.asarray(self.x_coef) @ x) if self.x_coef else 0.0
        pc = np.asarray(self.p_coef) if self.p_coef else np.zeros(m)
        yc = np.asarray(self.y_coef) if self.y_coef else np.zeros(m)

        def feat(P):
            return xpart + (P @ pc)[:, None] + yc[None, :]

        return ScalarFeatureSlice(feat, coef)


# ---------------------------------------------------------------------------
# Observation factors.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Kronecker:
    type_name = "kronecker"

    def labels(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return (a[:, None] == b[None, :]).astype(float)

    def matrix(self, m: int) -> np.ndarray:
        return np.eye(m)

    def to_dict(self):
        return {"type": "kronecker"}


@dataclass(frozen=True)
class OneHotGaussian:
    """Gaussian kernel on one-hot codes: ``exp(-2 [y != y'] / sigma^2)``."""

    sigma: float = 1.0
    type_name = "one_hot_gaussian"

    def __post_init__(self):
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise InputError("sigma must be a positive finite number")

    def labels(self, a, b):
        off = math.exp(-2.0 / self.sigma**2)
        return np.where(a[:, None] == b[None, :], 1.0, off)

    def matrix(self, m):
        return self.labels(np.arange(m), np.arange(m))

    def to_dict(self):
        return {"type": "one_hot_gaussian", "sigma": self.sigma}


# ---------------------------------------------------------------------------
# Composites.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Product(Kernel):
    """``k_x(x, x') * k_p(P, P') * k_y(y, y')``."""

    x: BlockKernel = Constant()
    p: BlockKernel = Constant()
    y: Kronecker | OneHotGaussian = Kronecker()
    type_name = "product"

    def gram(self, a, b):
        return self.x.arrays(a.x, b.x) * self.p.arrays(a.p, b.p) * self.y.labels(a.y, b.y)

    def diag(self, a):
        kx = np.array([self.x.arrays(a.x[i : i + 1], a.x[i : i + 1])[0, 0] for i in range(len(a))])
        kp = np.array([self.p.arrays(a.p[i : i + 1], a.p[i : i + 1])[0, 0] for i in range(len(a))])
        return kx * kp

    def imbedding_constant(self):
        return self.x.block_constant("x") * self.p.block_constant("p") * 1.0

    @property
    def depends_on_p(self):
        return not isinstance(self.p, Constant)

    def to_dict(self):
        return {"type": "product", "x": self.x.to_dict(), "p": self.p.to_dict(), "y": self.y.to_dict()}

    def round_slice(self, history, weights, x):
        kx = self.x.arrays(history.x, x[None, :])[:, 0]
        M = weights @ self.y.matrix(history.m)
        if not self.depends_on_p:
            kp0 = float(self.p.value) if isinstance(self.p, Constant) else 1.0
            return ConstantSlice(kp0 * (kx @ M))
        return ProductSlice(self.p, history.p, kx, M)


@dataclass(frozen=True)
class WeightedSum(Kernel):
    """``sum_j a_j k_j``: the kernel of a weighted direct sum of feature spaces."""

    terms: tuple = ()
    type_name = "weighted_sum"

    def __post_init__(self):
        terms = tuple((float(a), k) for a, k in self.terms)
        if not terms:
            raise InputError("weighted_sum needs at least one term")
        for a, _ in terms:
            if not (math.isfinite(a) and a >= 0):
                raise InputError("weighted_sum weights must be non-negative")
        object.__setattr__(self, "terms", terms)

    def gram(self, a, b):
        out = None
        for w, k in self.terms:
            g = w * k.gram(a, b)
            out = g if out is None else out + g
        return out

    def diag(self, a):
        return sum(w * k.diag(a) for w, k in self.terms)

    def imbedding_constant(self):
        return math.sqrt(sum(w * k.imbedding_constant() ** 2 for w, k in self.terms))

    @property
    def depends_on_p(self):
        return any(w > 0 and k.depends_on_p for w, k in self.terms)

    def to_dict(self):
        return {"type": "weighted_sum", "terms": [[w, k.to_dict()] for w, k in self.terms]}

    def round_slice(self, history, weights, x):
        return SumSlice([(w, k.round_slice(history, weights, x)) for w, k in self.terms])


@dataclass(frozen=True)
class Scaled(Kernel):
    """``c * k`` for ``c > 0``."""

    c: float
    kernel: Kernel
    type_name = "scaled"

    def __post_init__(self):
        if not (math.isfinite(self.c) and self.c > 0):
            raise InputError("scale factor must be positive")

    def gram(self, a, b):
        return self.c * self.kernel.gram(a, b)

    def diag(self, a):
        return self.c * self.kernel.diag(a)

    def imbedding_constant(self):
        return math.sqrt(self.c) * self.kernel.imbedding_constant()

    @property
    def depends_on_p(self):
        return self.kernel.depends_on_p

    def to_dict(self):
        return {"type": "scaled", "c": self.c, "kernel": self.kernel.to_dict()}

    def round_slice(self, history, weights, x):
        return SumSlice([(self.c, self.kernel.round_slice(history, weights, x))])


# ---------------------------------------------------------------------------
# Per-round slices.  A slice answers, for a batch of candidate forecasts
# ``P`` (G, m), the contraction
#     u[g, y] = sum_{i, y''} weights[i, y''] * k((x_i, P_i, y''), (x, P_g, y)).
# ---------------------------------------------------------------------------


class RoundSlice:
    def contract(self, P: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class GenericSlice(RoundSlice):
    """Fallback that materialises the Gram block between history and candidates."""

    def __init__(self, kernel, history, weights, x):
        self.kernel = kernel
        self.rows = history.all_outcomes()
        self.w = weights.reshape(-1)
        self.x = x
        self.m = history.m

    def contract(self, P):
        G, m = P.shape
        cand = PointBatch(np.repeat(self.x[None, :], G * m, axis=0), np.repeat(P, m, axis=0), np.tile(np.arange(m), G))
        K = self.kernel.gram(self.rows, cand)
        return (self.w @ K).reshape(G, m)


class ConstantSlice(RoundSlice):
    def __init__(self, u):
        self.u = np.asarray(u, dtype=float)

    def contract(self, P):
        return np.broadcast_to(self.u, (P.shape[0], self.u.size)).copy()


class ProductSlice(RoundSlice):
    def __init__(self, pfactor, hist_p, kx, M):
        self.kp = pfactor.against(hist_p)
        self.kx, self.M = kx[:, None], M

    def contract(self, P):
        return (self.kp(P) * self.kx).T @ self.M


class ScalarFeatureSlice(RoundSlice):
    def __init__(self, feat: Callable, coef: float):
        self.feat, self.coef = feat, coef

    def contract(self, P):
        return self.coef * self.feat(P)


class SumSlice(RoundSlice):
    def __init__(self, parts):
        self.parts = parts

    def contract(self, P):
        out = None
        for w, s in self.parts:
            u = w * s.contract(P)
            out = u if out is None else out + u
        return out


# ---------------------------------------------------------------------------
# Public operations.
# ---------------------------------------------------------------------------


def eval_kernel(spec: Kernel, a: ForecastPoint, b: ForecastPoint) -> float:
    """Evaluate ``k(a, b)`` for two forecast points."""
    if a.m != b.m or a.x.shape != b.x.shape:
        raise InputError("points have different shapes")
    value = spec.gram(PointBatch.from_points([a]), PointBatch.from_points([b]))[0, 0]
    return float(value)


def imbedding_constant(spec: Kernel) -> float:
    return spec.imbedding_constant()


def direct_sum(k0: Kernel, a0: float, k1: Kernel, a1: float) -> WeightedSum:
    """Kernel of the weighted direct sum of the two feature spaces.

    The merged inner product is ``a0 <., .>_0 + a1 <., .>_1``, so the kernel is
    ``a0 k0 + a1 k1``.  Both weights must be strictly positive.
    """
    for a in (a0, a1):
        if not (math.isfinite(a) and a > 0):
            raise InputError("direct_sum weights must be strictly positive")
    return WeightedSum(((a0, k0), (a1, k1)))


def unit_residual_kernel(x: BlockKernel | None = None, p: BlockKernel | None = None) -> Scaled:
    """Binary kernel whose residual weight is exactly ``k_x * k_p``.

    Halving the Kronecker factor makes ``|Phi(., 1) - Phi(., 0)|^2 = 1`` so the
    neutrality function is ``S(p) = sum_i K_i(p) (y_i - p_i)``.
    """
    return Scaled(0.5, Product(x or Constant(), p or Constant(), Kronecker()))


def gram_matrix(spec: Kernel, points) -> np.ndarray:
    batch = points if isinstance(points, PointBatch) else PointBatch.from_points(points)
    return spec.gram(batch, batch)


# ---------------------------------------------------------------------------
# JSON round trip.
# ---------------------------------------------------------------------------

_Y_FACTORS = {"kronecker": Kronecker, "one_hot_gaussian": OneHotGaussian}


def kernel_from_dict(d: dict):
    if not isinstance(d, dict) or "type" not in d:
        raise InputError(f"not a kernel spec: {d!r}")
    t = d["type"]
    if t == "gaussian":
        return Gaussian(float(d.get("sigma", 1.0)))
    if t == "inf_poly":
        r = d.get("radius")
        return InfPoly(None if r is None else float(r), float(d.get("scale", 1.0)))
    if t == "constant":
        return Constant(float(d.get("value", 1.0)))
    if t == "linear":
        return Linear(tuple(d.get("x", ())), tuple(d.get("p", ())), tuple(d.get("y", ())))
    if t == "kronecker":
        return Kronecker()
    if t == "one_hot_gaussian":
        return OneHotGaussian(float(d.get("sigma", 1.0)))
    if t == "product":
        yf = kernel_from_dict(d.get("y", {"type": "kronecker"}))
        if not isinstance(yf, (Kronecker, OneHotGaussian)):
            raise InputError("product y-factor must be kronecker or one_hot_gaussian")
        xf = kernel_from_dict(d.get("x", {"type": "constant"}))
        pf = kernel_from_dict(d.get("p", {"type": "constant"}))
        for f in (xf, pf):
            if not isinstance(f, BlockKernel):
                raise InputError("product x/p factors must be block kernels")
        return Product(xf, pf, yf)
    if t == "weighted_sum":
        return WeightedSum(tuple((float(a), kernel_from_dict(k)) for a, k in d["terms"]))
    if t == "scaled":
        return Scaled(float(d["c"]), kernel_from_dict(d["kernel"]))
    raise InputError(f"unknown kernel type {t!r}")
