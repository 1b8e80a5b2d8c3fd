"""Forecast points, simplex forecasts and their batched Euclidean embedding."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SIMPLEX_TOL = 1e-12


class InputError(ValueError):
    """Raised for malformed or non-finite inputs."""


class DomainError(ValueError):
    """Raised when an input lies outside the domain of a kernel or loss."""


def as_simplex(weights, m: int | None = None) -> np.ndarray:
    """Validate ``weights`` as a probability vector and return a float copy.

    Components must be non-negative and sum to one within ``SIMPLEX_TOL``.
    """
    p = np.array(weights, dtype=float).reshape(-1)
    if p.size < 2:
        raise InputError("a simplex needs at least two classes")
    if m is not None and p.size != m:
        raise InputError(f"expected {m} classes, got {p.size}")
    if not np.all(np.isfinite(p)):
        raise InputError("forecast contains non-finite weights")
    if np.any(p < 0.0):
        raise InputError("forecast weights must be non-negative")
    if abs(p.sum() - 1.0) > SIMPLEX_TOL:
        raise InputError(f"forecast weights sum to {p.sum()!r}, not 1")
    return p


def uniform(m: int) -> np.ndarray:
    return np.full(m, 1.0 / m)


def binary(p1: float) -> np.ndarray:
    """Two-class forecast with probability ``p1`` on class 1."""
    return np.array([1.0 - p1, p1])


def as_datum(x) -> np.ndarray:
    v = np.atleast_1d(np.asarray(x, dtype=float)).reshape(-1)
    if not np.all(np.isfinite(v)):
        raise InputError("datum contains non-finite values")
    return v


@dataclass(frozen=True, eq=False)
class ForecastPoint:
    """A single (datum, forecast, observation) triple."""

    x: np.ndarray
    p: np.ndarray
    y: int

    def __post_init__(self):
        object.__setattr__(self, "x", as_datum(self.x))
        object.__setattr__(self, "p", as_simplex(self.p))
        y = int(self.y)
        if not 0 <= y < self.p.size:
            raise InputError(f"class {y} out of range for m={self.p.size}")
        object.__setattr__(self, "y", y)

    @property
    def m(self) -> int:
        return self.p.size

    def embed(self) -> np.ndarray:
        return np.concatenate([self.x, self.p, np.eye(self.m)[self.y]])


@dataclass(frozen=True, eq=False)
class PointBatch:
    """Struct-of-arrays view of many forecast points, used by Gram evaluations.

    ``x`` is (n, d), ``p`` is (n, m) and ``y`` is an (n,) integer array.
    """

    x: np.ndarray
    p: np.ndarray
    y: np.ndarray

    def __len__(self) -> int:
        return self.y.shape[0]

    @property
    def m(self) -> int:
        return self.p.shape[1]

    @classmethod
    def from_points(cls, points) -> "PointBatch":
        points = list(points)
        if not points:
            raise InputError("empty point list")
        return cls(
            np.stack([q.x for q in points]),
            np.stack([q.p for q in points]),
            np.array([q.y for q in points], dtype=int),
        )

    @classmethod
    def of(cls, x, p, y) -> "PointBatch":
        x = np.asarray(x, dtype=float)
        p = np.asarray(p, dtype=float)
        y = np.asarray(y, dtype=int)
        if x.ndim == 1:
            x = x[:, None]
        return cls(x, p, y)

    def onehot(self) -> np.ndarray:
        return np.eye(self.m)[self.y]

    def embed(self) -> np.ndarray:
        return np.concatenate([self.x, self.p, self.onehot()], axis=1)

    def block(self, name: str) -> np.ndarray:
        if name == "x":
            return self.x
        if name == "p":
            return self.p
        if name == "y":
            return self.onehot()
        return self.embed()

    def all_outcomes(self) -> "PointBatch":
        """Expand every point into its m copies ``(x, p, 0), ..., (x, p, m-1)``.

        Row ``i * m + j`` carries outcome ``j`` of point ``i``.
        """
        n, m = len(self), self.m
        return PointBatch(
            np.repeat(self.x, m, axis=0),
            np.repeat(self.p, m, axis=0),
            np.tile(np.arange(m), n),
        )
