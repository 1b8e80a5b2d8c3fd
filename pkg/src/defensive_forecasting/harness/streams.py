"""Data streams.  Reality moves twice per round: it announces the datum
``x_n`` before the forecast and the outcome ``y_n`` after it, so reactive
streams can depend on the prediction."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..points import InputError

STREAM_KINDS = ("alternating_parity", "sign_flip_adversary", "bernoulli", "logistic_rule", "csv_replay", "jsonl_replay")


class Stream:
    m = 2
    dim = 1
    length: int | None = None  # finite for replays

    def datum(self, n: int) -> np.ndarray:
        raise NotImplementedError

    def outcome(self, n: int, x: np.ndarray, P: np.ndarray, gamma=None) -> int:
        raise NotImplementedError


class AlternatingParity(Stream):
    """``y = 1, 0, 1, 0, ...`` with the parity of ``n`` as the datum."""

    def datum(self, n):
        return np.array([float(n % 2)])

    def outcome(self, n, x, P, gamma=None):
        return n % 2


class SignFlipAdversary(Stream):
    """Reacts to the prediction: ``x_n = sum_{i<n} s_i 3^-i`` with ``s_i = +1``
    when ``gamma_i >= 1/2`` and ``-1`` otherwise, and ``y_n = 1`` exactly when
    ``s_n = -1``.  Any prediction rule that can read ``s_n`` off ``x_n`` loses
    every round, which is why discontinuous rules are excluded."""

    def __init__(self):
        self.signs: list[int] = []
        self._x = 0.0

    def datum(self, n):
        if n - 1 != len(self.signs):
            raise InputError("sign-flip stream must be played in order")
        return np.array([self._x])

    def outcome(self, n, x, P, gamma=None):
        g = float(P[1]) if gamma is None else float(gamma)
        s = 1 if g >= 0.5 else -1
        self.signs.append(s)
        self._x += s * 3.0**-n
        return 1 if s == -1 else 0


class Bernoulli(Stream):
    """``x ~ U[-1, 1]^dim`` and ``y`` i.i.d. with ``P(y = 1) = theta``; a vector
    ``theta`` gives categorical outcomes."""

    def __init__(self, theta, dim=1, seed=0):
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if theta.size == 1:
            theta = np.array([1.0 - theta[0], theta[0]])
        if np.any(theta < 0) or abs(theta.sum() - 1.0) > 1e-9:
            raise InputError("bernoulli theta must be a probability or a probability vector")
        self.theta = theta / theta.sum()
        self.m = theta.size
        self.dim = int(dim)
        self.rng = np.random.default_rng(seed)

    def datum(self, n):
        return self.rng.uniform(-1.0, 1.0, self.dim)

    def outcome(self, n, x, P, gamma=None):
        return int(self.rng.choice(self.m, p=self.theta)) if self.m > 2 else int(self.rng.random() < self.theta[1])


class LogisticRule(Stream):
    """``x ~ U[-1, 1]^d`` and ``P(y = 1 | x) = sigmoid(w . x + b)``."""

    def __init__(self, weights, bias=0.0, seed=0):
        self.w = np.atleast_1d(np.asarray(weights, dtype=float))
        self.b = float(bias)
        self.dim = self.w.size
        self.rng = np.random.default_rng(seed)

    def prob(self, x):
        return 1.0 / (1.0 + np.exp(-(self.w @ x + self.b)))

    def datum(self, n):
        return self.rng.uniform(-1.0, 1.0, self.dim)

    def outcome(self, n, x, P, gamma=None):
        return int(self.rng.random() < self.prob(x))


class Replay(Stream):
    def __init__(self, xs, ys, m=None):
        if len(xs) != len(ys):
            raise InputError("replay needs one outcome per datum")
        self.xs = [np.asarray(x, dtype=float).reshape(-1) for x in xs]
        self.ys = [int(y) for y in ys]
        if self.xs and any(x.size != self.xs[0].size for x in self.xs):
            raise InputError("replay data have inconsistent dimensions")
        if any(not np.all(np.isfinite(x)) for x in self.xs):
            raise InputError("replay data must be finite")
        self.dim = self.xs[0].size if self.xs else 1
        self.m = int(m) if m else max(2, max(self.ys, default=0) + 1)
        if any(not 0 <= y < self.m for y in self.ys):
            raise InputError("replay outcome out of range")
        self.length = len(self.ys)

    def datum(self, n):
        if n > self.length:
            raise InputError(f"replay exhausted after {self.length} rounds")
        return self.xs[n - 1]

    def outcome(self, n, x, P, gamma=None):
        return self.ys[n - 1]


def read_csv(path, m=None) -> Replay:
    """CSV with a header; columns starting with ``x`` form the datum, ``y`` the outcome."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    if not rows:
        return Replay([], [], m)
    xcols = [c for c in rows[0] if c.startswith("x")]
    if "y" not in rows[0] or not xcols:
        raise InputError("csv replay needs x... columns and a y column")
    try:
        xs = [[float(r[c]) for c in xcols] for r in rows]
        ys = [int(float(r["y"])) for r in rows]
    except ValueError as exc:
        raise InputError(f"bad value in {path}: {exc}") from exc
    return Replay(xs, ys, m)


def read_jsonl(path, m=None) -> Replay:
    """One JSON object per line with keys ``x`` and ``y`` (transcripts qualify)."""
    xs, ys = [], []
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    for i, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            xs.append(rec["x"])
            ys.append(rec["y"])
        except (json.JSONDecodeError, KeyError) as exc:
            raise InputError(f"{path}:{i}: {exc}") from exc
    return Replay(xs, ys, m)


@dataclass
class StreamSpec:
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in STREAM_KINDS:
            raise InputError(f"unknown stream kind {self.kind!r}")

    def build(self, seed: int = 0) -> Stream:
        p = self.params
        if self.kind == "alternating_parity":
            return AlternatingParity()
        if self.kind == "sign_flip_adversary":
            return SignFlipAdversary()
        if self.kind == "bernoulli":
            return Bernoulli(p.get("theta", 0.5), p.get("dim", 1), p.get("seed", seed))
        if self.kind == "logistic_rule":
            return LogisticRule(p.get("weights", [2.0]), p.get("bias", 0.0), p.get("seed", seed))
        if "path" not in p:
            raise InputError(f"{self.kind} needs a path")
        reader = read_csv if self.kind == "csv_replay" else read_jsonl
        return reader(p["path"], p.get("m"))

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.params}

    @classmethod
    def from_dict(cls, d) -> "StreamSpec":
        if isinstance(d, str):
            return cls(d)
        d = dict(d)
        kind = d.pop("kind", None)
        if kind is None:
            raise InputError("stream needs a kind")
        return cls(kind, d)
