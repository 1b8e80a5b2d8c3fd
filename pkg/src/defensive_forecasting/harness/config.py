"""Run configuration, read from TOML or JSON."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..decision import LossSpec
from ..kernel import Constant, Gaussian, Kernel, Kronecker, Product, kernel_from_dict
from ..points import InputError
from .streams import StreamSpec

try:  # Python 3.11+
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

MODES = ("forecast", "decide", "test")
SKEPTICS = ("slln", "quadratic", "mixture")


@dataclass
class Doubling:
    enabled: bool = False
    radius: float = 1.0
    factor: float = 2.0

    def __post_init__(self):
        if self.enabled and not (self.radius > 0 and self.factor > 1):
            raise InputError("doubling needs radius > 0 and factor > 1")


@dataclass
class RuleSpec:
    """A benchmark prediction rule ``x -> gamma``.

    ``constant``: fixed ``gamma``.  ``logistic``: ``sigmoid(w . x + b)`` for
    scalar predictions, ``softmax(W x + b)`` for simplex-valued ones.
    """

    kind: str = "constant"
    gamma: object = None
    weights: object = None
    bias: object = 0.0

    def __post_init__(self):
        if self.kind not in ("constant", "logistic"):
            raise InputError(f"unknown rule kind {self.kind!r}")

    def build(self, loss: LossSpec):
        if self.kind == "constant":
            if self.gamma is None:
                raise InputError("constant rule needs gamma")
            g = loss.check_gamma(self.gamma)
            return lambda x: g
        W = np.asarray(self.weights, dtype=float)
        b = np.asarray(self.bias, dtype=float)
        if loss.gamma_dim == 0:
            w = W.reshape(-1)
            return lambda x: float(1.0 / (1.0 + np.exp(-(w @ np.asarray(x) + float(b)))))
        W = W.reshape(loss.gamma_dim, -1)
        b = np.broadcast_to(b, (loss.gamma_dim,))

        def softmax_rule(x):
            z = W @ np.asarray(x) + b
            e = np.exp(z - z.max())
            return e / e.sum()

        return softmax_rule

    def to_dict(self):
        d = {"kind": self.kind}
        if self.kind == "constant":
            d["gamma"] = np.asarray(self.gamma).tolist()
        else:
            d.update(weights=np.asarray(self.weights).tolist(), bias=np.asarray(self.bias).tolist())
        return d

    @classmethod
    def from_dict(cls, d):
        if d is None:
            return None
        return cls(**d)


def default_kernel(mode: str) -> Kernel:
    if mode == "decide":
        return Product(x=Gaussian(1.0), p=Constant(), y=Kronecker())
    return Product(x=Gaussian(1.0), p=Gaussian(1.0), y=Kronecker())


@dataclass
class RunConfig:
    stream: StreamSpec
    mode: str = "forecast"
    rounds: int = 100
    seed: int = 0
    kernel: Kernel | None = None
    loss: LossSpec | None = None
    tol_neutral: float = 1e-6
    binary_tol: float = 1e-9
    eps_floor: float = 1e-6
    doubling: Doubling = field(default_factory=Doubling)
    skeptics: tuple = ()
    forecaster: dict = field(default_factory=lambda: {"kind": "defensive"})
    randomize: bool = False
    benchmark: RuleSpec | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise InputError(f"unknown mode {self.mode!r}")
        if self.rounds < 0:
            raise InputError("rounds must be non-negative")
        if self.kernel is None:
            self.kernel = default_kernel(self.mode)
        if self.mode == "decide" and self.loss is None:
            raise InputError("decide mode needs a loss")
        for s in self.skeptics:
            if s not in SKEPTICS:
                raise InputError(f"unknown skeptic {s!r}")
        if self.forecaster.get("kind") not in ("defensive", "constant", "replay"):
            raise InputError(f"unknown forecaster {self.forecaster.get('kind')!r}")
        if self.mode != "test" and self.forecaster.get("kind") != "defensive":
            raise InputError("only test mode accepts a non-defensive forecaster")

    def to_dict(self) -> dict:
        d = {
            "mode": self.mode,
            "rounds": self.rounds,
            "seed": self.seed,
            "stream": self.stream.to_dict(),
            "kernel": self.kernel.to_dict(),
            "tolerances": {"neutral": self.tol_neutral, "binary": self.binary_tol, "eps_floor": self.eps_floor},
            "doubling": {"enabled": self.doubling.enabled, "radius": self.doubling.radius, "factor": self.doubling.factor},
            "skeptics": list(self.skeptics),
            "forecaster": dict(self.forecaster),
            "randomize": self.randomize,
        }
        if self.loss is not None:
            d["loss"] = self.loss.to_dict()
        if self.benchmark is not None:
            d["benchmark"] = self.benchmark.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        try:
            tol = d.get("tolerances", {})
            dbl = d.get("doubling", {})
            return cls(
                stream=StreamSpec.from_dict(d.get("stream", "alternating_parity")),
                mode=d.get("mode", "forecast"),
                rounds=int(d.get("rounds", 100)),
                seed=int(d.get("seed", 0)),
                kernel=kernel_from_dict(d["kernel"]) if "kernel" in d else None,
                loss=LossSpec.from_dict(d["loss"]) if d.get("loss") else None,
                tol_neutral=float(tol.get("neutral", 1e-6)),
                binary_tol=float(tol.get("binary", 1e-9)),
                eps_floor=float(tol.get("eps_floor", 1e-6)),
                doubling=Doubling(bool(dbl.get("enabled", False)), float(dbl.get("radius", 1.0)), float(dbl.get("factor", 2.0))),
                skeptics=tuple(d.get("skeptics", ())),
                forecaster=dict(d.get("forecaster", {"kind": "defensive"})),
                randomize=bool(d.get("randomize", False)),
                benchmark=RuleSpec.from_dict(d.get("benchmark")),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InputError):
                raise
            raise InputError(f"bad configuration: {exc}") from exc


def read_config_file(path) -> dict:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from exc
    try:
        if path.suffix.lower() == ".toml":
            return tomllib.loads(raw.decode())
        return json.loads(raw)
    except (ValueError, UnicodeDecodeError) as exc:
        raise InputError(f"cannot parse config {path}: {exc}") from exc


def load_config(path) -> RunConfig:
    return RunConfig.from_dict(read_config_file(path))
