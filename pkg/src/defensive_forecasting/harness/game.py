"""Game orchestration: Reality, Forecaster/Predictor and any Skeptics in lock-step."""

from __future__ import annotations

import json
import time
from pathlib import Path

import numpy as np

from ..decision import DecisionConfig, MasterPredictor
from ..forecaster import ForecastState
from ..kernel import imbedding_constant
from ..points import InputError, as_simplex
from ..skeptic import make_skeptic
from ..solvers import SolverFailure
from ..transcript import Transcript
from .config import RunConfig


class _Player:
    """Common face of the defensive forecaster, the master predictor and the
    fixed forecasters used in test mode."""

    def __init__(self, config: RunConfig, m: int, stream):
        self.config = config
        self.m = m
        self.stream = stream
        self.offset = 0  # rounds played before the latest restart
        self.reset()

    def reset(self):
        c, kind = self.config, self.config.forecaster.get("kind", "defensive")
        self.kind = kind
        self.master = None
        self.state = None
        if c.mode == "decide":
            self.master = MasterPredictor(c.kernel, DecisionConfig(c.loss, c.eps_floor), c.tol_neutral, c.binary_tol)
            self.state = self.master.fstate
        elif kind == "defensive":
            self.state = ForecastState(c.kernel, self.m, c.tol_neutral, c.binary_tol)
        elif kind == "constant":
            self.const = as_simplex(self.config.forecaster["p"], self.m)

    def forecast(self, n, x):
        """Returns ``(P, gamma, certificate)``."""
        if self.master is not None:
            P, gamma = self.master.predict(x, n - self.offset)
            return P, gamma, self.state.last_certificate
        if self.kind == "defensive":
            P = self.state.defensive_forecast(x)
            return P, None, self.state.last_certificate
        if self.kind == "constant":
            return self.const, None, None
        stream = self.stream
        if not hasattr(stream, "forecasts"):
            raise InputError("replay forecaster needs a jsonl stream that carries forecasts")
        return as_simplex(stream.forecasts[n - 1], self.m), None, None

    def observe(self, x, P, y):
        if self.master is not None:
            self.master.observe(y)
        elif self.state is not None:
            self.state.observe(x, P, y)


def _attach_forecasts(stream, config):
    """For replay forecasters, keep the ``p`` column of the replayed file."""
    if config.forecaster.get("kind") != "replay":
        return
    if config.stream.kind != "jsonl_replay":
        raise InputError("replay forecaster needs a jsonl_replay stream")
    lines = [ln for ln in Path(config.stream.params["path"]).read_text().splitlines() if ln.strip()]
    try:
        stream.forecasts = [json.loads(ln)["p"] for ln in lines]
    except KeyError as exc:
        raise InputError("replayed file has no forecasts") from exc


def _stream_m(stream, config):
    m = stream.m
    if config.loss is not None and config.loss.m != m:
        raise InputError(f"stream has {m} classes but the loss expects {config.loss.m}")
    return m


def run_game(config: RunConfig, stream=None) -> Transcript:
    """Play ``config.rounds`` rounds and return the transcript."""
    return _play(config, stream, doubling=False)


def doubling_wrapper(config: RunConfig, stream=None) -> Transcript:
    """Play with the radius-doubling restart rule: whenever ``|x_n| >= R``
    the radius grows by ``factor`` (repeatedly if needed) and the inner
    forecaster restarts from an empty history."""
    return _play(config, stream, doubling=config.doubling.enabled)


def _play(config: RunConfig, stream, doubling: bool) -> Transcript:
    stream = config.stream.build(config.seed) if stream is None else stream
    _attach_forecasts(stream, config)
    m = _stream_m(stream, config)
    N = config.rounds
    if stream.length is not None and N > stream.length:
        raise InputError(f"stream provides only {stream.length} rounds")
    player = _Player(config, m, stream)
    c_F = imbedding_constant(config.kernel)
    skeptics = {name: make_skeptic(name, config.kernel, m) for name in config.skeptics}
    rng = np.random.default_rng([config.seed, 1])
    rule = config.benchmark.build(config.loss) if (config.benchmark and config.loss) else None
    radius = config.doubling.radius
    events = []
    t = Transcript(meta={"config": config.to_dict(), "m": m, "c_F": c_F})
    if config.loss is not None:
        t.meta["c_lambda"] = config.loss.c_lambda
    start = time.perf_counter()
    for n in range(1, N + 1):
        x = np.asarray(stream.datum(n), dtype=float)
        if doubling:
            norm = float(np.linalg.norm(x))
            grew = False
            while norm >= radius:
                radius *= config.doubling.factor
                events.append({"n": n, "radius": radius})
                grew = True
            if grew:
                player.reset()
                player.offset = n - 1
        try:
            P, gamma, cert = player.forecast(n, x)
        except SolverFailure as exc:
            raise SolverFailure(f"round {n}: {exc}") from exc
        y = int(stream.outcome(n, x, P, gamma))
        if not 0 <= y < m:
            raise InputError(f"round {n}: outcome {y} out of range")
        loss = None if gamma is None else config.loss.loss(x, gamma, y)
        caps = {}
        for name, sk in skeptics.items():
            caps[name] = sk.observe(x, P, y)
        player.observe(x, P, y)
        if player.state is not None:
            caps.setdefault("quadratic", player.state.S)
        if player.master is not None:
            caps["merged"] = player.master.merged_capital
        extra = {}
        if config.randomize and gamma is not None:
            extra["g"] = config.loss.sample(gamma, rng)
            if rule is not None:
                dp = rule(x)
                extra["d_pred"] = dp
                extra["d"] = config.loss.sample(dp, rng)
        t.append(x, P, y, gamma=gamma, loss=loss, cap=caps, cert=cert, **extra)
    t.meta["escalations"] = events
    t.meta["elapsed_s"] = time.perf_counter() - start
    return t


def constant_forecaster_config(config: RunConfig, p) -> RunConfig:
    """Copy of ``config`` in test mode with a fixed forecast."""
    d = config.to_dict()
    d["mode"] = "test"
    d["forecaster"] = {"kind": "constant", "p": list(np.asarray(p, dtype=float))}
    return RunConfig.from_dict(d)

