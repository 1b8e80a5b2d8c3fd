"""Transcripts of played games and their JSONL persistence.

A transcript file holds exactly one JSON object per round.  Run metadata
(kernel, loss, seed, stream, escalation events) goes to a sidecar file
``<path>.meta.json`` so that line counts equal round counts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .points import InputError, as_simplex

OPTIONAL_FIELDS = ("gamma", "loss", "cert", "g", "d", "d_pred")


@dataclass
class Round:
    n: int
    x: list
    p: list
    y: int
    gamma: float | list | None = None
    loss: float | None = None
    cap: dict = field(default_factory=dict)
    cert: float | None = None
    g: float | list | None = None  # sampled prediction
    d: float | list | None = None  # sampled benchmark prediction
    d_pred: float | list | None = None  # benchmark rule's prediction D(x_n)

    def to_dict(self) -> dict:
        out = {"n": self.n, "x": self.x, "p": self.p}
        if self.gamma is not None:
            out["gamma"] = self.gamma
        out["y"] = self.y
        if self.loss is not None:
            out["loss"] = self.loss
        if self.cap:
            out["cap"] = self.cap
        for key in ("cert", "g", "d", "d_pred"):
            val = getattr(self, key)
            if val is not None:
                out[key] = val
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "Round":
        try:
            return cls(
                n=int(d["n"]), x=[float(v) for v in d["x"]], p=[float(v) for v in d["p"]], y=int(d["y"]),
                cap={k: float(v) for k, v in d.get("cap", {}).items()},
                **{k: d.get(k) for k in OPTIONAL_FIELDS},
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed transcript record: {exc}") from exc


def _plain(v):
    """numpy scalars and arrays to JSON-ready Python values."""
    if v is None:
        return None
    if isinstance(v, np.ndarray):
        return [float(a) for a in v.reshape(-1)]
    if isinstance(v, (list, tuple)):
        return [float(a) for a in v]
    return float(v)


@dataclass
class Transcript:
    rounds: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.rounds)

    def append(self, x, P, y, gamma=None, loss=None, cap=None, cert=None, g=None, d=None, d_pred=None) -> Round:
        r = Round(
            n=len(self.rounds) + 1,
            x=_plain(np.asarray(x, dtype=float)),
            p=_plain(np.asarray(P, dtype=float)),
            y=int(y),
            gamma=_plain(gamma),
            loss=None if loss is None else float(loss),
            cap={k: float(v) for k, v in (cap or {}).items()},
            cert=None if cert is None else float(cert),
            g=_plain(g),
            d=_plain(d),
            d_pred=_plain(d_pred),
        )
        self.rounds.append(r)
        return r

    def validate(self):
        for i, r in enumerate(self.rounds, start=1):
            if r.n != i:
                raise InputError(f"round indices must be 1..N contiguous (found {r.n} at position {i})")
            as_simplex(r.p)

    # -- array views -------------------------------------------------------

    @property
    def X(self) -> np.ndarray:
        if not self.rounds:
            return np.zeros((0, 0))
        return np.array([r.x for r in self.rounds], dtype=float)

    @property
    def P(self) -> np.ndarray:
        if not self.rounds:
            return np.zeros((0, 0))
        return np.array([r.p for r in self.rounds], dtype=float)

    @property
    def Y(self) -> np.ndarray:
        return np.array([r.y for r in self.rounds], dtype=int)

    def column(self, name: str) -> list:
        return [getattr(r, name) for r in self.rounds]

    def capitals(self, name: str) -> np.ndarray:
        return np.array([r.cap[name] for r in self.rounds], dtype=float)

    def slice(self, start: int, stop: int) -> "Transcript":
        """Rounds ``start+1 .. stop`` renumbered from 1."""
        out = Transcript(meta=dict(self.meta))
        for r in self.rounds[start:stop]:
            d = r.to_dict()
            d["n"] = len(out.rounds) + 1
            out.rounds.append(Round.from_dict(d))
        return out

    # -- persistence -------------------------------------------------------

    def dumps(self) -> str:
        return "".join(json.dumps(r.to_dict(), separators=(",", ":")) + "\n" for r in self.rounds)

    def to_jsonl(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.dumps())
        meta_path(path).write_text(json.dumps(self.meta, indent=2, sort_keys=True, default=_plain))
        return path

    @classmethod
    def loads(cls, text: str, meta: dict | None = None) -> "Transcript":
        rounds = []
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                rounds.append(Round.from_dict(json.loads(line)))
            except json.JSONDecodeError as exc:
                raise InputError(f"line {lineno}: {exc}") from exc
        t = cls(rounds, dict(meta or {}))
        t.validate()
        return t

    @classmethod
    def from_jsonl(cls, path) -> "Transcript":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise InputError(f"cannot read transcript {path}: {exc}") from exc
        mp = meta_path(path)
        meta = json.loads(mp.read_text()) if mp.exists() else {}
        return cls.loads(text, meta)


def meta_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta.json")
