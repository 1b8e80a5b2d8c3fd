"""Command line entry point.

    defensive-forecasting forecast --config run.toml --rounds 500 --out t.jsonl
    defensive-forecasting decide   --config decide.json --loss absolute
    defensive-forecasting test     --config test.json
    defensive-forecasting metrics  --transcript t.jsonl --out m.csv
    defensive-forecasting bench    --suite discrepancy --rounds 1000

Exit codes: 0 success, 1 bad input, 2 solver failure, 3 a bench suite failed.
Output paths default to ``$DEFENSIVE_FORECASTING_OUT`` (or ``./runs``).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from ..decision import LossSpec
from ..kernel import kernel_from_dict
from ..metrics import (
    DegenerateFunctionError,
    calibration_bins,
    fit_rule_norm,
    hoeffding_band,
    kernel_discrepancy,
    random_test_function,
    regret,
    residual_slack,
    write_metrics_csv,
)
from ..points import DomainError, InputError
from ..solvers import SolverFailure
from ..transcript import Transcript
from . import bench
from .config import RuleSpec, RunConfig, read_config_file
from .game import doubling_wrapper, run_game

OUT_ENV = "DEFENSIVE_FORECASTING_OUT"
EXIT_OK, EXIT_INPUT, EXIT_SOLVER, EXIT_BENCH = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad usage; we reserve 2 for solver failures
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def default_out_dir() -> Path:
    return Path(os.environ.get(OUT_ENV) or "runs")


def _json_or_file(text: str, what: str):
    """Inline JSON, or a path to a JSON/TOML file."""
    p = Path(text)
    if p.suffix.lower() in (".json", ".toml") and p.exists():
        return read_config_file(p)
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{what}: neither a file nor valid JSON ({exc})") from exc


def _parse_loss(text: str) -> dict:
    if text.strip().startswith("{") or Path(text).suffix.lower() in (".json", ".toml"):
        return _json_or_file(text, "--loss")
    return {"kind": text}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="defensive-forecasting", description="Kernel defensive forecasting games, metrics and benchmarks.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def common(p, out_help):
        p.add_argument("--config", help="run configuration (TOML or JSON)")
        p.add_argument("--rounds", type=int, help="number of rounds N")
        p.add_argument("--seed", type=int, help="random seed")
        p.add_argument("--kernel", help="kernel as inline JSON or a JSON file")
        p.add_argument("--loss", help="loss kind (absolute, quadratic, brier, cover) or JSON")
        p.add_argument("--out", help=out_help)

    for mode in ("forecast", "decide", "test"):
        common(sub.add_parser(mode, help=f"play a game in {mode} mode"), "transcript path (.jsonl)")

    m = sub.add_parser("metrics", help="evaluate a saved transcript")
    common(m, "metrics CSV path")
    m.add_argument("--transcript", required=True, help="transcript .jsonl")
    m.add_argument("--functions", type=int, default=20, help="random test functions for the kernel discrepancy")
    m.add_argument("--width", type=float, default=0.1, help="calibration bin width")
    m.add_argument("--delta", type=float, default=0.01, help="confidence level for the randomisation band")
    m.add_argument("--rule", action="append", default=[], help="benchmark rule as JSON (repeatable)")

    b = sub.add_parser("bench", help="run acceptance suites")
    common(b, "directory for the suite CSV files")
    b.add_argument("--suite", default="all", help="suite name or 'all'")
    return parser


# ---------------------------------------------------------------------------
# Game subcommands.
# ---------------------------------------------------------------------------


def _run_config(args, mode: str) -> RunConfig:
    d = read_config_file(args.config) if args.config else {}
    d["mode"] = mode
    if args.rounds is not None:
        d["rounds"] = args.rounds
    if args.seed is not None:
        d["seed"] = args.seed
    if args.kernel:
        d["kernel"] = _json_or_file(args.kernel, "--kernel")
    if args.loss:
        d["loss"] = _parse_loss(args.loss)
    if mode == "decide" and not d.get("loss"):
        raise InputError("decide needs a loss (--loss or a [loss] table in the config)")
    d.setdefault("stream", {"kind": "bernoulli", "theta": 0.5})
    return RunConfig.from_dict(d)


def cmd_game(args, mode: str) -> int:
    cfg = _run_config(args, mode)
    t = doubling_wrapper(cfg) if cfg.doubling.enabled else run_game(cfg)
    out = Path(args.out) if args.out else default_out_dir() / f"{mode}-seed{cfg.seed}.jsonl"
    t.to_jsonl(out)
    certs = [r.cert for r in t.rounds if r.cert is not None]
    worst = f", worst certificate {max(certs):.3e}" if certs else ""
    print(f"{mode}: {len(t)} rounds -> {out}{worst}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Metrics.
# ---------------------------------------------------------------------------


def transcript_metrics(t: Transcript, kernel=None, loss=None, rules=(), n_functions=20, width=0.1, delta=0.01, seed=0) -> list[dict]:
    """All metrics that apply to ``t`` as CSV rows."""
    cfg = t.meta.get("config", {})
    if kernel is None and "kernel" in cfg:
        kernel = kernel_from_dict(cfg["kernel"])
    if loss is None and cfg.get("loss"):
        loss = LossSpec.from_dict(cfg["loss"])
    N, rows = len(t), []
    if N == 0:
        return rows
    m = t.P.shape[1]
    for cls in range(1 if m == 2 else 0, m):
        for b in calibration_bins(t, width, cls):
            rows.append({
                "metric": "calibration_bin", "params": f"class={cls};lo={b.lo:.3g};hi={b.hi:.3g};mean_forecast={b.mean_forecast:.6g};frequency={b.frequency:.6g}",
                "N": b.count, "statistic": b.deviation,
            })
    if kernel is not None:
        rng = np.random.default_rng(seed)
        for j in range(n_functions):
            try:
                f = random_test_function(kernel, rng, d=t.X.shape[1], m=m)
                stat, bound, ratio = kernel_discrepancy(t, f)
            except DegenerateFunctionError:
                continue
            rows.append({"metric": "kernel_discrepancy", "params": f"function={j}", "N": N, "statistic": stat, "bound": bound, "ratio": ratio})
    for name in sorted({k for r in t.rounds for k in r.cap}):
        caps = t.capitals(name)
        rows.append({"metric": f"capital_{name}", "params": "final", "N": N, "statistic": caps[-1]})
    if loss is not None and all(r.gamma is not None for r in t.rounds):
        c_F = t.meta.get("c_F")
        for rs in rules:
            rule = rs.build(loss)
            norm = eta = None
            if kernel is not None and not kernel.depends_on_p and c_F is not None:
                lo, hi = t.X.min(axis=0), t.X.max(axis=0)
                grid = np.random.default_rng(seed).uniform(lo, hi, size=(200, t.X.shape[1]))
                fit = fit_rule_norm(rule, loss, kernel, grid)
                norm, eta = fit.norm, residual_slack(fit.max_residual, loss.c_lambda, c_F, N)
            rep = regret(t, rule, loss, c_F, norm, eta or 0.0)
            rows.append({
                "metric": "regret", "params": f"rule={json.dumps(rs.to_dict(), separators=(',', ':'))}", "N": N,
                "statistic": rep.regret, "bound": rep.bound, "ratio": None if rep.bound is None else rep.regret / rep.bound,
            })
        if all(r.g is not None and r.d is not None for r in t.rounds):
            dev, band = hoeffding_band(t, delta, loss)
            rows.append({"metric": "hoeffding_deviation", "params": f"delta={delta}", "N": N, "statistic": abs(dev), "bound": band, "ratio": abs(dev) / band})
    return rows


def cmd_metrics(args) -> int:
    t = Transcript.from_jsonl(args.transcript)
    kernel = kernel_from_dict(_json_or_file(args.kernel, "--kernel")) if args.kernel else None
    loss = LossSpec.from_dict(_parse_loss(args.loss)) if args.loss else None
    rules = [RuleSpec.from_dict(_json_or_file(r, "--rule")) for r in args.rule]
    if not rules and (loss or t.meta.get("config", {}).get("loss")):
        bench_rule = t.meta.get("config", {}).get("benchmark")
        if bench_rule:
            rules = [RuleSpec.from_dict(bench_rule)]
    rows = transcript_metrics(t, kernel, loss, rules, args.functions, args.width, args.delta, args.seed or 0)
    out = Path(args.out) if args.out else Path(args.transcript).with_suffix(".metrics.csv")
    write_metrics_csv(out, rows)
    print(f"metrics: {len(rows)} rows -> {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Bench.
# ---------------------------------------------------------------------------


def cmd_bench(args) -> int:
    names = bench.SUITE_NAMES if args.suite == "all" else [args.suite]
    for name in names:
        if bench.ALIASES.get(name, name) not in bench.SUITE_NAMES:
            raise InputError(f"unknown suite {name!r}; choose from {', '.join(bench.SUITE_NAMES)} or all")
    out_dir = Path(args.out) if args.out else default_out_dir()
    seed = args.seed or 0
    shared = None
    failed = 0
    for name in names:
        canonical = bench.ALIASES.get(name, name)
        if canonical in ("neutrality", "discrepancy", "capital", "mixture") and shared is None:
            shared = bench.forecast_runs(args.rounds or 2000, range(seed, seed + 5))
        res = bench.run_suite(name, args.rounds, seed, runs=shared)
        write_metrics_csv(out_dir / f"bench-{canonical}.csv", res.rows)
        print(f"{res.line()}  [{res.elapsed_s:.1f} s]")
        failed += not res.passed
    return EXIT_BENCH if failed else EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage().rstrip() + "\nerror: a subcommand is required")
        if args.rounds is not None and args.rounds < 0:
            raise InputError("--rounds must be non-negative")
        if args.command in ("forecast", "decide", "test"):
            return cmd_game(args, args.command)
        if args.command == "metrics":
            return cmd_metrics(args)
        return cmd_bench(args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INPUT
    except (InputError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
