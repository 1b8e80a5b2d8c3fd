import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from defensive_forecasting import InputError, LossSpec, Transcript
from defensive_forecasting.harness import RunConfig, StreamSpec, constant_forecaster_config, doubling_wrapper, load_config, run_game
from defensive_forecasting.harness.bench import parity_kernel
from defensive_forecasting.harness.streams import Bernoulli, LogisticRule, Replay, SignFlipAdversary, read_csv, read_jsonl
from defensive_forecasting.transcript import Round, meta_path


def config(**kw):
    d = {"stream": {"kind": "bernoulli", "theta": 0.5}, "rounds": 30}
    d.update(kw)
    return RunConfig.from_dict(d)


# -- streams ----------------------------------------------------------------


def test_alternating_parity():
    s = StreamSpec("alternating_parity").build()
    assert [s.outcome(n, s.datum(n), None) for n in range(1, 7)] == [1, 0, 1, 0, 1, 0]
    assert [float(s.datum(n)[0]) for n in range(1, 5)] == [1.0, 0.0, 1.0, 0.0]


def test_sign_flip_construction():
    s = SignFlipAdversary()
    gammas = [0.9, 0.1, 0.5, 0.2]
    xs, ys = [], []
    for n, g in enumerate(gammas, start=1):
        xs.append(float(s.datum(n)[0]))
        ys.append(s.outcome(n, xs[-1], np.array([1 - g, g]), g))
    signs = [1, -1, 1, -1]
    assert ys == [0, 1, 0, 1]
    expected = [sum(signs[i] * 3.0 ** -(i + 1) for i in range(n)) for n in range(4)]
    assert xs == pytest.approx(expected, abs=0)


def test_sign_flip_costs_at_least_half_each_round():
    # the outcome is always on the far side of the prediction
    t = run_game(config(mode="decide", loss={"kind": "absolute"}, stream="sign_flip_adversary", rounds=20))
    assert all(r.loss >= 0.5 for r in t.rounds)


def test_random_streams_are_finite_and_seeded():
    for spec in ({"kind": "bernoulli", "theta": 0.3}, {"kind": "logistic_rule", "weights": [1.0, -1.0]}, {"kind": "bernoulli", "theta": [0.2, 0.3, 0.5]}):
        a, b = StreamSpec.from_dict(spec).build(4), StreamSpec.from_dict(spec).build(4)
        for n in range(1, 50):
            xa, xb = a.datum(n), b.datum(n)
            assert np.all(np.isfinite(xa)) and np.array_equal(xa, xb)
            ya = a.outcome(n, xa, None)
            assert ya == b.outcome(n, xb, None) and 0 <= ya < a.m


def test_bernoulli_frequencies():
    s = Bernoulli(0.7, seed=1)
    ys = [s.outcome(n, s.datum(n), None) for n in range(1, 5001)]
    assert abs(np.mean(ys) - 0.7) < 0.02
    c = Bernoulli([0.2, 0.3, 0.5], seed=1)
    assert c.m == 3


def test_logistic_probability():
    s = LogisticRule([2.0], bias=0.5)
    assert s.prob(np.array([0.25])) == pytest.approx(1 / (1 + math.exp(-1.0)))


def test_bad_streams():
    with pytest.raises(InputError):
        StreamSpec("nope")
    with pytest.raises(InputError):
        Bernoulli(1.5)
    with pytest.raises(InputError):
        StreamSpec("csv_replay").build()
    with pytest.raises(InputError):
        Replay([[0.0]], [0, 1])
    with pytest.raises(InputError):
        Replay([[np.inf]], [0])


def test_csv_and_jsonl_readers(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("x0,x1,y\n0.1,0.2,1\n-0.5,0.0,0\n")
    r = read_csv(p)
    assert r.length == 2 and r.dim == 2 and r.ys == [1, 0]
    q = tmp_path / "d.jsonl"
    q.write_text('{"x": [0.1], "y": 2}\n\n{"x": [0.3], "y": 0}\n')
    r = read_jsonl(q)
    assert r.m == 3 and r.length == 2
    q.write_text('{"x": [0.1]}\n')
    with pytest.raises(InputError):
        read_jsonl(q)
    with pytest.raises(InputError):
        read_csv(tmp_path / "missing.csv")


# -- config -----------------------------------------------------------------


def test_config_files(tmp_path):
    toml = tmp_path / "run.toml"
    toml.write_text(
        'mode = "decide"\nrounds = 12\nseed = 3\n'
        '[stream]\nkind = "logistic_rule"\nweights = [2.0]\n'
        '[loss]\nkind = "quadratic"\n'
        '[kernel]\ntype = "product"\nx = {type = "gaussian", sigma = 0.5}\n'
        '[doubling]\nenabled = true\nradius = 2.0\n'
    )
    cfg = load_config(toml)
    assert cfg.mode == "decide" and cfg.rounds == 12 and cfg.loss == LossSpec("quadratic")
    assert cfg.kernel.x.sigma == 0.5 and cfg.doubling.enabled and cfg.doubling.radius == 2.0
    js = tmp_path / "run.json"
    js.write_text(json.dumps(cfg.to_dict()))
    again = load_config(js)
    assert again.to_dict() == cfg.to_dict()


@pytest.mark.parametrize(
    "bad",
    [
        {"mode": "train"},
        {"rounds": -1},
        {"mode": "decide"},
        {"skeptics": ["oracle"]},
        {"forecaster": {"kind": "constant", "p": [0.5, 0.5]}},
        {"doubling": {"enabled": True, "factor": 1.0}},
        {"rounds": "many"},
    ],
)
def test_bad_configs(bad):
    with pytest.raises(InputError):
        config(**bad)


def test_unreadable_config(tmp_path):
    with pytest.raises(InputError):
        load_config(tmp_path / "missing.toml")
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    with pytest.raises(InputError):
        load_config(bad)


def test_class_count_mismatch():
    cfg = config(mode="decide", loss={"kind": "brier", "classes": 3})
    with pytest.raises(InputError):
        run_game(cfg)


# -- run_game ---------------------------------------------------------------


def test_zero_rounds():
    t = run_game(config(rounds=0))
    assert len(t) == 0 and t.meta["config"]["rounds"] == 0


def test_alternating_parity_learns_the_pattern():
    cfg = RunConfig.from_dict({"stream": "alternating_parity", "rounds": 40, "kernel": parity_kernel().to_dict()})
    t = run_game(cfg)
    p = t.P[:, 1]
    for n in range(5, 40, 2):  # odd rounds are 1-indexed n = 5, 7, ...
        assert p[n - 1] > p[n]


def test_bernoulli_forecasts_track_the_rate():
    t = run_game(config(stream={"kind": "bernoulli", "theta": 0.7}, rounds=1000, seed=1))
    assert abs(t.P[500:, 1].mean() - 0.7) < 0.05


def test_certificates_and_capitals_recorded():
    t = run_game(config(skeptics=["slln", "mixture"]))
    for r in t.rounds:
        assert r.cert <= 1e-6
        assert set(r.cap) == {"slln", "mixture", "quadratic"}
    assert np.all(t.capitals("quadratic") <= np.arange(1, 31) * 1e-6)


def test_decide_mode_records_predictions():
    t = run_game(config(mode="decide", loss={"kind": "absolute"}, randomize=True, benchmark={"kind": "constant", "gamma": 0.5}))
    for r in t.rounds:
        assert 0 <= r.gamma <= 1 and r.g in (0.0, 1.0) and r.d_pred == 0.5
        assert r.loss == pytest.approx(abs(r.y - r.gamma))
        assert "merged" in r.cap


def test_constant_forecaster():
    cfg = constant_forecaster_config(config(), [0.1, 0.9])
    t = run_game(cfg)
    assert np.all(t.P[:, 1] == 0.9)


# -- transcripts ------------------------------------------------------------


def test_transcript_jsonl(tmp_path):
    t = run_game(config(rounds=25, skeptics=["mixture"]))
    path = t.to_jsonl(tmp_path / "t.jsonl")
    lines = path.read_text().splitlines()
    assert len(lines) == 25
    assert list(json.loads(lines[0])) == ["n", "x", "p", "y", "cap", "cert"]
    back = Transcript.from_jsonl(path)
    assert [r.to_dict() for r in back.rounds] == [r.to_dict() for r in t.rounds]
    assert back.meta["config"] == t.meta["config"]
    assert meta_path(path).exists()


finite = st.floats(-1e6, 1e6, allow_nan=False)


@given(
    rows=st.lists(
        st.tuples(st.lists(finite, min_size=1, max_size=3), st.floats(0, 1), st.integers(0, 1), st.none() | st.floats(0, 1), st.floats(-1e3, 1e3)),
        max_size=20,
    )
)
def test_jsonl_round_trip_is_lossless(rows):
    t = Transcript()
    for x, p, y, g, c in rows:
        t.append(x, [1 - p, p], y, gamma=g, cap={"q": c})
    back = Transcript.loads(t.dumps())
    assert [r.to_dict() for r in back.rounds] == [r.to_dict() for r in t.rounds]


def test_malformed_transcripts():
    with pytest.raises(InputError):
        Transcript.loads('{"n": 1, "x": [0], "p": [0.5, 0.5]}\n')
    with pytest.raises(InputError):
        Transcript.loads('{"n": 2, "x": [0], "p": [0.5, 0.5], "y": 0}\n')
    with pytest.raises(InputError):
        Transcript.loads("not json\n")
    with pytest.raises(InputError):
        Round.from_dict({"n": 1, "x": [0], "p": [0.5, 0.5], "y": "a"})


@pytest.mark.parametrize("fmt", ["csv", "jsonl"])
def test_replay_reproduces_forecasts(tmp_path, fmt):
    cfg = config(stream={"kind": "logistic_rule", "weights": [1.5]}, rounds=40, seed=3)
    t = run_game(cfg)
    if fmt == "jsonl":
        path = t.to_jsonl(tmp_path / "t.jsonl")
    else:
        path = tmp_path / "t.csv"
        path.write_text("x0,y\n" + "".join(f"{r.x[0]!r},{r.y}\n" for r in t.rounds))
    replay = config(stream={"kind": f"{fmt}_replay", "path": str(path)}, rounds=40)
    again = run_game(replay)
    assert np.array_equal(again.P, t.P)
    assert np.array_equal(again.Y, t.Y)


def test_replay_too_short(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("x0,y\n0.0,1\n")
    with pytest.raises(InputError):
        run_game(config(stream={"kind": "csv_replay", "path": str(path)}, rounds=2))


def test_replay_forecaster(tmp_path):
    t = run_game(config(rounds=10))
    path = t.to_jsonl(tmp_path / "t.jsonl")
    cfg = config(mode="test", stream={"kind": "jsonl_replay", "path": str(path)}, rounds=10, forecaster={"kind": "replay"}, skeptics=["quadratic"])
    again = run_game(cfg)
    assert np.array_equal(again.P, t.P)
    assert again.capitals("quadratic") == pytest.approx(t.capitals("quadratic"), abs=1e-12)


# -- doubling ---------------------------------------------------------------


def _replay_cfg(tmp_path, xs, **dbl):
    path = tmp_path / "d.csv"
    path.write_text("x0,y\n" + "".join(f"{x},{n % 2}\n" for n, x in enumerate(xs)))
    return config(stream={"kind": "csv_replay", "path": str(path)}, rounds=len(xs), doubling={"enabled": True, **dbl})


@pytest.mark.parametrize("N", [1, 7, 8, 33])
def test_escalations_on_unbounded_stream(tmp_path, N):
    cfg = _replay_cfg(tmp_path, [float(n) for n in range(1, N + 1)], radius=1.0, factor=2.0)
    t = doubling_wrapper(cfg)
    events = t.meta["escalations"]
    assert len(events) == math.floor(math.log2(N)) + 1
    assert [e["n"] for e in events] == [2**k for k in range(len(events))]


def test_single_outlier_escalates_twice(tmp_path):
    xs = [0.1, -0.4, 3.0, 0.2, 0.5]
    t = doubling_wrapper(_replay_cfg(tmp_path, xs, radius=1.0, factor=2.0))
    assert [e["radius"] for e in t.meta["escalations"]] == [2.0, 4.0]
    assert {e["n"] for e in t.meta["escalations"]} == {3}


def test_bounded_stream_never_escalates(tmp_path):
    xs = list(np.linspace(-0.9, 0.9, 15))
    cfg = _replay_cfg(tmp_path, xs, radius=1.0)
    t = doubling_wrapper(cfg)
    assert t.meta["escalations"] == []
    assert np.array_equal(t.P, run_game(cfg).P)


def test_restart_forgets_history(tmp_path):
    xs = [0.1, 0.2, 5.0, 0.3]
    t = doubling_wrapper(_replay_cfg(tmp_path, xs, radius=1.0))
    # the round after an escalation starts from an empty history
    assert t.rounds[2].p == [0.5, 0.5]
