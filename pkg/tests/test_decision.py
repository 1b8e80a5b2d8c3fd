import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from defensive_forecasting import (
    Constant,
    DecisionConfig,
    DomainError,
    Gaussian,
    InputError,
    Kronecker,
    LossSpec,
    MasterPredictor,
    Product,
    choice,
    choice_batch,
    expected_loss,
)
from defensive_forecasting.reference import reference_gains
from defensive_forecasting.points import ForecastPoint
from defensive_forecasting.solvers import binary_root

DECIDE_KERNEL = Product(Gaussian(1.0), Constant(), Kronecker())
LOSSES = [
    LossSpec("absolute"),
    LossSpec("quadratic"),
    LossSpec("brier", classes=3),
    LossSpec("cover", stocks=2, clamp=(0.5, 2.0)),
    LossSpec("cover", stocks=3, clamp=(0.8, 1.25)),
]


def prediction_grid(loss, n=2001):
    if loss.gamma_dim == 0:
        return np.linspace(0, 1, n)
    k = loss.gamma_dim
    res = {2: 2000, 3: 140}[k]
    pts = [c for c in itertools.product(range(res + 1), repeat=k - 1) if sum(c) <= res]
    g = np.array([list(c) + [res - sum(c)] for c in pts], dtype=float) / res
    return g


# -- expected_loss ----------------------------------------------------------


def test_expected_loss_examples():
    assert expected_loss(LossSpec("absolute"), None, 1.0, [0.0, 1.0]) == 0.0
    assert expected_loss(LossSpec("absolute"), None, 0.3, [0.3, 0.7]) == pytest.approx(0.7 * 0.7 + 0.3 * 0.3)
    assert expected_loss(LossSpec("quadratic"), None, 0.7, [0.3, 0.7]) == pytest.approx(0.21)


def test_expected_loss_domain():
    with pytest.raises(DomainError):
        expected_loss(LossSpec("absolute"), None, 1.5, [0.5, 0.5])
    with pytest.raises(DomainError):
        expected_loss(LossSpec("brier", classes=3), None, [0.5, 0.6, 0.0], [0.2, 0.3, 0.5])


def test_cover_loss_value():
    loss = LossSpec("cover", stocks=2, clamp=(0.5, 2.0))
    # outcomes are (0.5,0.5), (0.5,2), (2,0.5), (2,2)
    assert loss.m == 4
    assert loss.loss(None, [0.25, 0.75], 1) == pytest.approx(-math.log(0.25 * 0.5 + 0.75 * 2.0))


def test_loss_spec_json_round_trip():
    for loss in LOSSES:
        d = json.loads(json.dumps(loss.to_dict()))
        assert LossSpec.from_dict(d) == loss
    assert LossSpec.from_dict({"kind": "cover", "stocks": 3, "clamp": [0.5, 2.0]}).m == 8
    with pytest.raises(InputError):
        LossSpec("hinge")
    with pytest.raises(InputError):
        LossSpec("cover", clamp=(0.0, 2.0))


# -- choice -----------------------------------------------------------------


def test_choice_examples():
    assert choice(LossSpec("absolute"), None, [0.3, 0.7], 2**-10) == 1.0
    assert choice(LossSpec("quadratic"), None, [0.3, 0.7], 2**-10) == pytest.approx(0.7)
    assert choice(LossSpec("absolute"), None, [0.5, 0.5], 2**-10) == 0.5


def test_absolute_expected_loss_is_flat_at_one_half():
    loss = LossSpec("absolute")
    vals = [expected_loss(loss, None, g, [0.5, 0.5]) for g in np.linspace(0, 1, 11)]
    assert np.allclose(vals, 0.5, atol=1e-15)


@pytest.mark.parametrize("p1,expected", [(0.2, 0.0), (0.7, 1.0)])
def test_binary_choice_is_exact(p1, expected):
    for n in range(1, 31):
        assert choice(LossSpec("absolute"), None, [1 - p1, p1], 2.0**-n) == expected


def test_choice_rejects_non_positive_eps():
    with pytest.raises(InputError):
        choice(LossSpec("absolute"), None, [0.5, 0.5], 0.0)


@pytest.mark.parametrize("loss", LOSSES, ids=lambda l: l.kind + str(l.m))
def test_choice_is_eps_optimal(loss):
    rng = np.random.default_rng(5)
    grid = prediction_grid(loss)
    table = loss.losses(grid)
    # covering radius of the grid times the loss's slope on it
    spacing = 1.0 / (len(grid) - 1) if loss.gamma_dim == 0 else 1.0 / {2: 2000, 3: 140}[loss.gamma_dim]
    slopes = {"absolute": 1.0, "quadratic": 2.0, "brier": 4.0}
    lip = slopes.get(loss.kind) or loss.clamp[1] / loss.clamp[0]
    slack = lip * spacing * max(1, loss.gamma_dim)
    for _ in range(60):
        P = rng.dirichlet(np.full(loss.m, 0.5))
        eps = 2.0 ** -int(rng.integers(1, 21))
        g = choice(loss, None, P, eps)
        best = float((table @ P).min())
        assert expected_loss(loss, None, g, P) <= best + eps + 1e-12
        assert expected_loss(loss, None, g, P) >= best - slack


@given(p=st.floats(0, 1), q=st.floats(0, 1), k=st.integers(1, 25))
def test_absolute_choice_is_continuous_and_monotone(p, q, k):
    loss = LossSpec("absolute")
    eps = 2.0**-k
    W = min(4 * eps, 0.2)
    gp, gq = choice(loss, None, [1 - p, p], eps), choice(loss, None, [1 - q, q], eps)
    assert abs(gp - gq) <= abs(p - q) / W + 1e-12
    if p <= q:
        assert gp <= gq


def test_cover_choice_is_continuous():
    loss = LossSpec("cover", stocks=3, clamp=(0.5, 2.0))
    rng = np.random.default_rng(9)
    P = rng.dirichlet(np.ones(loss.m))
    Q = 0.999 * P + 0.001 * rng.dirichlet(np.ones(loss.m))
    G = choice_batch(loss, np.stack([P, Q]), 2**-4)
    assert np.abs(G[0] - G[1]).max() < 0.05
    assert np.all(G >= 0) and np.allclose(G.sum(axis=1), 1)


@pytest.mark.parametrize("loss", LOSSES, ids=lambda l: l.kind + str(l.m))
def test_losses_are_convex(loss):
    rng = np.random.default_rng(4)
    for _ in range(200):
        if loss.gamma_dim == 0:
            a, b = rng.random(2)
        else:
            a, b = rng.dirichlet(np.ones(loss.gamma_dim), size=2)
        y = int(rng.integers(loss.m))
        mid = loss.loss(None, (np.asarray(a) + np.asarray(b)) / 2, y)
        assert mid <= (loss.loss(None, a, y) + loss.loss(None, b, y)) / 2 + 1e-12


@pytest.mark.parametrize("loss", LOSSES, ids=lambda l: l.kind + str(l.m))
def test_loss_range_within_declared_oscillation(loss):
    rng = np.random.default_rng(8)
    if loss.gamma_dim == 0:
        G = rng.random(2000)
    else:
        G = rng.dirichlet(np.full(loss.gamma_dim, 0.3), size=2000)
    L = loss.losses(G)
    assert np.all(np.isfinite(L))
    assert L.max() - L.min() <= loss.c_lambda + 1e-12
    if loss.kind == "cover":
        assert loss.c_lambda <= math.log(loss.clamp[1] / loss.clamp[0]) + math.log(loss.stocks)


def test_epsilon_schedule():
    cfg = DecisionConfig(LossSpec("absolute"))
    eps = [cfg.epsilon(n) for n in range(1, 200)]
    assert eps[0] == 0.5
    assert all(e > 0 for e in eps)
    assert all(a >= b for a, b in zip(eps, eps[1:]))
    with pytest.raises(InputError):
        cfg.epsilon(0)


# -- master predictor -------------------------------------------------------


def test_first_round_is_uniform():
    mp = MasterPredictor(DECIDE_KERNEL, DecisionConfig(LossSpec("absolute")))
    P, g = mp.predict([0.3])
    assert np.array_equal(P, [0.5, 0.5]) and g == 0.5


def test_observe_requires_predict():
    mp = MasterPredictor(DECIDE_KERNEL, DecisionConfig(LossSpec("absolute")))
    with pytest.raises(InputError):
        mp.observe(1)


@pytest.mark.parametrize("loss", LOSSES, ids=lambda l: l.kind + str(l.m))
def test_master_rounds_respect_constants_and_neutrality(loss):
    rng = np.random.default_rng(21)
    mp = MasterPredictor(DECIDE_KERNEL, DecisionConfig(loss))
    total = 0.0
    N = 60
    for n in range(1, N + 1):
        x = rng.uniform(-1, 1, 1)
        P, g = mp.predict(x)
        cert = mp.certificate(x, P, g)
        assert cert["loss_residual"] <= cert["c_lambda"] + 1e-12
        assert cert["kernel_residual"] <= 2 * cert["c_F"] + 1e-12
        assert mp.fstate.last_certificate <= 1e-6
        y = int(rng.integers(loss.m))
        total += loss.loss(x, g, y) - expected_loss(loss, x, g, P)
        mp.observe(y)
    assert mp.merged_capital <= N * 1e-6
    # realised loss tracks expected loss at the same rate as the kernel statistic
    assert abs(total) <= math.sqrt(loss.c_lambda**2 + 4 * mp.c_F**2) * math.sqrt(N) + N * 1e-6


def _brute_master(xs, ys, loss, eps_floor=1e-6):
    """Master algorithm written directly from the merged gain, no caching."""
    hist, stake, out = [], 0.0, []
    for n, (x, y) in enumerate(zip(xs, ys), start=1):
        eps = max(2.0**-n, eps_floor)

        def gains(P, x=x, eps=eps):
            L = loss.losses(choice(loss, x, P, eps))[0]
            return reference_gains(DECIDE_KERNEL, hist, x, P) + stake * (L - L @ P)

        if not hist:
            P = np.array([0.5, 0.5])
        else:
            S = lambda ps: np.array([0.5 * np.diff(gains(np.array([1 - p, p])))[0] for p in ps])  # noqa: E731
            p, _ = binary_root(S, 1e-9)
            P = np.array([1 - p, p])
        g = choice(loss, x, P, eps)
        out.append((P, g))
        L = loss.losses(g)[0]
        stake += 2.0 * (L[y] - L @ P)
        hist.append(ForecastPoint(x, P, y))
    return out


@pytest.mark.parametrize("kind", ["absolute", "quadratic"])
def test_toy_game_matches_brute_force(kind):
    loss = LossSpec(kind)
    xs = [np.array([0.2]), np.array([-0.5]), np.array([0.9])]
    ys = [1, 0, 1]
    expected = _brute_master(xs, ys, loss)
    mp = MasterPredictor(DECIDE_KERNEL, DecisionConfig(loss))
    for (x, y), (P_ref, g_ref) in zip(zip(xs, ys), expected):
        P, g = mp.predict(x)
        assert P == pytest.approx(P_ref, abs=1e-9)
        assert g == pytest.approx(g_ref, abs=1e-6)
        mp.observe(y)
