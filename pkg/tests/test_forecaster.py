import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from defensive_forecasting import (
    ForecastPoint,
    ForecastState,
    Gaussian,
    InputError,
    Kronecker,
    Linear,
    Product,
    eval_kernel,
    unit_residual_kernel,
)
from defensive_forecasting.reference import ReferenceForecaster, reference_gains

RESIDUAL = Linear(p_coef=(0.0, -1.0), y_coef=(0.0, 1.0))
FULL = Product(Gaussian(1.0), Gaussian(1.0), Kronecker())


def brute_gain(kernel, history, x, P, y):
    """The four-term sum written out with one kernel call per term."""
    m = len(P)
    c = lambda yy: ForecastPoint(x, P, yy)  # noqa: E731
    total = 0.0
    for h in history:
        hi = lambda yy: ForecastPoint(h.x, h.p, yy)  # noqa: E731
        t1 = eval_kernel(kernel, h, c(y))
        t2 = sum(P[a] * eval_kernel(kernel, h, c(a)) for a in range(m))
        t3 = sum(h.p[b] * eval_kernel(kernel, hi(b), c(y)) for b in range(m))
        t4 = sum(P[a] * h.p[b] * eval_kernel(kernel, hi(b), c(a)) for a in range(m) for b in range(m))
        total += t1 - t2 - t3 + t4
    return 2.0 * total


def play(state, xs, ys):
    for x, y in zip(xs, ys):
        P = state.defensive_forecast(x)
        state.observe(x, P, y)
    return state


def random_history(rng, n, d, m):
    return [ForecastPoint(rng.uniform(-1, 1, d), rng.dirichlet(np.ones(m)), int(rng.integers(m))) for _ in range(n)]


def load(state, history):
    for h in history:
        state.observe(h.x, h.p, h.y)
    return state


# -- neutrality_gain --------------------------------------------------------


def test_empty_history_gain_is_zero():
    s = ForecastState(FULL, 3)
    assert s.neutrality_gain([0.2], [0.2, 0.3, 0.5], 1) == 0.0


def test_residual_kernel_single_point():
    s = ForecastState(RESIDUAL, 2)
    s.observe([0.0], [0.5, 0.5], 1)
    for p in (0.0, 0.25, 0.6, 1.0):
        assert s.neutrality_gain([0.0], [1 - p, p], 1) == pytest.approx(2 * 0.5 * (1 - p), abs=1e-15)
        assert s.neutrality_gain([0.0], [1 - p, p], 0) == pytest.approx(2 * 0.5 * (0 - p), abs=1e-15)


def test_observe_then_gain_matches_brute_force():
    rng = np.random.default_rng(0)
    hist = random_history(rng, 3, 2, 3)
    s = ForecastState(FULL, 3)
    for k, h in enumerate(hist, start=1):
        s.observe(h.x, h.p, h.y)
        x, P = rng.uniform(-1, 1, 2), rng.dirichlet(np.ones(3))
        for y in range(3):
            assert s.neutrality_gain(x, P, y) == pytest.approx(brute_gain(FULL, hist[:k], x, P, y), abs=1e-12)


@pytest.mark.parametrize("kernel,m", [(FULL, 2), (FULL, 3), (Gaussian(0.7), 3), (RESIDUAL, 2)])
def test_incremental_matches_from_scratch(kernel, m):
    rng = np.random.default_rng(1)
    for _ in range(100):
        hist = random_history(rng, 20, 2, m)
        s = load(ForecastState(kernel, m), hist)
        x, P = rng.uniform(-1, 1, 2), rng.dirichlet(np.ones(m), size=4)
        cached = s.gains(x, P)
        fresh = np.stack([reference_gains(kernel, hist, x, q) for q in P])
        assert np.abs(cached - fresh).max() <= 1e-9


@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 8), m=st.integers(2, 4))
def test_zero_mean_identity(seed, n, m):
    rng = np.random.default_rng(seed)
    s = load(ForecastState(FULL, m), random_history(rng, n, 1, m))
    P = rng.dirichlet(np.ones(m), size=16)
    g = s.gains(rng.uniform(-1, 1, 1), P)
    assert np.abs((P * g).sum(axis=1)).max() <= 1e-10


def test_observe_validates():
    s = ForecastState(FULL, 2)
    with pytest.raises(InputError):
        s.observe([0.0], [0.5, 0.5], 2)
    with pytest.raises(InputError):
        s.observe([0.0], [0.5, 0.6], 0)
    s.observe([0.0], [0.5, 0.5], 0)
    with pytest.raises(InputError):
        s.observe([0.0, 1.0], [0.5, 0.5], 0)


def test_observe_grows_history_in_order():
    s = ForecastState(FULL, 2)
    s.observe([1.0], [0.5, 0.5], 1)
    assert len(s) == 1
    s.observe([2.0], [0.2, 0.8], 0)
    assert len(s) == 2
    assert [h.x[0] for h in s.history] == [1.0, 2.0]
    assert [h.y for h in s.history] == [1, 0]


# -- defensive_forecast -----------------------------------------------------


@pytest.mark.parametrize("m", [2, 3, 5])
def test_empty_history_forecasts_uniform(m):
    assert np.array_equal(ForecastState(FULL, m).defensive_forecast([0.0]), np.full(m, 1.0 / m))


def test_binary_neutral_root_examples():
    k = unit_residual_kernel()
    s = ForecastState(k, 2)
    assert s.binary_neutral_root([0.0]) == 0.5
    s.observe([0.0], [0.5, 0.5], 1)
    # S(p) = 0.5 everywhere, so the upper boundary
    assert s.S_function([0.0])(np.linspace(0, 1, 5)) == pytest.approx(np.full(5, 0.5))
    assert s.binary_neutral_root([0.0]) == 1.0
    assert np.array_equal(s.defensive_forecast([0.0]), [0.0, 1.0])
    s.observe([0.0], [0.5, 0.5], 0)
    assert s.binary_neutral_root([0.0]) == 0.5

    s = ForecastState(k, 2).observe([0.0], [0.1, 0.9], 0)
    assert s.S_function([0.0])(np.array([0.3]))[0] == pytest.approx(-0.9)
    assert s.binary_neutral_root([0.0]) == 0.0


def test_binary_root_interior():
    s = ForecastState(FULL, 2)
    play(s, [[0.1], [0.4], [-0.3]], [1, 1, 0])
    p = s.binary_neutral_root([0.2])
    assert 0 < p < 1
    assert abs(s.S_function([0.2])(np.array([p]))[0]) <= 1e-9


@pytest.mark.parametrize("kernel,m", [(FULL, 2), (FULL, 3), (Gaussian(0.5), 3), (Product(Gaussian(0.5), Gaussian(2.0), Kronecker()), 4)])
def test_forecasts_are_neutral(kernel, m):
    rng = np.random.default_rng(7)
    s = ForecastState(kernel, m)
    for _ in range(40):
        x = rng.uniform(-1, 1, 1)
        P = s.defensive_forecast(x)
        assert abs(P.sum() - 1) <= 1e-12 and P.min() >= 0
        assert s.gains(x, P[None, :]).max() <= s.tol_neutral
        if m == 2 and 0 < P[1] < 1:
            assert abs(s.S_function(x)(np.array([P[1]]))[0]) <= s.binary_tol
        s.observe(x, P, int(rng.integers(m)))
    # capital never gains more than the accumulated tolerance
    assert s.S <= len(s) * s.tol_neutral


@given(seed=st.integers(0, 2**32 - 1), m=st.integers(2, 3))
def test_capital_matches_gram_sums(seed, m):
    rng = np.random.default_rng(seed)
    s = ForecastState(FULL, m)
    xs = rng.uniform(-1, 1, (6, 1))
    for x in xs:
        P = s.defensive_forecast(x)
        s.observe(x, P, int(rng.integers(m)))
    b = s.batch()
    K = FULL.gram(b.all_outcomes(), b.all_outcomes())
    E = (b.onehot() - b.p).reshape(-1)
    n = len(b)
    blocks = (E[:, None] * K * E[None, :]).reshape(n, m, n, m).sum(axis=(1, 3))
    S = blocks.sum() - np.trace(blocks)
    assert s.S == pytest.approx(S, abs=1e-9)
    assert s.S <= n * s.tol_neutral


def test_determinism():
    rng = np.random.default_rng(3)
    xs, ys = rng.uniform(-1, 1, (15, 1)), rng.integers(0, 3, 15)
    a, b = ForecastState(FULL, 3), ForecastState(FULL, 3)
    for x, y in zip(xs, ys):
        pa, pb = a.defensive_forecast(x), b.defensive_forecast(x)
        assert np.array_equal(pa, pb)
        a.observe(x, pa, y)
        b.observe(x, pb, y)


@pytest.mark.parametrize("m", [2, 3])
def test_matches_reference_forecaster(m):
    rng = np.random.default_rng(11 + m)
    kernel = Product(Gaussian(0.8), Gaussian(1.3), Kronecker())
    s, ref = ForecastState(kernel, m), ReferenceForecaster(kernel, m)
    for _ in range(20):
        x = rng.uniform(-1, 1, 1)
        P, Q = s.defensive_forecast(x), ref.forecast(x)
        assert np.array_equal(P, Q)
        y = int(rng.integers(m))
        s.observe(x, P, y)
        ref.observe(ForecastPoint(x, Q, y))


def test_extra_gain_and_hint():
    s = ForecastState(FULL, 2)
    # zero-mean gain (p, p - 1): only p = 0 neutralises it
    extra = lambda P: np.column_stack([P[:, 1], -P[:, 0]])  # noqa: E731
    P = s.defensive_forecast([0.0], extra)
    assert (s.gains([0.0], P[None, :]) + extra(P[None, :])).max() <= 1e-6
    assert P[1] <= 1e-6
    bad_hint = np.array([0.0, 1.0])
    P2 = s.defensive_forecast([0.0], extra, hint=bad_hint)
    assert np.array_equal(P, P2)
