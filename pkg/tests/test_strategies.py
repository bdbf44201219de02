import math

import mpmath
import numpy as np
import pytest

from lobmm.actions import DiscreteAction
from lobmm.book import OrderBook, Side
from lobmm.ingest import SyntheticMarketConfig, generate_synthetic
from lobmm.sim import EpisodeConfig, ExchangeSimulator, run_episode
from lobmm.strategies import (
    ASParams,
    AvellanedaStoikov,
    FixedQuoting,
    LinearQ,
    LinearQParams,
    N_FEATURES,
    RandomQuoting,
    as_quotes,
    estimate_sigma,
    train_linear_q,
)

from conftest import add


def snap_with_levels(levels=5, bid0=999, ask0=1001, vol=100):
    book = OrderBook()
    seq = 1
    for i in range(levels):
        book.apply_event(add(seq, seq, Side.BID, bid0 - i, vol))
        seq += 1
        snap = book.apply_event(add(seq, seq, Side.ASK, ask0 + i, vol))
        seq += 1
    return snap


class FakeOutcome:
    def __init__(self, snap, inventory=0, remaining=0.0):
        from lobmm.features import AgentStateVec

        self.snapshot = snap
        self.agent = AgentStateVec(inventory=inventory, remaining_time=remaining, max_inventory=1000)


# ---------------------------------------------------------------------------
# Avellaneda-Stoikov closed form
# ---------------------------------------------------------------------------


def test_as_reservation_equals_mid_when_flat():
    p = ASParams(gamma=0.1, kappa=1.5)
    r, ask, bid = as_quotes(p, s=100.0, q=0, t=0.3, sigma=2.0)
    assert r == 100.0
    assert ask - 100.0 == pytest.approx(100.0 - bid)


def test_as_time_exhausted_leaves_pure_liquidity_spread():
    p = ASParams(gamma=0.37, kappa=2.2)
    r, ask, bid = as_quotes(p, s=50.0, q=3, t=1.0, sigma=5.0)
    assert r == 50.0  # time term vanished
    expected = (2.0 / 0.37) * math.log(1.0 + 0.37 / 2.2)
    assert ask - bid == pytest.approx(expected, rel=1e-12)


def test_as_worked_example():
    # gamma=0.1, kappa=1.5, sigma=2, tau=1, s=100, q=1
    p = ASParams(gamma=0.1, kappa=1.5)
    r, ask, bid = as_quotes(p, s=100.0, q=1, t=0.0, sigma=2.0)
    assert r == pytest.approx(99.6, abs=1e-12)
    spread = 0.1 * 4.0 + 20.0 * math.log(16.0 / 15.0)
    assert ask - bid == pytest.approx(spread, rel=1e-12)


def test_as_matches_independent_arithmetic_on_grid():
    # independent oracle: mpmath with different expression grouping
    rng = np.random.default_rng(42)
    n = 0
    for _ in range(250):
        gamma = float(rng.uniform(0.01, 2.0))
        kappa = float(rng.uniform(0.1, 5.0))
        sigma = float(rng.uniform(0.0, 4.0))
        tau = float(rng.uniform(0.0, 1.0))
        s = float(rng.uniform(10.0, 500.0))
        q = float(rng.integers(-10, 11))
        p = ASParams(gamma=gamma, kappa=kappa)
        r, ask, bid = as_quotes(p, s=s, q=q, t=1.0 - tau, sigma=sigma)
        with mpmath.workdps(40):
            g, k_, sg, tu, s_, q_ = map(mpmath.mpf, (gamma, kappa, sigma, tau, s, q))
            risk = g * sg**2 * tu
            r_ref = s_ - q_ * risk
            spread_ref = risk + 2 / g * mpmath.log1p(g / k_)
            assert abs(r - float(r_ref)) <= 1e-12 * max(1.0, abs(float(r_ref)))
            assert abs((ask - bid) - float(spread_ref)) <= 1e-12 * max(1.0, float(spread_ref))
        n += 1
    assert n == 250


def test_as_quotes_widen_monotonically_in_risk_term():
    p = ASParams(gamma=0.2, kappa=1.0)
    spreads = []
    for sigma in (0.0, 1.0, 2.0, 3.0):
        _, ask, bid = as_quotes(p, s=100.0, q=0, t=0.0, sigma=sigma)
        spreads.append(ask - bid)
    assert spreads == sorted(spreads)


def test_as_bias_opposes_inventory_sign():
    p = ASParams(gamma=0.1, kappa=1.5)
    r_long, _, _ = as_quotes(p, 100.0, q=5, t=0.0, sigma=1.0)
    r_short, _, _ = as_quotes(p, 100.0, q=-5, t=0.0, sigma=1.0)
    assert r_long < 100.0 < r_short


def test_as_strategy_emits_valid_quote():
    snap = snap_with_levels()
    strat = AvellanedaStoikov(ASParams(sigma=0.5))
    action = strat.decide(FakeOutcome(snap, inventory=300, remaining=0.5))
    assert action.ask_price > action.bid_price
    assert action.bid_price > 0


# ---------------------------------------------------------------------------
# sigma estimation
# ---------------------------------------------------------------------------


def test_estimate_sigma_constant_is_zero():
    assert estimate_sigma([10.0] * 50) == 0.0


def test_estimate_sigma_alternating_ticks():
    mids = [100.0]
    for i in range(40):
        mids.append(mids[-1] + (1 if i % 2 == 0 else -1))
    # population std of the +/-1 changes is exactly 1 before horizon scaling
    assert estimate_sigma(mids, horizon_events=1) == pytest.approx(1.0)
    assert estimate_sigma(mids, horizon_events=400) == pytest.approx(20.0)


def test_estimate_sigma_window_larger_than_history():
    assert estimate_sigma([1.0, 2.0], horizon_events=1, window=100) == pytest.approx(0.0)
    assert estimate_sigma([], horizon_events=1) == 0.0


# ---------------------------------------------------------------------------
# Random / Fixed quoting
# ---------------------------------------------------------------------------


def test_random_quoting_reproducible_and_in_range():
    snap = snap_with_levels()
    a = RandomQuoting(seed=7)
    b = RandomQuoting(seed=7)
    seq_a = [a.decide(FakeOutcome(snap)) for _ in range(50)]
    seq_b = [b.decide(FakeOutcome(snap)) for _ in range(50)]
    assert [(x.ask_price, x.bid_price) for x in seq_a] == [
        (x.ask_price, x.bid_price) for x in seq_b
    ]
    ask_prices = set(snap.ask_prices[:5])
    bid_prices = set(snap.bid_prices[:5])
    for q in seq_a:
        assert q.ask_price in ask_prices
        assert q.bid_price in bid_prices


def test_random_quoting_uniform_chi_square():
    snap = snap_with_levels()
    strat = RandomQuoting(seed=11)
    n = 10_000
    ask_counts = {p: 0 for p in snap.ask_prices[:5]}
    bid_counts = {p: 0 for p in snap.bid_prices[:5]}
    for _ in range(n):
        q = strat.decide(FakeOutcome(snap))
        ask_counts[q.ask_price] += 1
        bid_counts[q.bid_price] += 1
    for counts in (ask_counts, bid_counts):
        expected = n / 5
        chi2 = sum((c - expected) ** 2 / expected for c in counts.values())
        assert chi2 < 18.47  # chi-square df=4 at p=0.001


def test_random_quoting_mask_aware_thin_book():
    snap = snap_with_levels(levels=2)
    strat = RandomQuoting(seed=3)
    for _ in range(20):
        q = strat.decide(FakeOutcome(snap))
        assert q.ask_price in set(snap.ask_prices[:2])
        assert q.bid_price in set(snap.bid_prices[:2])


def test_fixed_quoting_levels():
    snap = snap_with_levels()
    q1 = FixedQuoting(1).decide(FakeOutcome(snap))
    assert (q1.ask_price, q1.bid_price) == (snap.ask_prices[0], snap.bid_prices[0])
    q3 = FixedQuoting(3).decide(FakeOutcome(snap))
    assert (q3.ask_price, q3.bid_price) == (snap.ask_prices[2], snap.bid_prices[2])


def test_fixed_quoting_thin_book_fallback():
    snap = snap_with_levels(levels=2)
    strat = FixedQuoting(3)
    q = strat.decide(FakeOutcome(snap))
    assert (q.ask_price, q.bid_price) == (snap.ask_prices[1], snap.bid_prices[1])
    assert strat.fallbacks == 2


def test_fixed_quoting_level_validation():
    with pytest.raises(ValueError):
        FixedQuoting(0)
    with pytest.raises(ValueError):
        FixedQuoting(4)


# ---------------------------------------------------------------------------
# Linear Q
# ---------------------------------------------------------------------------


def test_linear_q_zero_learning_rate_is_inert():
    agent = LinearQ(LinearQParams(learning_rate=0.0), seed=0)
    phi = np.ones(N_FEATURES)
    before = agent.w.copy()
    agent.update(phi, 3, reward=5.0, phi_next=phi)
    assert np.array_equal(agent.w, before)


def test_linear_q_td_fixed_point_geometric():
    agent = LinearQ(LinearQParams(learning_rate=0.25, discount=0.0), seed=0)
    phi = np.zeros(N_FEATURES)
    phi[0] = 1.0
    qs = []
    for _ in range(40):
        agent.update(phi, 2, reward=1.0, phi_next=None)
        qs.append(float(agent.w[2] @ phi))
    # Q -> 1 geometrically: 1 - (1 - lr)^n
    for n, q in enumerate(qs, start=1):
        assert q == pytest.approx(1.0 - 0.75**n, rel=1e-12)


def test_linear_q_greedy_invariant_under_weight_rescaling():
    rng = np.random.default_rng(5)
    w = rng.normal(size=(8, N_FEATURES))
    a = LinearQ(weights=w, explore=False)
    b = LinearQ(weights=3.7 * w, explore=False)
    for _ in range(25):
        phi = rng.normal(size=N_FEATURES)
        assert int(np.argmax(a.w @ phi)) == int(np.argmax(b.w @ phi))


def test_linear_q_divergence_guard_halves_lr():
    params = LinearQParams(learning_rate=1.0, weight_bound=10.0)
    agent = LinearQ(params, seed=0)
    phi = np.full(N_FEATURES, 5.0)
    agent.update(phi, 0, reward=1e6, phi_next=None)
    assert params.learning_rate == 0.5
    assert np.abs(agent.w).max() <= 10.0


def test_linear_q_save_load_reproduces_decisions(tmp_path):
    cfg = SyntheticMarketConfig(seed=61, event_count=2500)
    events = generate_synthetic(cfg)
    sim = ExchangeSimulator(events, EpisodeConfig(events_per_episode=300, window=50))
    agent, curve = train_linear_q(sim, episodes=3, seed=1)
    assert len(curve) == 3
    path = tmp_path / "weights"
    agent.save(path)
    loaded = LinearQ.load(path.with_suffix(".npz"))
    assert np.array_equal(loaded.w, agent.w)

    sim_a = ExchangeSimulator(events, EpisodeConfig(events_per_episode=300, window=50))
    sim_b = ExchangeSimulator(events, EpisodeConfig(events_per_episode=300, window=50))
    greedy_a = LinearQ(weights=agent.w, explore=False)
    greedy_b = LinearQ(weights=loaded.w, explore=False)
    rep_a, _ = run_episode(sim_a, greedy_a)
    rep_b, _ = run_episode(sim_b, greedy_b)
    assert rep_a == rep_b


def test_linear_q_decides_discrete_actions():
    cfg = SyntheticMarketConfig(seed=62, event_count=1500)
    events = generate_synthetic(cfg)
    sim = ExchangeSimulator(events, EpisodeConfig(events_per_episode=200, window=50))
    out = sim.reset()
    agent = LinearQ(seed=2, explore=True)
    for _ in range(50):
        action = agent.decide(out)
        assert isinstance(action, DiscreteAction) and 0 <= action.index <= 7
        out = sim.step(action)
