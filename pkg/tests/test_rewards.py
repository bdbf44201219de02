import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lobmm.rewards import (
    dampened_pnl,
    delta_pnl,
    hybrid_reward,
    inventory_punishment,
    step_breakdown,
    trading_pnl,
)


def test_delta_pnl_basic():
    assert delta_pnl(0.0, 0.0) == 0.0
    assert delta_pnl(5.0, 7.5) == 2.5
    # inventory 100, mid moves +0.01 -> +1.00
    assert delta_pnl(100 * 10.00, 100 * 10.01) == pytest.approx(1.0)


def test_dampened_pnl_paper_setting():
    assert dampened_pnl(2.0, 0.5) == 1.0
    assert dampened_pnl(-2.0, 0.5) == -2.0
    assert dampened_pnl(-2.0, 3.0) == -2.0
    assert dampened_pnl(7.0, 0.0) == 7.0


def test_dampened_rejects_negative_eta():
    with pytest.raises(ValueError):
        dampened_pnl(1.0, -0.1)


def test_trading_pnl_buy_below_mid():
    assert trading_pnl([(9.99, 100)], 10.00) == pytest.approx(1.0)


def test_trading_pnl_sell_above_mid():
    assert trading_pnl([(10.01, -100)], 10.00) == pytest.approx(1.0)


def test_trading_pnl_no_fills():
    assert trading_pnl([], 10.00) == 0.0


def test_inventory_punishment_values():
    assert inventory_punishment(100, 0.01) == pytest.approx(100.0)
    assert inventory_punishment(0, 0.01) == 0.0
    assert inventory_punishment(-250, 0.3) == inventory_punishment(250, 0.3)


def test_hybrid_reward_arithmetic():
    assert hybrid_reward(1.0, 1.0, 100.0) == -98.0
    assert hybrid_reward(3.5, 0.0, 0.0) == 3.5


@settings(max_examples=100, deadline=None)
@given(
    dp=st.floats(-1e6, 1e6),
    eta=st.one_of(st.just(0.0), st.floats(1e-6, 10)),
)
def test_dampened_never_exceeds_delta(dp, eta):
    d = dampened_pnl(dp, eta)
    assert d <= dp
    if dp <= 0 or eta == 0:
        assert d == dp
    elif dp > 1e-9:  # below that, eta*dp can underflow a float ulp
        assert d < dp


def _mk_step(fills, prev_inv, inv, prev_mid2, mid2, eta=0.5, zeta=0.01, tick=0.01):
    cash = -sum(p * v for p, v in fills)
    prev_value2 = 2 * 0 + prev_inv * prev_mid2
    value2 = 2 * cash + inv * mid2
    return step_breakdown(
        prev_value2=prev_value2,
        value2=value2,
        prev_inventory=prev_inv,
        inventory=inv,
        prev_mid2=prev_mid2,
        mid2=mid2,
        fills=fills,
        eta=eta,
        zeta=zeta,
        tick=tick,
    )


def test_step_breakdown_decomposition_identity_exact():
    # buy 100 at 999 ticks, mid moves 2000 -> 2002 (half-tick units)
    b = _mk_step(fills=[(999, 100)], prev_inv=200, inv=300, prev_mid2=2000, mid2=2002)
    assert b.delta_pnl_units == b.trading_pnl_units + b.holding_pnl_units
    assert b.total == b.dampened_pnl + b.trading_pnl - b.inventory_punishment
    # TP = 100 * (1001 - 999) = 200 ticks*share = 2.00 currency
    assert b.trading_pnl == pytest.approx(2.0)
    # holding: 200 shares * 1 tick move... prev_inv 200 * (2002-2000)/2 ticks = 200 ticks
    assert b.holding_pnl == pytest.approx(2.0)
    assert b.delta_pnl == pytest.approx(4.0)
    assert b.inventory_punishment == pytest.approx(0.01 * 300 * 300)


def test_step_breakdown_degenerate_hyperparameters():
    b = _mk_step(fills=[], prev_inv=100, inv=100, prev_mid2=2000, mid2=2006, eta=0.0, zeta=0.0)
    assert b.inventory_punishment == 0.0
    assert b.dampened_pnl == b.delta_pnl
    assert b.total == b.delta_pnl


def test_zero_activity_zero_inventory_step_is_zero():
    b = _mk_step(fills=[], prev_inv=0, inv=0, prev_mid2=2000, mid2=2004)
    assert b.total == 0.0
    assert b.delta_pnl == 0.0


@settings(max_examples=80, deadline=None)
@given(
    fills=st.lists(
        st.tuples(st.integers(900, 1100), st.sampled_from([-100, 100])), max_size=4
    ),
    prev_inv=st.integers(-1000, 1000),
    dm=st.integers(-10, 10),
    eta=st.floats(0, 2),
    zeta=st.floats(0, 1),
)
def test_step_breakdown_identities_random(fills, prev_inv, dm, eta, zeta):
    inv = prev_inv + sum(v for _, v in fills)
    b = _mk_step(fills, prev_inv, inv, 2000, 2000 + dm, eta=eta, zeta=zeta)
    assert b.delta_pnl_units == b.trading_pnl_units + b.holding_pnl_units
    assert b.total == b.dampened_pnl + b.trading_pnl - b.inventory_punishment
    assert b.dampened_pnl <= b.delta_pnl
