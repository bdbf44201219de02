"""Per-step reward decomposition.

Accounting is exact: the simulator tracks cash in tick*share units and
the mid as ``mid2 = 2 * mid`` ticks, so agent value enters here as the
integer ``value2 = 2*cash + inventory*mid2`` (half-tick*share units).
The identity

    delta_pnl == trading_pnl + holding_pnl

holds exactly on the integer fields; currency floats are derived views.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence


def delta_pnl(prev_value: float, curr_value: float) -> float:
    """Change of marked value (cash + inventory * mid) over one step."""
    return curr_value - prev_value


def dampened_pnl(dp: float, eta: float) -> float:
    """Asymmetric damping: profit is scaled down, losses pass through."""
    if eta < 0:
        raise ValueError("eta must be non-negative")
    return dp - max(0.0, eta * dp)


def trading_pnl(fills: Iterable[tuple[float, int]], mid: float) -> float:
    """Sum of signed_volume * (mid - price); volume positive for buys."""
    return sum(v * (mid - p) for p, v in fills)


def inventory_punishment(inventory: int, zeta: float) -> float:
    """L2 penalty zeta * inventory^2, inventory in shares."""
    if zeta < 0:
        raise ValueError("zeta must be non-negative")
    return zeta * inventory * inventory


def hybrid_reward(dp: float, tp: float, ip: float) -> float:
    return dp + tp - ip


@dataclass(frozen=True)
class RewardBreakdown:
    """One step's reward components.

    ``*_units`` fields are exact integers in half-tick*share units;
    the float fields are the currency values the reward actually uses.
    ``total`` is always dampened_pnl + trading_pnl - inventory_punishment.
    """

    delta_pnl: float
    dampened_pnl: float
    trading_pnl: float
    holding_pnl: float
    inventory_punishment: float
    total: float
    delta_pnl_units: int = 0
    trading_pnl_units: int = 0
    holding_pnl_units: int = 0

    def to_dict(self) -> dict:
        return {
            "delta_pnl": self.delta_pnl,
            "dampened_pnl": self.dampened_pnl,
            "trading_pnl": self.trading_pnl,
            "holding_pnl": self.holding_pnl,
            "inventory_punishment": self.inventory_punishment,
            "total": self.total,
        }


ZERO_BREAKDOWN = RewardBreakdown(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)


def step_breakdown(
    prev_value2: int,
    value2: int,
    prev_inventory: int,
    inventory: int,
    prev_mid2: int,
    mid2: int,
    fills: Sequence[tuple[int, int]],
    eta: float,
    zeta: float,
    tick: float,
) -> RewardBreakdown:
    """Assemble the breakdown from exact integer step state.

    ``fills`` are (price_ticks, signed_volume) with positive volume for
    buys; they must already be reflected in ``value2``/``inventory``.
    """
    half_tick = tick / 2.0
    d_units = value2 - prev_value2
    tp_units = 0
    for price, vol in fills:
        tp_units += vol * (mid2 - 2 * price)
    h_units = prev_inventory * (mid2 - prev_mid2)
    dp = d_units * half_tick
    damp = dampened_pnl(dp, eta)
    tp = tp_units * half_tick
    ip = inventory_punishment(inventory, zeta)
    return RewardBreakdown(
        delta_pnl=dp,
        dampened_pnl=damp,
        trading_pnl=tp,
        holding_pnl=h_units * half_tick,
        inventory_punishment=ip,
        total=damp + tp - ip,
        delta_pnl_units=d_units,
        trading_pnl_units=tp_units,
        holding_pnl_units=h_units,
    )
