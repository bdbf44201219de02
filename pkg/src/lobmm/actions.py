"""Mapping from agent decisions to concrete ask/bid quotes.

The discrete space has 8 actions: 0-6 quote a pair at fixed tick offsets
outward from the best ask/bid, 7 closes the position with market orders.
The continuous space follows the reservation-price construction: a1 sets
the mid-price bias (scaled by max_bias, signed against inventory), a2 sets
the quoted spread (scaled by max_spread), quotes sit symmetrically around
the reservation price and round outward to ticks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

from .book import BookSnapshot

# (ask_offset, bid_offset) in ticks outward from best ask / best bid.
DISCRETE_OFFSETS: tuple[tuple[int, int], ...] = (
    (0, 0),
    (1, 1),
    (2, 2),
    (0, 1),
    (1, 0),
    (0, 2),
    (2, 0),
)
CLOSE_OUT_ACTION = 7
MINIMUM_TRADE_UNIT = 100


@dataclass(frozen=True)
class DiscreteAction:
    index: int

    def __post_init__(self):
        if not 0 <= self.index <= 7:
            raise ValueError(f"discrete action index must be 0..7, got {self.index}")


@dataclass(frozen=True)
class ContinuousAction:
    a1: float
    a2: float

    def clipped(self) -> "ContinuousAction":
        return ContinuousAction(
            a1=min(1.0, max(0.0, self.a1)),
            a2=min(1.0, max(0.0, self.a2)),
        )


@dataclass(frozen=True)
class QuoteAction:
    """Explicit quote prices in ticks, used by classical baselines."""

    ask_price: Optional[int]
    bid_price: Optional[int]


Action = Union[DiscreteAction, ContinuousAction, QuoteAction]


@dataclass(frozen=True)
class CloseOut:
    """Sentinel decision: liquidate inventory with market orders."""


@dataclass(frozen=True)
class QuotePair:
    ask_price: int
    bid_price: int
    volume: int = MINIMUM_TRADE_UNIT
    ask_enabled: bool = True
    bid_enabled: bool = True

    def __post_init__(self):
        if self.ask_enabled and self.bid_enabled and self.bid_price >= self.ask_price:
            raise ValueError(f"crossed quote pair bid {self.bid_price} >= ask {self.ask_price}")
        if (self.ask_enabled and self.ask_price <= 0) or (self.bid_enabled and self.bid_price <= 0):
            raise ValueError("quote prices must be positive")

    def disabled(self) -> "QuotePair":
        return QuotePair(self.ask_price, self.bid_price, self.volume, False, False)


def _snap(x: float) -> float:
    """Remove float fuzz before ceil/floor so exact tick multiples stay exact."""
    r = round(x)
    return float(r) if abs(x - r) < 1e-9 else x


def sign(x: int) -> int:
    return (x > 0) - (x < 0)


def resolve_discrete(
    action: DiscreteAction,
    snap: BookSnapshot,
    inventory: int,
    volume: int = MINIMUM_TRADE_UNIT,
) -> QuotePair | CloseOut:
    if action.index == CLOSE_OUT_ACTION:
        return CloseOut()
    best_ask, best_bid = snap.best_ask, snap.best_bid
    if best_ask is None or best_bid is None:
        raise ValueError("cannot anchor discrete quotes on a one-sided book")
    ask_off, bid_off = DISCRETE_OFFSETS[action.index]
    return QuotePair(
        ask_price=best_ask + ask_off,
        bid_price=best_bid - bid_off,
        volume=volume,
    )


def resolve_continuous(
    action: ContinuousAction,
    snap: BookSnapshot,
    inventory: int,
    max_bias: float,
    max_spread: float,
    tick: float = 0.01,
    volume: int = MINIMUM_TRADE_UNIT,
) -> QuotePair:
    """Reservation-price quoting with outward tick rounding.

    A requested spread below one tick collapses to a 1-tick spread: the
    ask keeps its outward-rounded price and the bid drops to ask - 1.
    """
    if max_bias <= 0 or max_spread <= 0:
        raise ValueError("max_bias and max_spread must be positive")
    a = action.clipped()
    mid2 = snap.mid2
    if mid2 is None:
        raise ValueError("cannot quote around an undefined mid")
    p_m = mid2 / 2.0  # ticks
    delta = a.a1 * max_bias / tick
    p_r = p_m - sign(inventory) * delta
    half_spread = a.a2 * max_spread / tick / 2.0
    ask = math.ceil(_snap(p_r + half_spread))
    bid = math.floor(_snap(p_r - half_spread))
    if bid >= ask:
        bid = ask - 1
    return QuotePair(ask_price=ask, bid_price=max(bid, 1), volume=volume)


def enforce_position_limit(
    quotes: QuotePair,
    inventory: int,
    omega: int,
    unit: int = MINIMUM_TRADE_UNIT,
) -> QuotePair:
    """Disable the side that would grow a position already at the cap."""
    if omega <= 0:
        raise ValueError("omega must be positive")
    cap = omega * unit
    bid_on = quotes.bid_enabled and inventory < cap
    ask_on = quotes.ask_enabled and inventory > -cap
    if bid_on == quotes.bid_enabled and ask_on == quotes.ask_enabled:
        return quotes
    return QuotePair(
        ask_price=quotes.ask_price,
        bid_price=quotes.bid_price,
        volume=quotes.volume,
        ask_enabled=ask_on,
        bid_enabled=bid_on,
    )
