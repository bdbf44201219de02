"""Dynamic market state (OSI, RV, RSI) and agent state.

Feature vector layout, fixed and consumed by the environment bridge:

    [0:18]   OSI, category-major: (market orders, limit orders,
             cancellations) x (volume, count) x (10s, 60s, 300s)
    [18:21]  realized volatility over 5, 10, 30 minutes
    [21:24]  RSI over 5, 10, 30 minutes
    [24]     inventory / max_inventory
    [25]     elapsed episode fraction t/T

All windows are wall-clock (event timestamps), not event counts.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Deque, Iterable, Optional, Sequence

from .book import EventKind, MarketEvent, Side

OSI_WINDOWS_S = (10, 60, 300)
RV_RSI_WINDOWS_MIN = (5, 10, 30)

DYNAMIC_STATE_SIZE = 24
AGENT_STATE_SIZE = 2


class OsiCategory(Enum):
    MARKET_ORDER = "market_order"
    LIMIT_ORDER = "limit_order"
    CANCELLATION = "cancellation"


class OsiMode(Enum):
    VOLUME = "volume"
    COUNT = "count"


_CATEGORY_INDEX = {
    OsiCategory.MARKET_ORDER: 0,
    OsiCategory.LIMIT_ORDER: 1,
    OsiCategory.CANCELLATION: 2,
}

_KIND_TO_CATEGORY = {
    EventKind.TRADE: OsiCategory.MARKET_ORDER,
    EventKind.ADD: OsiCategory.LIMIT_ORDER,
    EventKind.CANCEL: OsiCategory.CANCELLATION,
}


def classify_event(ev: MarketEvent) -> tuple[OsiCategory, bool]:
    """Map an event to its OSI category and buy/sell attribution.

    Trades carry the aggressor side, adds the side of the new order, and
    cancels the side of the cancelled resting order.
    """
    return _KIND_TO_CATEGORY[ev.kind], ev.side is Side.BID


@dataclass(frozen=True)
class DynamicState:
    osi: tuple[float, ...]  # 18 values in [-1, 1]
    rv: tuple[float, float, float]
    rsi: tuple[float, float, float]

    def vector(self) -> list[float]:
        return [*self.osi, *self.rv, *self.rsi]


@dataclass(frozen=True)
class AgentStateVec:
    inventory: int
    remaining_time: float  # elapsed fraction t/T, monotone within an episode
    max_inventory: int

    def vector(self) -> list[float]:
        return [self.inventory / self.max_inventory, self.remaining_time]


def osi(
    events: Iterable[MarketEvent],
    category: OsiCategory,
    mode: OsiMode,
    horizon_seconds: float,
    now_ns: Optional[int] = None,
) -> float:
    """Order strength index over the trailing window, 0 when empty."""
    events = list(events)
    if not events:
        return 0.0
    if now_ns is None:
        now_ns = events[-1].timestamp
    cut = now_ns - int(horizon_seconds * 1e9)
    buy = sell = 0
    for ev in events:
        if ev.timestamp <= cut or ev.timestamp > now_ns:
            continue
        cat, is_buy = classify_event(ev)
        if cat is not category:
            continue
        w = ev.volume if mode is OsiMode.VOLUME else 1
        if is_buy:
            buy += w
        else:
            sell += w
    total = buy + sell
    return (buy - sell) / total if total else 0.0


def _step_pairs(
    mids: Sequence[float],
    timestamps: Optional[Sequence[int]],
    horizon_minutes: Optional[float],
    now_ns: Optional[int],
):
    """(prev, cur) pairs whose realization time falls inside the window.

    A step between consecutive mids is stamped at the later point; without
    timestamps the whole series counts.
    """
    if timestamps is None or horizon_minutes is None:
        for pair in zip(mids, mids[1:]):
            yield pair
        return
    if now_ns is None:
        now_ns = timestamps[-1]
    cut = now_ns - int(horizon_minutes * 60 * 1e9)
    for i in range(1, len(mids)):
        if cut < timestamps[i] <= now_ns:
            yield mids[i - 1], mids[i]


def realized_volatility(
    mids: Sequence[float],
    timestamps: Optional[Sequence[int]] = None,
    horizon_minutes: Optional[float] = None,
    now_ns: Optional[int] = None,
) -> float:
    """Root of the sum of squared log-returns over the window; 0 if < 2 mids."""
    acc = 0.0
    for prev, cur in _step_pairs(mids, timestamps, horizon_minutes, now_ns):
        r = math.log(cur / prev)
        acc += r * r
    return math.sqrt(acc)


def rsi(
    mids: Sequence[float],
    timestamps: Optional[Sequence[int]] = None,
    horizon_minutes: Optional[float] = None,
    now_ns: Optional[int] = None,
) -> float:
    """Gain / (gain + loss) over the window; 0.5 when both sums are zero."""
    gain = loss = 0.0
    for prev, cur in _step_pairs(mids, timestamps, horizon_minutes, now_ns):
        d = cur - prev
        if d > 0:
            gain += d
        else:
            loss -= d
    total = gain + loss
    return gain / total if total else 0.5


class FeatureEngine:
    """Incrementally maintained dynamic state over an event stream.

    One instance per stream; feed every event via :meth:`on_event` and read
    the 24-value state with :meth:`state`.  All windows are evicted by
    event timestamp, so values at stream start simply cover what exists.
    """

    def __init__(self):
        # [category][horizon] -> deque of (ts, buy_vol, sell_vol); parallel sums
        self._osi_q: list[list[Deque[tuple[int, int, int]]]] = [
            [deque() for _ in OSI_WINDOWS_S] for _ in range(3)
        ]
        self._osi_sums = [
            [[0, 0, 0, 0] for _ in OSI_WINDOWS_S] for _ in range(3)
        ]  # buy_vol, sell_vol, buy_cnt, sell_cnt
        self._rv_q: list[Deque[tuple[int, float]]] = [deque() for _ in RV_RSI_WINDOWS_MIN]
        self._rv_sums = [0.0, 0.0, 0.0]
        self._rsi_q: list[Deque[tuple[int, int, int]]] = [deque() for _ in RV_RSI_WINDOWS_MIN]
        self._rsi_sums = [[0, 0] for _ in RV_RSI_WINDOWS_MIN]  # gain2, loss2
        self._last_mid2: Optional[int] = None

    def on_event(self, ev: MarketEvent, mid2: Optional[int]) -> None:
        cat, is_buy = classify_event(ev)
        ci = _CATEGORY_INDEX[cat]
        ts = ev.timestamp
        vol = ev.volume
        entry = (ts, vol, 0) if is_buy else (ts, 0, vol)
        queues = self._osi_q[ci]
        sums = self._osi_sums[ci]
        for h in range(3):
            queues[h].append(entry)
            s = sums[h]
            if is_buy:
                s[0] += vol
                s[2] += 1
            else:
                s[1] += vol
                s[3] += 1

        if mid2 is not None:
            prev = self._last_mid2
            if prev is not None and mid2 != prev:
                r = math.log(mid2 / prev)
                r2 = r * r
                d = mid2 - prev
                gain2, loss2 = (d, 0) if d > 0 else (0, -d)
                for h in range(3):
                    self._rv_q[h].append((ts, r2))
                    self._rv_sums[h] += r2
                    self._rsi_q[h].append((ts, gain2, loss2))
                    s = self._rsi_sums[h]
                    s[0] += gain2
                    s[1] += loss2
            self._last_mid2 = mid2

    def _evict(self, now_ns: int) -> None:
        for ci in range(3):
            queues = self._osi_q[ci]
            sums = self._osi_sums[ci]
            for h, horizon in enumerate(OSI_WINDOWS_S):
                cut = now_ns - horizon * 10**9
                q = queues[h]
                s = sums[h]
                while q and q[0][0] <= cut:
                    _, bv, sv = q.popleft()
                    if bv:
                        s[0] -= bv
                        s[2] -= 1
                    else:
                        s[1] -= sv
                        s[3] -= 1
        for h, horizon in enumerate(RV_RSI_WINDOWS_MIN):
            cut = now_ns - horizon * 60 * 10**9
            q = self._rv_q[h]
            while q and q[0][0] <= cut:
                self._rv_sums[h] -= q.popleft()[1]
            q2 = self._rsi_q[h]
            s = self._rsi_sums[h]
            while q2 and q2[0][0] <= cut:
                _, g, l = q2.popleft()
                s[0] -= g
                s[1] -= l

    def state(self, now_ns: int) -> DynamicState:
        self._evict(now_ns)
        osi_vals = []
        for ci in range(3):
            sums = self._osi_sums[ci]
            for mode in range(2):  # 0 = volume, 1 = count
                for h in range(3):
                    s = sums[h]
                    if mode == 0:
                        buy, sell = s[0], s[1]
                    else:
                        buy, sell = s[2], s[3]
                    total = buy + sell
                    osi_vals.append((buy - sell) / total if total else 0.0)
        rv_vals = tuple(math.sqrt(s) if s > 0 else 0.0 for s in self._rv_sums)
        rsi_vals = []
        for g, l in self._rsi_sums:
            total = g + l
            rsi_vals.append(g / total if total else 0.5)
        return DynamicState(osi=tuple(osi_vals), rv=rv_vals, rsi=tuple(rsi_vals))
