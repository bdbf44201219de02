"""Order-book data model and exact event-by-event reconstruction.

Prices are integer ticks, volumes integer shares.  The book keeps full
depth internally; aggregation to the top ``n`` levels happens only when a
snapshot is taken.  Mid-price is tracked as the exact integer
``mid2 = best_ask + best_bid`` (twice the mid, in ticks) so downstream
accounting never touches floats.
"""

from __future__ import annotations

import bisect
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Deque, Iterable, Optional

import numpy as np

from .errors import (
    CrossedBook,
    InsufficientHistory,
    InvalidTrade,
    NonMonotoneSeq,
    UnknownOrderId,
)


class Side(Enum):
    BID = "B"
    ASK = "A"

    @property
    def opposite(self) -> "Side":
        return Side.ASK if self is Side.BID else Side.BID


class EventKind(Enum):
    ADD = "ADD"
    CANCEL = "CXL"
    TRADE = "TRD"


@dataclass(frozen=True, slots=True)
class MarketEvent:
    """One order-book event.

    ``side`` semantics depend on the kind: for ADD it is the side of the
    new resting order, for CANCEL the side of the resting order being
    removed, and for TRADE the side of the *aggressor* (a BID trade
    consumes resting ask volume at ``price``).
    """

    seq: int
    timestamp: int  # integer nanoseconds
    kind: EventKind
    order_id: int
    side: Side
    price: int  # integer ticks
    volume: int  # shares

    def __post_init__(self):
        if self.kind is not EventKind.CANCEL and (self.price <= 0 or self.volume <= 0):
            raise ValueError(
                f"event seq={self.seq}: price and volume must be positive for {self.kind.value}"
            )


@dataclass(frozen=True, slots=True)
class BookSnapshot:
    """Top-n aggregated ladder after one event.

    Level arrays are padded with zeros beyond ``ask_depth``/``bid_depth``;
    occupied levels are always the leading entries, so the presence mask
    of level ``i`` is simply ``i < depth``.
    """

    seq: int
    timestamp: int
    n: int
    ask_prices: tuple[int, ...]
    ask_volumes: tuple[int, ...]
    bid_prices: tuple[int, ...]
    bid_volumes: tuple[int, ...]
    ask_depth: int
    bid_depth: int

    @property
    def best_ask(self) -> Optional[int]:
        return self.ask_prices[0] if self.ask_depth else None

    @property
    def best_bid(self) -> Optional[int]:
        return self.bid_prices[0] if self.bid_depth else None

    @property
    def has_mid(self) -> bool:
        return bool(self.ask_depth and self.bid_depth)

    @property
    def mid2(self) -> Optional[int]:
        """Twice the mid-price in ticks (exact integer), or None if one-sided."""
        if self.ask_depth and self.bid_depth:
            return self.ask_prices[0] + self.bid_prices[0]
        return None

    @property
    def mid(self) -> Optional[float]:
        m2 = self.mid2
        return m2 / 2.0 if m2 is not None else None

    @property
    def spread_ticks(self) -> Optional[int]:
        if self.ask_depth and self.bid_depth:
            return self.ask_prices[0] - self.bid_prices[0]
        return None

    def ask_mask(self) -> tuple[bool, ...]:
        return tuple(i < self.ask_depth for i in range(self.n))

    def bid_mask(self) -> tuple[bool, ...]:
        return tuple(i < self.bid_depth for i in range(self.n))

    def to_row(self) -> tuple[int, ...]:
        """Flatten to (Pa_1, Va_1, Pb_1, Vb_1, ..., Pa_n, Va_n, Pb_n, Vb_n)."""
        ap, av, bp, bv = self.ask_prices, self.ask_volumes, self.bid_prices, self.bid_volumes
        row = []
        for i in range(self.n):
            row.append(ap[i])
            row.append(av[i])
            row.append(bp[i])
            row.append(bv[i])
        return tuple(row)


@dataclass(frozen=True)
class LobWindow:
    """The T most recent snapshot rows, oldest first, shape (T, 4n)."""

    rows: tuple[tuple[int, ...], ...]

    @property
    def T(self) -> int:
        return len(self.rows)

    @property
    def width(self) -> int:
        return len(self.rows[0]) if self.rows else 0

    def to_array(self, dtype=np.float64) -> np.ndarray:
        return np.asarray(self.rows, dtype=dtype)


class _Level:
    """One price level: total volume plus a FIFO queue of [order_id, volume]."""

    __slots__ = ("volume", "queue")

    def __init__(self):
        self.volume = 0
        self.queue: Deque[list] = deque()


class OrderBook:
    """Full-depth book driven by a strictly seq-increasing event stream.

    Single-threaded per instrument stream; snapshots are immutable values
    and safe to share.
    """

    def __init__(self, levels: int = 10):
        self.levels = levels
        self._orders: dict[int, tuple[Side, int, list]] = {}
        self._bids: dict[int, _Level] = {}
        self._asks: dict[int, _Level] = {}
        self._bid_prices: list[int] = []  # ascending; best bid is the last entry
        self._ask_prices: list[int] = []  # ascending; best ask is the first entry
        self._last_seq: Optional[int] = None

    @property
    def best_bid(self) -> Optional[int]:
        return self._bid_prices[-1] if self._bid_prices else None

    @property
    def best_ask(self) -> Optional[int]:
        return self._ask_prices[0] if self._ask_prices else None

    @property
    def mid2(self) -> Optional[int]:
        if self._bid_prices and self._ask_prices:
            return self._bid_prices[-1] + self._ask_prices[0]
        return None

    @property
    def last_seq(self) -> Optional[int]:
        return self._last_seq

    def live_order_count(self) -> int:
        return len(self._orders)

    def depth(self, side: Side) -> int:
        """Number of occupied price levels on a side."""
        return len(self._bid_prices) if side is Side.BID else len(self._ask_prices)

    def level_volume(self, side: Side, price: int) -> int:
        levels = self._bids if side is Side.BID else self._asks
        lvl = levels.get(price)
        return lvl.volume if lvl else 0

    def order_remaining(self, order_id: int) -> Optional[tuple[Side, int, int]]:
        """(side, price, remaining volume) of a live order, or None."""
        rec = self._orders.get(order_id)
        if rec is None:
            return None
        side, price, entry = rec
        return side, price, entry[1]

    def apply_event(self, ev: MarketEvent) -> BookSnapshot:
        if self._last_seq is not None and ev.seq <= self._last_seq:
            raise NonMonotoneSeq(f"seq {ev.seq} after {self._last_seq}")
        self._last_seq = ev.seq

        kind = ev.kind
        if kind is EventKind.ADD:
            self._add(ev)
        elif kind is EventKind.CANCEL:
            self._cancel(ev)
        else:
            self._trade(ev)
        return self.snapshot(ev.seq, ev.timestamp)

    def _add(self, ev: MarketEvent) -> None:
        if ev.order_id in self._orders:
            raise InvalidTrade(f"seq {ev.seq}: duplicate order id {ev.order_id}")
        if ev.side is Side.BID:
            levels, prices = self._bids, self._bid_prices
            opp_best = self._ask_prices[0] if self._ask_prices else None
            if opp_best is not None and ev.price >= opp_best:
                raise CrossedBook(f"seq {ev.seq}: bid {ev.price} >= best ask {opp_best}")
        else:
            levels, prices = self._asks, self._ask_prices
            opp_best = self._bid_prices[-1] if self._bid_prices else None
            if opp_best is not None and ev.price <= opp_best:
                raise CrossedBook(f"seq {ev.seq}: ask {ev.price} <= best bid {opp_best}")
        lvl = levels.get(ev.price)
        if lvl is None:
            lvl = _Level()
            levels[ev.price] = lvl
            bisect.insort(prices, ev.price)
        entry = [ev.order_id, ev.volume]
        lvl.queue.append(entry)
        lvl.volume += ev.volume
        self._orders[ev.order_id] = (ev.side, ev.price, entry)

    def _cancel(self, ev: MarketEvent) -> None:
        rec = self._orders.pop(ev.order_id, None)
        if rec is None:
            raise UnknownOrderId(f"seq {ev.seq}: cancel of unknown order {ev.order_id}")
        side, price, entry = rec
        levels, prices = (self._bids, self._bid_prices) if side is Side.BID else (self._asks, self._ask_prices)
        lvl = levels[price]
        lvl.queue.remove(entry)
        lvl.volume -= entry[1]
        if not lvl.queue:
            del levels[price]
            prices.remove(price)

    def _trade(self, ev: MarketEvent) -> None:
        # Aggressor on ev.side consumes the opposite side's resting queue, FIFO.
        resting = ev.side.opposite
        levels, prices = (self._bids, self._bid_prices) if resting is Side.BID else (self._asks, self._ask_prices)
        lvl = levels.get(ev.price)
        if lvl is None or lvl.volume < ev.volume:
            have = lvl.volume if lvl else 0
            raise InvalidTrade(
                f"seq {ev.seq}: trade of {ev.volume} at {ev.price} but level holds {have}"
            )
        remaining = ev.volume
        queue = lvl.queue
        while remaining:
            entry = queue[0]
            if entry[1] <= remaining:
                remaining -= entry[1]
                queue.popleft()
                del self._orders[entry[0]]
            else:
                entry[1] -= remaining
                remaining = 0
        lvl.volume -= ev.volume
        if not queue:
            del levels[ev.price]
            prices.remove(ev.price)

    def snapshot(self, seq: int = -1, timestamp: int = -1, n: Optional[int] = None) -> BookSnapshot:
        n = self.levels if n is None else n
        ask_p = self._ask_prices[:n]
        bid_p = self._bid_prices[-n:][::-1]
        asks = self._asks
        bids = self._bids
        ask_v = [asks[p].volume for p in ask_p]
        bid_v = [bids[p].volume for p in bid_p]
        ad, bd = len(ask_p), len(bid_p)
        if ad < n:
            pad = [0] * (n - ad)
            ask_p = ask_p + pad
            ask_v = ask_v + pad
        if bd < n:
            pad = [0] * (n - bd)
            bid_p = bid_p + pad
            bid_v = bid_v + pad
        return BookSnapshot(
            seq=seq,
            timestamp=timestamp,
            n=n,
            ask_prices=tuple(ask_p),
            ask_volumes=tuple(ask_v),
            bid_prices=tuple(bid_p),
            bid_volumes=tuple(bid_v),
            ask_depth=ad,
            bid_depth=bd,
        )


class SnapshotHistory:
    """Bounded ring of the most recent snapshots."""

    def __init__(self, maxlen: int):
        self._ring: Deque[BookSnapshot] = deque(maxlen=maxlen)

    def push(self, snap: BookSnapshot) -> None:
        self._ring.append(snap)

    def __len__(self) -> int:
        return len(self._ring)

    def latest(self) -> BookSnapshot:
        if not self._ring:
            raise InsufficientHistory("no snapshots recorded")
        return self._ring[-1]

    def window(self, T: int) -> LobWindow:
        return snapshot_window(self._ring, T)


def snapshot_window(history: Iterable[BookSnapshot], T: int) -> LobWindow:
    """Last T snapshots flattened oldest-first; raises if fewer are held."""
    snaps = list(history)
    if len(snaps) < T:
        raise InsufficientHistory(f"need {T} snapshots, have {len(snaps)}")
    return LobWindow(rows=tuple(s.to_row() for s in snaps[-T:]))


def replay(events: Iterable[MarketEvent], levels: int = 10) -> list[BookSnapshot]:
    """Apply every event to a fresh book and collect the snapshots."""
    book = OrderBook(levels=levels)
    return [book.apply_event(ev) for ev in events]
