import numpy as np
import pytest

from lobmm.book import EventKind, MarketEvent, OrderBook, Side


def ev(seq, kind, order_id, side, price, volume, ts=None):
    return MarketEvent(
        seq=seq,
        timestamp=ts if ts is not None else seq * 100_000_000,
        kind=kind,
        order_id=order_id,
        side=side,
        price=price,
        volume=volume,
    )


def add(seq, order_id, side, price, volume, ts=None):
    return ev(seq, EventKind.ADD, order_id, side, price, volume, ts)


def cxl(seq, order_id, side, price, volume, ts=None):
    return ev(seq, EventKind.CANCEL, order_id, side, price, volume, ts)


def trd(seq, aggressor, price, volume, ts=None):
    return ev(seq, EventKind.TRADE, 0, aggressor, price, volume, ts)


class FlatListOracle:
    """Brute-force reference book: a flat dict of live orders, re-sorted and
    re-aggregated from scratch after every event.  Shares no code with the
    incremental book."""

    def __init__(self, n=10):
        self.n = n
        self.orders = {}  # oid -> [side, price, volume, arrival]
        self.arrival = 0

    def apply(self, event):
        if event.kind is EventKind.ADD:
            self.orders[event.order_id] = [event.side, event.price, event.volume, self.arrival]
            self.arrival += 1
        elif event.kind is EventKind.CANCEL:
            del self.orders[event.order_id]
        else:
            resting = Side.ASK if event.side is Side.BID else Side.BID
            queue = sorted(
                (rec for rec in self.orders.values() if rec[0] is resting and rec[1] == event.price),
                key=lambda rec: rec[3],
            )
            remaining = event.volume
            for rec in queue:
                take = min(rec[2], remaining)
                rec[2] -= take
                remaining -= take
                if remaining == 0:
                    break
            assert remaining == 0, "oracle fed an infeasible trade"
            self.orders = {oid: rec for oid, rec in self.orders.items() if rec[2] > 0}

    def top(self):
        bid_agg, ask_agg = {}, {}
        BID = Side.BID
        bid_get = bid_agg.get
        ask_get = ask_agg.get
        for side, price, vol, _ in self.orders.values():
            if side is BID:
                bid_agg[price] = bid_get(price, 0) + vol
            else:
                ask_agg[price] = ask_get(price, 0) + vol
        bids = sorted(bid_agg.items(), reverse=True)[: self.n]
        asks = sorted(ask_agg.items())[: self.n]
        pad_b = self.n - len(bids)
        pad_a = self.n - len(asks)
        return (
            tuple(p for p, _ in asks) + (0,) * pad_a,
            tuple(v for _, v in asks) + (0,) * pad_a,
            tuple(p for p, _ in bids) + (0,) * pad_b,
            tuple(v for _, v in bids) + (0,) * pad_b,
            len(asks),
            len(bids),
        )


def snapshot_fields(snap):
    return (
        snap.ask_prices,
        snap.ask_volumes,
        snap.bid_prices,
        snap.bid_volumes,
        snap.ask_depth,
        snap.bid_depth,
    )


def random_valid_stream(seed, n_events, base=1000):
    """Random but always-valid event stream built against a mirror book."""
    rng = np.random.default_rng(seed)
    mirror = OrderBook()
    out = []
    next_id = 1
    seq = 0

    def emit(kind, oid, side, price, vol):
        nonlocal seq
        seq += 1
        event = ev(seq, kind, oid, side, price, vol)
        mirror.apply_event(event)
        out.append(event)

    while len(out) < n_events:
        choice = rng.random()
        live = list(mirror._orders.keys())
        if choice < 0.25 and live:
            oid = live[int(rng.integers(len(live)))]
            side, price, rem = mirror.order_remaining(oid)
            emit(EventKind.CANCEL, oid, side, price, rem)
        elif choice < 0.4 and mirror.best_bid is not None and mirror.best_ask is not None:
            aggressor = Side.BID if rng.random() < 0.5 else Side.ASK
            resting = aggressor.opposite
            price = mirror.best_ask if resting is Side.ASK else mirror.best_bid
            avail = mirror.level_volume(resting, price)
            vol = int(rng.integers(1, avail + 1))
            emit(EventKind.TRADE, 0, aggressor, price, vol)
        else:
            side = Side.BID if rng.random() < 0.5 else Side.ASK
            offset = int(rng.integers(0, 12))
            if side is Side.BID:
                anchor = mirror.best_bid if mirror.best_bid is not None else base - 1
                cap = mirror.best_ask - 1 if mirror.best_ask is not None else anchor + 5
                price = min(anchor + 3 - offset, cap)
            else:
                anchor = mirror.best_ask if mirror.best_ask is not None else base + 1
                floor = mirror.best_bid + 1 if mirror.best_bid is not None else anchor - 5
                price = max(anchor - 3 + offset, floor)
            if price < 1:
                continue
            emit(EventKind.ADD, next_id, side, price, int(rng.integers(1, 500)))
            next_id += 1
    return out


@pytest.fixture
def simple_book():
    return OrderBook(levels=10)
