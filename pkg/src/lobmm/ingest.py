"""Event-file I/O, synthetic market generation, and dataset export.

The event CSV contract (bit-exact):

    line 1: ``<instrument>,<tick>,<date>,<levels>,<count>``
    rows:   ``seq,timestamp_ns,kind,order_id,side,price_ticks,volume``

with kind in {ADD, CXL, TRD} and side in {B, A}.  Files use ``\n`` line
endings and no padding, so writing a parsed file reproduces it byte for
byte (modulo a trailing newline).
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from .book import BookSnapshot, EventKind, LobWindow, MarketEvent, OrderBook, Side
from .errors import BadHeader, InsufficientHistory, MalformedRow, NonMonotoneSeq

log = logging.getLogger(__name__)

_KINDS = {k.value: k for k in EventKind}
_SIDES = {s.value: s for s in Side}

# Trading sessions used when session filtering is enabled (ns of day).
_SESSIONS_NS = (
    (10 * 3600 * 10**9, (11 * 3600 + 30 * 60) * 10**9),
    (13 * 3600 * 10**9, (14 * 3600 + 30 * 60) * 10**9),
)


@dataclass(frozen=True)
class EventFileHeader:
    instrument: str
    tick: float
    date: str
    levels: int
    count: int

    def __post_init__(self):
        if self.tick <= 0:
            raise BadHeader(f"tick size must be positive, got {self.tick}")
        if self.levels <= 0 or self.count < 0:
            raise BadHeader("levels must be positive and count non-negative")


def _parse_header(line: str) -> EventFileHeader:
    parts = line.rstrip("\n").split(",")
    if len(parts) != 5:
        raise BadHeader(f"expected 5 header fields, got {len(parts)}")
    try:
        return EventFileHeader(
            instrument=parts[0],
            tick=float(parts[1]),
            date=parts[2],
            levels=int(parts[3]),
            count=int(parts[4]),
        )
    except ValueError as exc:
        raise BadHeader(str(exc)) from None


def _format_header(h: EventFileHeader) -> str:
    return f"{h.instrument},{h.tick!r},{h.date},{h.levels},{h.count}"


def _parse_row(line: str, line_no: int) -> MarketEvent:
    parts = line.split(",")
    if len(parts) != 7:
        raise MalformedRow(line_no, f"expected 7 fields, got {len(parts)}")
    try:
        kind = _KINDS[parts[2]]
        side = _SIDES[parts[4]]
        return MarketEvent(
            seq=int(parts[0]),
            timestamp=int(parts[1]),
            kind=kind,
            order_id=int(parts[3]),
            side=side,
            price=int(parts[5]),
            volume=int(parts[6]),
        )
    except KeyError as exc:
        raise MalformedRow(line_no, f"unknown code {exc.args[0]!r}") from None
    except ValueError as exc:
        raise MalformedRow(line_no, str(exc)) from None


def format_event(ev: MarketEvent) -> str:
    return (
        f"{ev.seq},{ev.timestamp},{ev.kind.value},{ev.order_id},"
        f"{ev.side.value},{ev.price},{ev.volume}"
    )


def parse_events(path: str | Path) -> Iterator[MarketEvent]:
    """Yield events from a CSV file in seq order, validating monotonicity."""
    last_seq = None
    with open(path, "r", encoding="ascii") as f:
        header_line = f.readline()
        if not header_line:
            raise BadHeader("empty file")
        _parse_header(header_line)
        for line_no, line in enumerate(f, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            ev = _parse_row(line, line_no)
            if last_seq is not None and ev.seq <= last_seq:
                raise NonMonotoneSeq(f"line {line_no}: seq {ev.seq} after {last_seq}")
            last_seq = ev.seq
            yield ev


def read_event_file(path: str | Path) -> tuple[EventFileHeader, list[MarketEvent]]:
    with open(path, "r", encoding="ascii") as f:
        header_line = f.readline()
        if not header_line:
            raise BadHeader("empty file")
        header = _parse_header(header_line)
    events = list(parse_events(path))
    if header.count != len(events):
        raise BadHeader(f"header count {header.count} != body rows {len(events)}")
    return header, events


def write_events(path: str | Path, header: EventFileHeader, events: Iterable[MarketEvent]) -> None:
    events = list(events)
    header = EventFileHeader(
        instrument=header.instrument,
        tick=header.tick,
        date=header.date,
        levels=header.levels,
        count=len(events),
    )
    with open(path, "w", encoding="ascii", newline="") as f:
        f.write(_format_header(header))
        f.write("\n")
        for ev in events:
            f.write(format_event(ev))
            f.write("\n")


def filter_sessions(events: Iterable[MarketEvent]) -> Iterator[MarketEvent]:
    """Keep only events whose time of day falls in the stable sessions.

    Timestamps are interpreted as nanoseconds since midnight.  Off by
    default everywhere; synthetic timestamps start at zero so this is
    mainly useful for real recorded feeds.
    """
    for ev in events:
        t = ev.timestamp % (24 * 3600 * 10**9)
        if any(lo <= t <= hi for lo, hi in _SESSIONS_NS):
            yield ev


# ---------------------------------------------------------------------------
# Synthetic market generation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticMarketConfig:
    """Parameters of the reproducible synthetic market.

    The mid-price chases a mean-reverting target; limit adds, cancels and
    market trades fill in realistic book dynamics around it.  With
    ``trend_strength`` > 0 the target additionally carries a piecewise
    drift that is resampled with ``trend_flip_probability`` per event,
    which plants a learnable momentum signal for pre-training datasets.
    """

    seed: int
    initial_mid: int = 1000  # ticks
    mean_reversion_rate: float = 0.01  # per-event pull toward initial_mid
    volatility: float = 0.3  # std of target innovations, ticks/event
    limit_arrival_intensity: float = 1.0  # mean volume multiplier for adds
    level_depth_decay: float = 0.45  # geometric placement of add offsets
    cancel_probability: float = 0.25
    market_order_probability: float = 0.05
    event_count: int = 10_000
    trend_strength: float = 0.0  # ticks/event drift magnitude, 0 = off
    trend_flip_probability: float = 0.0
    spread_ticks: int = 2
    min_levels: int = 6
    base_volume: int = 100
    mean_event_interval_ns: int = 100_000_000
    tick: float = 0.01

    def __post_init__(self):
        for name in ("cancel_probability", "market_order_probability", "trend_flip_probability"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0,1], got {p}")
        if self.cancel_probability + self.market_order_probability > 1.0:
            raise ValueError("cancel + market-order probability exceeds 1")
        if self.limit_arrival_intensity <= 0:
            raise ValueError("limit_arrival_intensity must be positive")
        if not 0.0 <= self.mean_reversion_rate <= 1.0:
            raise ValueError("mean_reversion_rate must be in [0,1]")
        if self.volatility < 0 or self.trend_strength < 0:
            raise ValueError("volatility and trend_strength must be non-negative")
        if self.event_count <= 0:
            raise ValueError("event_count must be positive")
        if not 0.0 < self.level_depth_decay < 1.0:
            raise ValueError("level_depth_decay must be in (0,1)")
        if self.spread_ticks < 1 or self.min_levels < 2 or self.base_volume < 1:
            raise ValueError("bad spread/min_levels/base_volume")
        if self.initial_mid <= self.spread_ticks // 2 + self.min_levels + 2:
            raise ValueError("initial_mid too small for the configured ladder")

    def header(self) -> EventFileHeader:
        return EventFileHeader(
            instrument=f"SYNTH-{self.seed}",
            tick=self.tick,
            date="2026-01-01",
            levels=10,
            count=self.event_count,
        )


class _Blocked:
    """Block-buffered draws from a numpy Generator to cut per-call overhead."""

    def __init__(self, rng: np.random.Generator, kind: str, size: int = 4096):
        self._rng = rng
        self._kind = kind
        self._size = size
        self._buf = np.empty(0)
        self._i = 0

    def next(self) -> float:
        if self._i >= len(self._buf):
            if self._kind == "normal":
                self._buf = self._rng.standard_normal(self._size)
            elif self._kind == "uniform":
                self._buf = self._rng.random(self._size)
            else:
                self._buf = self._rng.exponential(1.0, self._size)
            self._i = 0
        v = self._buf[self._i]
        self._i += 1
        return float(v)


class _SyntheticMarket:
    def __init__(self, cfg: SyntheticMarketConfig):
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed)
        self.book = OrderBook(levels=cfg.min_levels + 4)
        self.norm = _Blocked(self.rng, "normal")
        self.unif = _Blocked(self.rng, "uniform")
        self.expo = _Blocked(self.rng, "exponential")
        self.target = float(cfg.initial_mid)
        self.drift = 0.0
        self.ts = 0
        self.seq = 0
        self.next_id = 1
        self.live_ids: list[int] = []
        self.out: list[MarketEvent] = []
        # bootstrap ladder around the initial mid
        half = max(1, cfg.spread_ticks // 2)
        bid0 = cfg.initial_mid - half
        ask0 = bid0 + cfg.spread_ticks
        self._ladder = [(Side.BID, bid0 - i) for i in range(cfg.min_levels)] + [
            (Side.ASK, ask0 + i) for i in range(cfg.min_levels)
        ]

    def _advance_clock(self) -> None:
        dt = int(self.expo.next() * self.cfg.mean_event_interval_ns)
        self.ts += max(1, dt)
        self.seq += 1

    def _emit(self, kind: EventKind, order_id: int, side: Side, price: int, volume: int) -> None:
        ev = MarketEvent(
            seq=self.seq, timestamp=self.ts, kind=kind,
            order_id=order_id, side=side, price=price, volume=volume,
        )
        self.book.apply_event(ev)
        self.out.append(ev)

    def _add(self, side: Side, price: int, volume: int) -> None:
        oid = self.next_id
        self.next_id += 1
        self._emit(EventKind.ADD, oid, side, price, volume)
        self.live_ids.append(oid)

    def _add_volume(self) -> int:
        v = int(self.cfg.base_volume * self.cfg.limit_arrival_intensity * (0.25 + self.expo.next()))
        return max(1, v)

    def _geometric_offset(self) -> int:
        # support {0, 1, 2, ...}; decay is the per-step stop probability
        g = int(self.rng.geometric(self.cfg.level_depth_decay))
        return min(g - 1, 2 * self.cfg.min_levels)

    def _depth_add(self, side: Side) -> None:
        book = self.book
        if side is Side.BID:
            anchor = book._bid_prices[0] if book._bid_prices else self.cfg.initial_mid - 1
            price = anchor - 1
            if price < 1:
                price = (book.best_bid or 2) - 1
            if price < 1:
                side = Side.ASK
                price = (book._ask_prices[-1] if book._ask_prices else self.cfg.initial_mid + 1) + 1
        else:
            anchor = book._ask_prices[-1] if book._ask_prices else self.cfg.initial_mid + 1
            price = anchor + 1
        self._add(side, price, self._add_volume())

    def _neutral_add(self) -> None:
        side = Side.BID if self.unif.next() < 0.5 else Side.ASK
        off = self._geometric_offset()
        if side is Side.BID:
            price = (self.book.best_bid or self.cfg.initial_mid - 1) - off
            if price < 1:
                price = 1
        else:
            price = (self.book.best_ask or self.cfg.initial_mid + 1) + off
        self._add(side, price, self._add_volume())

    def _pick_cancellable(self) -> Optional[int]:
        for _ in range(8):
            if not self.live_ids:
                return None
            pos = int(self.rng.integers(len(self.live_ids)))
            oid = self.live_ids[pos]
            rec = self.book.order_remaining(oid)
            if rec is None:
                # consumed by an earlier trade; prune lazily
                self.live_ids[pos] = self.live_ids[-1]
                self.live_ids.pop()
                continue
            side, price, remaining = rec
            empties_level = self.book.level_volume(side, price) == remaining
            if empties_level:
                best = self.book.best_bid if side is Side.BID else self.book.best_ask
                if price == best:
                    continue  # would move the mid; corrections handle that
                if self.book.depth(side) <= self.cfg.min_levels:
                    continue  # would thin the ladder below the floor
            return oid
        return None

    def _neutral_cancel(self) -> bool:
        oid = self._pick_cancellable()
        if oid is None:
            return False
        side, price, remaining = self.book.order_remaining(oid)
        self._emit(EventKind.CANCEL, oid, side, price, remaining)
        try:
            pos = self.live_ids.index(oid)
            self.live_ids[pos] = self.live_ids[-1]
            self.live_ids.pop()
        except ValueError:
            pass
        return True

    def _neutral_trade(self) -> bool:
        # partial consumption of a best level so the mid stays put
        aggressor = Side.BID if self.unif.next() < 0.5 else Side.ASK
        resting = aggressor.opposite
        best = self.book.best_ask if resting is Side.ASK else self.book.best_bid
        if best is None:
            return False
        avail = self.book.level_volume(resting, best)
        if avail <= 1:
            return False
        want = 1 + int(self.unif.next() * self.cfg.base_volume)
        vol = min(want, avail - 1)
        self._emit(EventKind.TRADE, 0, aggressor, best, vol)
        return True

    def _sweep_level(self, aggressor: Side) -> bool:
        """Consume an entire best level with one trade, shifting the mid."""
        resting = aggressor.opposite
        if self.book.depth(resting) < 2:
            self._depth_add(resting)
            return True
        best = self.book.best_ask if resting is Side.ASK else self.book.best_bid
        vol = self.book.level_volume(resting, best)
        self._emit(EventKind.TRADE, 0, aggressor, best, vol)
        return True

    def _cancel_best_head(self, side: Side) -> bool:
        """Cancel the queue head at a side's best level (trade-free sweep)."""
        if self.book.depth(side) < 2:
            self._depth_add(side)
            return True
        best = self.book.best_bid if side is Side.BID else self.book.best_ask
        levels = self.book._bids if side is Side.BID else self.book._asks
        oid = levels[best].queue[0][0]
        _, price, remaining = self.book.order_remaining(oid)
        self._emit(EventKind.CANCEL, oid, side, price, remaining)
        return True

    def _correct(self, diff2: int) -> None:
        # Moving one side by k ticks moves mid2 = ask+bid by exactly k, so a
        # single event can close the whole gap.  Which side moves is chosen
        # to keep the spread oscillating around its configured target.
        book = self.book
        cfg = self.cfg
        need = abs(diff2)
        spread = book.best_ask - book.best_bid
        room = spread - 1  # max inward move without crossing
        if diff2 > 0:
            if spread > cfg.spread_ticks and room > 0:
                self._add(Side.BID, book.best_bid + min(need, room), self._add_volume())
            elif cfg.market_order_probability > 0:
                self._sweep_level(Side.BID)  # consume best ask, mid rises
            elif room > 0:
                self._add(Side.BID, book.best_bid + min(need, room), self._add_volume())
            else:
                self._cancel_best_head(Side.ASK)
        else:
            if spread > cfg.spread_ticks and room > 0:
                self._add(Side.ASK, book.best_ask - min(need, room), self._add_volume())
            elif cfg.market_order_probability > 0:
                self._sweep_level(Side.ASK)  # consume best bid, mid falls
            elif room > 0:
                self._add(Side.ASK, book.best_ask - min(need, room), self._add_volume())
            else:
                self._cancel_best_head(Side.BID)

    def _step_target(self) -> None:
        cfg = self.cfg
        if cfg.trend_flip_probability > 0 and self.unif.next() < cfg.trend_flip_probability:
            self.drift = cfg.trend_strength * float(self.rng.integers(-1, 2))
        self.target += cfg.mean_reversion_rate * (cfg.initial_mid - self.target)
        self.target += self.drift
        if cfg.volatility > 0:
            self.target += cfg.volatility * self.norm.next()
        floor = cfg.spread_ticks + cfg.min_levels + 2
        if self.target < floor:
            self.target = float(floor)

    def run(self) -> list[MarketEvent]:
        cfg = self.cfg
        for i in range(cfg.event_count):
            self._advance_clock()
            if self._ladder:
                side, price = self._ladder.pop(0)
                self._add(side, price, self._add_volume())
                continue
            self._step_target()
            if self.book.depth(Side.BID) < cfg.min_levels:
                self._depth_add(Side.BID)
                continue
            if self.book.depth(Side.ASK) < cfg.min_levels:
                self._depth_add(Side.ASK)
                continue
            diff2 = int(round(2 * self.target)) - self.book.mid2
            if diff2 != 0:
                self._correct(diff2)
                continue
            u = self.unif.next()
            if u < cfg.market_order_probability:
                if self._neutral_trade():
                    continue
            elif u < cfg.market_order_probability + cfg.cancel_probability:
                if self._neutral_cancel():
                    continue
            self._neutral_add()
        return self.out


def generate_synthetic(cfg: SyntheticMarketConfig) -> list[MarketEvent]:
    """Deterministic synthetic event stream; never produces a crossed book."""
    return _SyntheticMarket(cfg).run()


# ---------------------------------------------------------------------------
# Labeling (mid-price direction) and normalization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LabeledSample:
    window: LobWindow
    label: int  # -1, 0, +1
    index: int  # snapshot index of the window's last row
    l_value: float = 0.0


def direction_label(mid2s: Sequence[int], t: int, k: int, alpha_num: int, alpha_den: int) -> tuple[int, float]:
    """Label at index t from exact integer mid2 sums.

    Past mean over mids t-k+1..t, future mean over t+1..t+k (k terms each);
    the threshold comparison is exact via cross-multiplication.
    """
    s_minus = 0
    s_plus = 0
    for i in range(k):
        s_minus += mid2s[t - i]
        s_plus += mid2s[t + 1 + i]
    num = s_plus - s_minus
    lhs = num * alpha_den
    rhs = alpha_num * s_minus
    if lhs > rhs:
        label = 1
    elif lhs < -rhs:
        label = -1
    else:
        label = 0
    return label, num / s_minus


def label_windows(
    snapshots: Sequence[BookSnapshot],
    k: int = 10,
    alpha: float = 1e-5,
    T: int = 50,
) -> Iterator[LabeledSample]:
    """Yield (raw window, label) samples per the smoothed-return rule.

    A one-sided prefix (stream bootstrap) is skipped; once the book is
    two-sided the mid must stay defined, otherwise labeling is rejected.
    """
    start = 0
    while start < len(snapshots) and snapshots[start].mid2 is None:
        start += 1
    snapshots = snapshots[start:]
    n = len(snapshots)
    first = max(T, k) - 1
    last = n - 1 - k
    if last < first:
        raise InsufficientHistory(
            f"need at least {max(T, k) + k} snapshots with defined mids, have {n}"
        )
    mid2s: list[int] = []
    for s in snapshots:
        m2 = s.mid2
        if m2 is None:
            raise InsufficientHistory(f"snapshot seq={s.seq} has no mid; cannot label")
        mid2s.append(m2)
    frac = Fraction(alpha)
    a_num, a_den = frac.numerator, frac.denominator
    rows = [s.to_row() for s in snapshots]
    for t in range(first, last + 1):
        label, l_val = direction_label(mid2s, t, k, a_num, a_den)
        window = LobWindow(rows=tuple(rows[t - T + 1 : t + 1]))
        yield LabeledSample(window=window, label=label, index=t, l_value=l_val)


_PRICE_COLS_CACHE: dict[int, np.ndarray] = {}
_VOL_COLS_CACHE: dict[int, np.ndarray] = {}


def _price_cols(width: int) -> np.ndarray:
    cols = _PRICE_COLS_CACHE.get(width)
    if cols is None:
        cols = np.arange(width) % 2 == 0
        _PRICE_COLS_CACHE[width] = cols
    return cols


@dataclass(frozen=True)
class NormStats:
    """Training-split normalization statistics."""

    price_mean: float
    price_std: float
    volume_max: float

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls(price_mean=d["price_mean"], price_std=d["price_std"], volume_max=d["volume_max"])


def window_final_mid(arr: np.ndarray) -> float:
    """Mid of the last row; columns follow the (Pa, Va, Pb, Vb) layout."""
    last = arr[-1]
    ask1, bid1 = last[0], last[2]
    if ask1 <= 0 or bid1 <= 0:
        raise InsufficientHistory("window's final row has no two-sided mid")
    return (ask1 + bid1) / 2.0


def _offset_array(arr: np.ndarray) -> np.ndarray:
    """Price columns to fractional offsets from the window's final mid.

    Empty levels (price 0) map to offset 0 rather than -1; volumes pass
    through unchanged.
    """
    out = arr.astype(np.float64, copy=True)
    mid = window_final_mid(out)
    pc = _price_cols(out.shape[1])
    prices = out[:, pc]
    mask = prices > 0
    prices = np.where(mask, (prices - mid) / mid, 0.0)
    out[:, pc] = prices
    return out


def normalize_array(arr: np.ndarray, stats: NormStats) -> np.ndarray:
    out = _offset_array(arr)
    pc = _price_cols(out.shape[1])
    if stats.price_std > 0:
        out[:, pc] = (out[:, pc] - stats.price_mean) / stats.price_std
    else:
        out[:, pc] = 0.0
    if stats.volume_max > 0:
        out[:, ~pc] = out[:, ~pc] / stats.volume_max
    else:
        out[:, ~pc] = 0.0
    return out


def normalize_window(raw: LobWindow, stats: NormStats) -> LobWindow:
    """Stationarize prices against the window's final mid, z-score them with
    training stats, and max-norm volumes."""
    if stats.price_std <= 0:
        log.warning("degenerate price stats (zero variance); emitting zero price features")
    if stats.volume_max <= 0:
        log.warning("degenerate volume stats (max 0); emitting zero volume features")
    out = normalize_array(raw.to_array(np.float64), stats)
    return LobWindow(rows=tuple(tuple(float(v) for v in row) for row in out))


def compute_norm_stats(windows: Iterable[np.ndarray]) -> NormStats:
    """Population moments of price offsets and max volume over raw windows."""
    total = 0
    acc = 0.0
    acc2 = 0.0
    vmax = 0.0
    for arr in windows:
        off = _offset_array(np.asarray(arr))
        pc = _price_cols(off.shape[1])
        p = off[:, pc]
        total += p.size
        acc += float(p.sum())
        acc2 += float((p * p).sum())
        v = off[:, ~pc]
        if v.size:
            vmax = max(vmax, float(v.max()))
    if total == 0:
        raise InsufficientHistory("no windows provided")
    mean = acc / total
    var = max(acc2 / total - mean * mean, 0.0)
    return NormStats(price_mean=mean, price_std=math.sqrt(var), volume_max=vmax)


# ---------------------------------------------------------------------------
# Dataset export
# ---------------------------------------------------------------------------


DATASET_FORMAT_VERSION = 1


@dataclass
class ExportResult:
    out_dir: Path
    manifest: dict


def export_dataset(
    events: Sequence[MarketEvent],
    out_dir: str | Path,
    k: int = 10,
    alpha: float = 1e-5,
    T: int = 50,
    levels: int = 10,
    split: float = 0.7,
    stride: int = 1,
    source: Optional[dict] = None,
) -> ExportResult:
    """Replay events, label windows, normalize with train-split stats, and
    write ``train.bin`` / ``test.bin`` plus ``manifest.json``.

    Record layout: T*4n little-endian float32 values followed by one
    signed byte label (-1, 0, +1).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    book = OrderBook(levels=levels)
    snapshots = [book.apply_event(ev) for ev in events]
    samples = [s for i, s in enumerate(label_windows(snapshots, k=k, alpha=alpha, T=T)) if i % stride == 0]
    if len(samples) < 2:
        raise InsufficientHistory("not enough samples to split")
    split_at = max(1, min(len(samples) - 1, int(len(samples) * split)))
    train, test = samples[:split_at], samples[split_at:]

    stats = compute_norm_stats(s.window.to_array(np.float64) for s in train)
    if stats.price_std <= 0:
        log.warning("degenerate price stats on training split; price features will be zero")

    width = samples[0].window.width
    counts = {}
    for name, part in (("train", train), ("test", test)):
        label_counts = {-1: 0, 0: 0, 1: 0}
        with open(out_dir / f"{name}.bin", "wb") as f:
            for s in part:
                arr = normalize_array(s.window.to_array(np.float64), stats)
                f.write(arr.astype("<f4").tobytes())
                f.write(np.int8(s.label).tobytes())
                label_counts[s.label] += 1
        counts[name] = {str(k_): v for k_, v in label_counts.items()}

    manifest = {
        "format_version": DATASET_FORMAT_VERSION,
        "T": T,
        "levels": levels,
        "row_width": width,
        "record_floats": T * width,
        "record_bytes": T * width * 4 + 1,
        "k": k,
        "alpha": alpha,
        "split": split,
        "stride": stride,
        "train_count": len(train),
        "test_count": len(test),
        "label_counts": counts,
        "norm": stats.to_dict(),
        "source": source or {},
    }
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return ExportResult(out_dir=out_dir, manifest=manifest)


def read_dataset(path: str | Path, manifest: dict) -> tuple[np.ndarray, np.ndarray]:
    """Load one exported .bin into (windows, labels) arrays."""
    record = manifest["record_bytes"]
    floats = manifest["record_floats"]
    raw = Path(path).read_bytes()
    if len(raw) % record:
        raise MalformedRow(0, f"dataset size {len(raw)} not a multiple of record {record}")
    n = len(raw) // record
    buf = np.frombuffer(raw, dtype=np.uint8).reshape(n, record)
    windows = buf[:, : floats * 4].copy().view("<f4").reshape(n, manifest["T"], manifest["row_width"])
    labels = buf[:, -1].view(np.int8).copy()
    return windows.astype(np.float64), labels.astype(np.int64)
