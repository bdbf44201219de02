"""Episodic market-making simulator.

Replays a historical event stream one decision per event.  Quotes are
resolved against the snapshot from ``latency`` events ago (clamped to the
episode start), fills are evaluated against the true book: at each event
the agent's bid fills when bid >= best market ask (one trade unit, at the
agent's price), symmetrically for the ask.  The stream itself is never
modified by agent activity.

Accounting is integer-exact: cash is kept in tick*share units and value
as value2 = 2*cash + inventory*mid2.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass
from typing import Callable, Deque, Optional, Sequence

import numpy as np

from .actions import (
    Action,
    CloseOut,
    ContinuousAction,
    DiscreteAction,
    MINIMUM_TRADE_UNIT,
    QuoteAction,
    QuotePair,
    enforce_position_limit,
    resolve_continuous,
    resolve_discrete,
)
from .book import BookSnapshot, LobWindow, MarketEvent, OrderBook
from .errors import EpisodeFinished, StreamExhausted
from .features import AgentStateVec, DynamicState, FeatureEngine
from .metrics import EpisodeReport
from .rewards import RewardBreakdown, ZERO_BREAKDOWN, step_breakdown


@dataclass(frozen=True)
class EpisodeConfig:
    events_per_episode: int = 2000
    omega: int = 10
    window: int = 50  # T
    latency: int = 0  # L, in events
    eta: float = 0.5
    zeta: float = 0.01
    trade_unit: int = MINIMUM_TRADE_UNIT
    levels: int = 10
    max_bias: float = 0.05  # currency
    max_spread: float = 0.1  # currency
    fee_ticks: int = 0  # per share, default zero (paper's zero-cost setting)
    tick: float = 0.01
    action_space: str = "discrete"  # or "continuous"

    def __post_init__(self):
        if self.events_per_episode <= self.window:
            raise ValueError("events_per_episode must exceed the window length")
        if self.latency < 0:
            raise ValueError("latency must be non-negative")
        if self.omega <= 0 or self.trade_unit <= 0 or self.levels <= 0:
            raise ValueError("omega, trade_unit and levels must be positive")
        if self.action_space not in ("discrete", "continuous"):
            raise ValueError(f"unknown action space {self.action_space!r}")

    @property
    def max_inventory(self) -> int:
        return self.omega * self.trade_unit


@dataclass(frozen=True)
class Fill:
    seq: int
    price: int  # ticks
    volume: int  # signed shares, positive = buy
    kind: str  # "quote" or "closeout"


@dataclass(frozen=True)
class StepOutcome:
    """Observation plus step results.

    ``snapshot``, ``window_rows`` and ``dynamic`` are the decision inputs
    and therefore latency-adjusted; ``agent`` is the agent's own (current)
    state and ``info`` carries ground truth for logging.
    """

    snapshot: BookSnapshot
    window_rows: tuple[tuple[int, ...], ...]
    dynamic: DynamicState
    agent: AgentStateVec
    reward: RewardBreakdown
    fills: tuple[Fill, ...]
    done: bool
    truncated: bool
    info: dict

    def window(self) -> LobWindow:
        return LobWindow(rows=self.window_rows)

    def window_array(self, dtype=np.float64) -> np.ndarray:
        return np.asarray(self.window_rows, dtype=dtype)

    def features_vector(self) -> list[float]:
        return self.dynamic.vector() + self.agent.vector()


def close_out_fills(inventory: int, snap: BookSnapshot) -> tuple[list[tuple[int, int]], bool]:
    """Market-order liquidation against the snapshot, walking levels
    best-first.  Returns (fills as (price, signed_volume), truncated)."""
    fills: list[tuple[int, int]] = []
    if inventory == 0:
        return fills, False
    remaining = abs(inventory)
    if inventory > 0:  # sell into bids
        prices, volumes, depth = snap.bid_prices, snap.bid_volumes, snap.bid_depth
        sign = -1
    else:  # buy from asks
        prices, volumes, depth = snap.ask_prices, snap.ask_volumes, snap.ask_depth
        sign = 1
    for i in range(depth):
        if remaining == 0:
            break
        qty = min(remaining, volumes[i])
        fills.append((prices[i], sign * qty))
        remaining -= qty
    return fills, remaining > 0


class _Entry:
    __slots__ = ("rows", "snapshot", "dynamic")

    def __init__(self, rows, snapshot, dynamic):
        self.rows = rows
        self.snapshot = snapshot
        self.dynamic = dynamic


class ExchangeSimulator:
    """One instrument stream, episodes consumed sequentially.

    A simulator instance is single-threaded; run several instances in
    parallel for sweeps (they may share the immutable event list).
    """

    def __init__(self, events: Sequence[MarketEvent], cfg: EpisodeConfig):
        self.events = events
        self.cfg = cfg
        self._book = OrderBook(levels=cfg.levels)
        self._features = FeatureEngine()
        self._rows: Deque[tuple[int, ...]] = deque(maxlen=cfg.window)
        self._entries: Deque[_Entry] = deque(maxlen=cfg.latency + 1)
        self._cursor = 0
        self._done = True
        self.cash_units = 0  # tick * share
        self.inventory = 0
        self._steps = 0
        self._last_snap: Optional[BookSnapshot] = None
        self._last_mid2: Optional[int] = None
        self._prev_value2 = 0
        self._prev_mid2 = 0
        self._prev_inventory = 0
        self._ask_quote: Optional[int] = None
        self._bid_quote: Optional[int] = None
        self._truncated = False
        self._sum_abs_inv = 0
        self._sum_spread_ticks = 0
        self._traded_volume = 0

    # -- stream bookkeeping ------------------------------------------------

    def episodes_remaining(self) -> int:
        per = self.cfg.window + self.cfg.events_per_episode
        return (len(self.events) - self._cursor) // per

    def value2(self) -> int:
        mid2 = self._last_mid2 if self._last_mid2 is not None else 0
        return 2 * self.cash_units + self.inventory * mid2

    def value(self) -> float:
        return self.value2() * self.cfg.tick / 2.0

    # -- event application -------------------------------------------------

    def _advance_one(self) -> BookSnapshot:
        ev = self.events[self._cursor]
        self._cursor += 1
        snap = self._book.apply_event(ev)
        self._features.on_event(ev, snap.mid2)
        self._rows.append(snap.to_row())
        self._last_snap = snap
        if snap.mid2 is not None:
            self._last_mid2 = snap.mid2
        return snap

    def _make_entry(self, snap: BookSnapshot) -> _Entry:
        dyn = self._features.state(snap.timestamp)
        return _Entry(tuple(self._rows), snap, dyn)

    def _agent_state(self) -> AgentStateVec:
        return AgentStateVec(
            inventory=self.inventory,
            remaining_time=self._steps / self.cfg.events_per_episode,
            max_inventory=self.cfg.max_inventory,
        )

    def _outcome(self, reward: RewardBreakdown, fills: tuple[Fill, ...], done: bool) -> StepOutcome:
        lagged = self._entries[0]
        snap = self._last_snap
        mid2 = self._last_mid2
        info = {
            "seq": snap.seq,
            "mid": mid2 * self.cfg.tick / 2.0 if mid2 is not None else None,
            "mid2": mid2,
            "spread": (snap.spread_ticks or 0) * self.cfg.tick,
            "inventory": self.inventory,
            "cash": self.cash_units * self.cfg.tick,
            "value": self.value(),
            "step": self._steps,
            "ask_quote": self._ask_quote,
            "bid_quote": self._bid_quote,
        }
        return StepOutcome(
            snapshot=lagged.snapshot,
            window_rows=lagged.rows,
            dynamic=lagged.dynamic,
            agent=self._agent_state(),
            reward=reward,
            fills=fills,
            done=done,
            truncated=self._truncated,
            info=info,
        )

    # -- episode protocol ---------------------------------------------------

    def reset(self) -> StepOutcome:
        cfg = self.cfg
        if len(self.events) - self._cursor < cfg.window + cfg.events_per_episode:
            raise StreamExhausted(
                f"{len(self.events) - self._cursor} events left, need "
                f"{cfg.window + cfg.events_per_episode}"
            )
        self.cash_units = 0
        self.inventory = 0
        self._steps = 0
        self._done = False
        self._truncated = False
        self._ask_quote = None
        self._bid_quote = None
        self._sum_abs_inv = 0
        self._sum_spread_ticks = 0
        self._traded_volume = 0
        snap = None
        for _ in range(cfg.window):
            snap = self._advance_one()
        if snap.mid2 is None:
            raise StreamExhausted("book is one-sided after warmup; cannot mark value")
        self._entries.clear()
        self._entries.append(self._make_entry(snap))
        self._prev_value2 = 0
        self._prev_mid2 = snap.mid2
        self._prev_inventory = 0
        return self._outcome(ZERO_BREAKDOWN, (), done=False)

    def _resolve(self, action: Action) -> QuotePair | CloseOut:
        lagged = self._entries[0].snapshot
        cfg = self.cfg
        if isinstance(action, DiscreteAction):
            return resolve_discrete(action, lagged, self.inventory, volume=cfg.trade_unit)
        if isinstance(action, ContinuousAction):
            return resolve_continuous(
                action, lagged, self.inventory,
                max_bias=cfg.max_bias, max_spread=cfg.max_spread,
                tick=cfg.tick, volume=cfg.trade_unit,
            )
        if isinstance(action, QuoteAction):
            ask = action.ask_price if action.ask_price is not None else 0
            bid = action.bid_price if action.bid_price is not None else 0
            return QuotePair(
                ask_price=ask,
                bid_price=bid,
                volume=cfg.trade_unit,
                ask_enabled=action.ask_price is not None,
                bid_enabled=action.bid_price is not None,
            )
        raise TypeError(f"unsupported action {action!r}")

    def _apply_fill(self, price: int, signed_volume: int, kind: str, fills: list[Fill]) -> None:
        self.cash_units -= price * signed_volume
        if self.cfg.fee_ticks:
            self.cash_units -= self.cfg.fee_ticks * abs(signed_volume)
        self.inventory += signed_volume
        self._traded_volume += abs(signed_volume)
        fills.append(Fill(seq=self._last_snap.seq, price=price, volume=signed_volume, kind=kind))

    def _liquidate(self, snap: BookSnapshot, fills: list[Fill]) -> None:
        raw, truncated = close_out_fills(self.inventory, snap)
        for price, vol in raw:
            self._apply_fill(price, vol, "closeout", fills)
        if truncated:
            self._truncated = True

    def step(self, action: Action) -> StepOutcome:
        if self._done:
            raise EpisodeFinished("episode is done; call reset()")
        cfg = self.cfg
        fills: list[Fill] = []

        resolved = self._resolve(action)
        if isinstance(resolved, CloseOut):
            self._ask_quote = None
            self._bid_quote = None
            self._liquidate(self._last_snap, fills)
        else:
            quotes = enforce_position_limit(resolved, self.inventory, cfg.omega, cfg.trade_unit)
            self._ask_quote = quotes.ask_price if quotes.ask_enabled else None
            self._bid_quote = quotes.bid_price if quotes.bid_enabled else None

        snap = self._advance_one()

        best_ask, best_bid = snap.best_ask, snap.best_bid
        if self._bid_quote is not None and best_ask is not None and self._bid_quote >= best_ask:
            self._apply_fill(self._bid_quote, cfg.trade_unit, "quote", fills)
            self._bid_quote = None
        if self._ask_quote is not None and best_bid is not None and self._ask_quote <= best_bid:
            self._apply_fill(self._ask_quote, -cfg.trade_unit, "quote", fills)
            self._ask_quote = None

        self._steps += 1
        done = self._steps >= cfg.events_per_episode
        if done:
            self._liquidate(snap, fills)
            self._ask_quote = None
            self._bid_quote = None
            self._done = True

        mid2 = self._last_mid2
        value2 = 2 * self.cash_units + self.inventory * mid2
        reward = step_breakdown(
            prev_value2=self._prev_value2,
            value2=value2,
            prev_inventory=self._prev_inventory,
            inventory=self.inventory,
            prev_mid2=self._prev_mid2,
            mid2=mid2,
            fills=[(f.price, f.volume) for f in fills],
            eta=cfg.eta,
            zeta=cfg.zeta,
            tick=cfg.tick,
        )
        self._prev_value2 = value2
        self._prev_mid2 = mid2
        self._prev_inventory = self.inventory

        self._sum_abs_inv += abs(self.inventory)
        self._sum_spread_ticks += snap.spread_ticks or 0
        self._entries.append(self._make_entry(snap))
        return self._outcome(reward, tuple(fills), done)

    def episode_report(self) -> EpisodeReport:
        if self._steps == 0:
            raise EpisodeFinished("no steps taken")
        pnl_units = self._prev_value2
        return EpisodeReport(
            pnl=pnl_units * self.cfg.tick / 2.0,
            mean_abs_position=self._sum_abs_inv / self._steps,
            traded_volume=self._traded_volume,
            mean_spread=self._sum_spread_ticks / self._steps * self.cfg.tick,
            step_count=self._steps,
            truncated=self._truncated,
            pnl_units=pnl_units,
        )


# ---------------------------------------------------------------------------
# Episode drivers
# ---------------------------------------------------------------------------


def encode_action(action: Action) -> object:
    if isinstance(action, DiscreteAction):
        return action.index
    if isinstance(action, ContinuousAction):
        return [action.a1, action.a2]
    if isinstance(action, QuoteAction):
        return {"ask": action.ask_price, "bid": action.bid_price}
    return str(action)


def step_record(out: StepOutcome, action: Action) -> dict:
    rec = {
        "seq": out.info["seq"],
        "step": out.info["step"],
        "mid": out.info["mid"],
        "spread": out.info["spread"],
        "action": encode_action(action),
        "quotes": {"ask": out.info["ask_quote"], "bid": out.info["bid_quote"]},
        "fills": [[f.price, f.volume, f.kind] for f in out.fills],
        "reward": out.reward.to_dict(),
        "delta_pnl_units": out.reward.delta_pnl_units,
        "inventory": out.info["inventory"],
        "cash": out.info["cash"],
        "value": out.info["value"],
    }
    return rec


def run_episode(
    sim: ExchangeSimulator,
    strategy,
    collect_steps: bool = False,
) -> tuple[EpisodeReport, list[dict]]:
    """Drive one episode; the strategy sees outcomes and emits actions."""
    out = sim.reset()
    start = getattr(strategy, "episode_start", None)
    if start is not None:
        start()
    records: list[dict] = []
    while not out.done:
        action = strategy.decide(out)
        out = sim.step(action)
        if collect_steps:
            records.append(step_record(out, action))
    return sim.episode_report(), records


@dataclass
class LatencyRow:
    latency: int
    reports: list[EpisodeReport]
    mean_decision_ms: float


def run_latency_sweep(
    strategy_factory: Callable[[], object],
    events: Sequence[MarketEvent],
    latencies: Sequence[int],
    episodes: int,
    cfg: EpisodeConfig,
) -> list[LatencyRow]:
    """Run identical episode cursors under each latency value.

    L = 0 reproduces a plain backtest bit-exactly (same code path); each
    row also reports the mean wall-clock decision time.
    """
    rows = []
    for L in latencies:
        run_cfg = EpisodeConfig(**{**cfg.__dict__, "latency": L})
        sim = ExchangeSimulator(events, run_cfg)
        strategy = strategy_factory()
        reports = []
        decide_time = 0.0
        decide_count = 0
        for _ in range(episodes):
            out = sim.reset()
            start = getattr(strategy, "episode_start", None)
            if start is not None:
                start()
            while not out.done:
                t0 = time.perf_counter()
                action = strategy.decide(out)
                decide_time += time.perf_counter() - t0
                decide_count += 1
                out = sim.step(action)
            reports.append(sim.episode_report())
        rows.append(
            LatencyRow(
                latency=L,
                reports=reports,
                mean_decision_ms=1000.0 * decide_time / max(1, decide_count),
            )
        )
    return rows
