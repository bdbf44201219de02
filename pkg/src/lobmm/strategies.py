"""Baseline and reference strategies.

Every strategy implements ``decide(outcome) -> action`` over the
simulator's latency-adjusted observation and never mutates the simulator.
The linear Q-learner exercises the full RL loop on the 26-value feature
vector without any tensor dependencies.
"""

from __future__ import annotations

import json
import logging
import math
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Deque, Optional

import numpy as np

from .actions import DiscreteAction, QuoteAction
from .sim import ExchangeSimulator, StepOutcome

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ASParams:
    gamma: float = 0.1  # risk aversion
    kappa: float = 1.5  # liquidity parameter
    sigma: Optional[float] = None  # fixed volatility; None = estimate
    sigma_window: int = 500  # trailing events for estimation
    horizon_events: int = 2000  # scales per-event sigma to the episode

    def __post_init__(self):
        if self.gamma <= 0 or self.kappa <= 0:
            raise ValueError("gamma and kappa must be positive")
        if self.sigma is not None and self.sigma < 0:
            raise ValueError("sigma must be non-negative")


def as_quotes(p: ASParams, s: float, q: float, t: float, sigma: float) -> tuple[float, float, float]:
    """Reservation price and quotes from the closed form.

    s is the mid, q the inventory in trade units, t the elapsed episode
    fraction (T normalized to 1).  Returns (reservation, ask, bid) in the
    same units as s, unrounded.
    """
    tau = 1.0 - t
    r = s - q * p.gamma * sigma * sigma * tau
    spread = p.gamma * sigma * sigma * tau + (2.0 / p.gamma) * math.log(1.0 + p.gamma / p.kappa)
    return r, r + spread / 2.0, r - spread / 2.0


def estimate_sigma(mids, horizon_events: int = 2000, window: Optional[int] = None) -> float:
    """Population std of per-event mid changes, scaled to the horizon.

    Uses whatever history exists when the window exceeds it.
    """
    mids = list(mids)
    if window is not None and len(mids) > window:
        mids = mids[-window:]
    if len(mids) < 2:
        return 0.0
    diffs = np.diff(np.asarray(mids, dtype=np.float64))
    return float(np.std(diffs)) * math.sqrt(horizon_events)


class AvellanedaStoikov:
    """Quotes around the inventory-skewed reservation price (closed form)."""

    def __init__(self, params: ASParams = ASParams(), tick: float = 0.01, trade_unit: int = 100):
        self.p = params
        self.tick = tick
        self.trade_unit = trade_unit
        self._mids: Deque[float] = deque(maxlen=params.sigma_window)

    def episode_start(self) -> None:
        pass  # mid history carries across episodes on the same stream

    def decide(self, out: StepOutcome) -> QuoteAction:
        snap = out.snapshot
        mid = snap.mid
        if mid is None:
            return QuoteAction(ask_price=None, bid_price=None)
        s = mid * self.tick
        self._mids.append(s)
        sigma = self.p.sigma
        if sigma is None:
            sigma = estimate_sigma(self._mids, horizon_events=self.p.horizon_events)
        q = out.agent.inventory / self.trade_unit
        _, ask, bid = as_quotes(self.p, s, q, out.agent.remaining_time, sigma)
        ask_ticks = math.ceil(round(ask / self.tick, 9))
        bid_ticks = math.floor(round(bid / self.tick, 9))
        if bid_ticks >= ask_ticks:
            bid_ticks = ask_ticks - 1
        if bid_ticks < 1:
            return QuoteAction(ask_price=ask_ticks, bid_price=None)
        return QuoteAction(ask_price=ask_ticks, bid_price=bid_ticks)


class RandomQuoting:
    """Independently uniform level 1-5 per side, mask-aware."""

    def __init__(self, seed: int = 0, max_level: int = 5):
        self.rng = np.random.default_rng(seed)
        self.max_level = max_level

    def decide(self, out: StepOutcome) -> QuoteAction:
        snap = out.snapshot
        ask = bid = None
        if snap.ask_depth:
            i = int(self.rng.integers(min(self.max_level, snap.ask_depth)))
            ask = snap.ask_prices[i]
        if snap.bid_depth:
            i = int(self.rng.integers(min(self.max_level, snap.bid_depth)))
            bid = snap.bid_prices[i]
        return QuoteAction(ask_price=ask, bid_price=bid)


class FixedQuoting:
    """Always quote at the given book level (1-3), nearest occupied fallback."""

    def __init__(self, level: int):
        if not 1 <= level <= 3:
            raise ValueError("fixed quoting level must be 1, 2 or 3")
        self.level = level
        self.fallbacks = 0

    def _pick(self, prices, depth: int) -> Optional[int]:
        if depth == 0:
            return None
        i = self.level - 1
        if i >= depth:
            i = depth - 1
            self.fallbacks += 1
        return prices[i]

    def decide(self, out: StepOutcome) -> QuoteAction:
        snap = out.snapshot
        return QuoteAction(
            ask_price=self._pick(snap.ask_prices, snap.ask_depth),
            bid_price=self._pick(snap.bid_prices, snap.bid_depth),
        )


# ---------------------------------------------------------------------------
# Linear Q-learning over the dynamic+agent feature vector
# ---------------------------------------------------------------------------

N_FEATURES = 27  # 24 dynamic + 2 agent + bias
N_ACTIONS = 8


@dataclass
class LinearQParams:
    learning_rate: float = 0.01
    discount: float = 0.9
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_episodes: int = 300
    weight_bound: float = 1e6


class LinearQ:
    """Epsilon-greedy TD(0) on a linear Q approximator, 8 discrete actions."""

    def __init__(self, params: LinearQParams = LinearQParams(), seed: int = 0,
                 weights: Optional[np.ndarray] = None, explore: bool = True):
        self.p = params
        self.rng = np.random.default_rng(seed)
        self.w = np.zeros((N_ACTIONS, N_FEATURES)) if weights is None else np.array(weights, dtype=np.float64)
        if self.w.shape != (N_ACTIONS, N_FEATURES):
            raise ValueError(f"weights must have shape {(N_ACTIONS, N_FEATURES)}")
        self.explore = explore
        self.epsilon = params.epsilon_start if explore else 0.0
        self._episode = 0

    @staticmethod
    def phi(out: StepOutcome) -> np.ndarray:
        return np.asarray(out.features_vector() + [1.0], dtype=np.float64)

    def episode_start(self) -> None:
        if self.explore:
            frac = min(1.0, self._episode / max(1, self.p.epsilon_decay_episodes))
            self.epsilon = self.p.epsilon_start + frac * (self.p.epsilon_end - self.p.epsilon_start)
            self._episode += 1

    def q_values(self, phi: np.ndarray) -> np.ndarray:
        return self.w @ phi

    def decide(self, out: StepOutcome) -> DiscreteAction:
        if self.explore and self.rng.random() < self.epsilon:
            return DiscreteAction(int(self.rng.integers(N_ACTIONS)))
        q = self.q_values(self.phi(out))
        return DiscreteAction(int(np.argmax(q)))

    def update(self, phi: np.ndarray, action: int, reward: float,
               phi_next: Optional[np.ndarray]) -> None:
        """One TD(0) step; phi_next None at the terminal step."""
        target = reward
        if phi_next is not None:
            target += self.p.discount * float(np.max(self.w @ phi_next))
        td = target - float(self.w[action] @ phi)
        self.w[action] += self.p.learning_rate * td * phi
        if not np.all(np.isfinite(self.w)) or np.abs(self.w).max() > self.p.weight_bound:
            self.p.learning_rate *= 0.5
            np.nan_to_num(self.w, copy=False, posinf=0.0, neginf=0.0)
            np.clip(self.w, -self.p.weight_bound, self.p.weight_bound, out=self.w)
            log.warning("divergent weights; learning rate halved to %g", self.p.learning_rate)

    def save(self, path: str | Path) -> None:
        path = Path(path)
        np.savez(path, weights=self.w)
        meta = {"learning_rate": self.p.learning_rate, "discount": self.p.discount,
                "episodes_trained": self._episode}
        with open(path.with_suffix(".json"), "w", encoding="utf-8") as f:
            json.dump(meta, f, indent=2)
            f.write("\n")

    @classmethod
    def load(cls, path: str | Path, explore: bool = False, seed: int = 0) -> "LinearQ":
        data = np.load(Path(path).with_suffix(".npz") if not str(path).endswith(".npz") else path)
        return cls(weights=data["weights"], explore=explore, seed=seed)


def train_linear_q(
    sim: ExchangeSimulator,
    episodes: int,
    params: LinearQParams = LinearQParams(),
    seed: int = 0,
) -> tuple[LinearQ, list[dict]]:
    """Train on consecutive episodes of the simulator's stream.

    Returns the agent and a learning-curve log (one row per episode).
    """
    agent = LinearQ(params=params, seed=seed, explore=True)
    curve = []
    for ep in range(episodes):
        if sim.episodes_remaining() == 0:
            break
        out = sim.reset()
        agent.episode_start()
        phi = agent.phi(out)
        total_reward = 0.0
        while not out.done:
            action = agent.decide(out)
            out = sim.step(action)
            phi_next = None if out.done else agent.phi(out)
            agent.update(phi, action.index, out.reward.total, phi_next)
            phi = phi_next if phi_next is not None else phi
            total_reward += out.reward.total
        report = sim.episode_report()
        curve.append(
            {
                "episode": ep,
                "epsilon": agent.epsilon,
                "reward": total_reward,
                "pnl": report.pnl,
                "mean_abs_position": report.mean_abs_position,
            }
        )
    return agent, curve
