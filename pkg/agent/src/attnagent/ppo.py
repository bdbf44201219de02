"""Clipped-surrogate policy optimization over the continuous action space.

The policy head squashes a Gaussian through a sigmoid so emitted actions
always lie in (0, 1)^2; log-probabilities include the squashing
jacobian via torch's transformed distributions.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
import numpy as np
import torch
from torch import nn
from torch.distributions import Independent, Normal, TransformedDistribution
from torch.distributions.transforms import SigmoidTransform

from .protocol import EnvClient
from .rl_common import ObservationEncoder

log = logging.getLogger(__name__)

ACTION_DIM = 2


@dataclass
class PpoConfig:
    encoder: str = "attn"
    feature_dim: int = 64
    learning_rate: float = 3e-4
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip: float = 0.2
    epochs: int = 4
    minibatch: int = 64
    horizon: int = 512  # steps per policy update
    entropy_coef: float = 0.0
    value_coef: float = 0.5
    init_log_std: float = -0.5
    seed: int = 0


class ActorCritic(nn.Module):
    def __init__(self, layout: dict, cfg: PpoConfig):
        super().__init__()
        self.encoder = ObservationEncoder(layout, kind=cfg.encoder, out_dim=cfg.feature_dim)
        self.mu = nn.Linear(cfg.feature_dim, ACTION_DIM)
        self.log_std = nn.Parameter(torch.full((ACTION_DIM,), cfg.init_log_std))
        self.value = nn.Sequential(
            nn.Linear(cfg.feature_dim, cfg.feature_dim), nn.LeakyReLU(0.01),
            nn.Linear(cfg.feature_dim, 1),
        )

    def distribution(self, obs: torch.Tensor) -> TransformedDistribution:
        h = self.encoder(obs)
        base = Normal(self.mu(h), self.log_std.exp())
        return TransformedDistribution(Independent(base, 1), [SigmoidTransform()])

    def forward(self, obs: torch.Tensor):
        h = self.encoder(obs)
        return self.mu(h), self.value(h).squeeze(-1)

    @torch.no_grad()
    def act(self, obs: np.ndarray, deterministic: bool = False) -> np.ndarray:
        t = torch.from_numpy(obs).unsqueeze(0)
        if deterministic:
            mu, _ = self.forward(t)
            return torch.sigmoid(mu).squeeze(0).numpy()
        return self.distribution(t).sample().squeeze(0).numpy()

    @torch.no_grad()
    def value_of(self, obs: np.ndarray) -> float:
        _, v = self.forward(torch.from_numpy(obs).unsqueeze(0))
        return float(v.item())


def gae(rewards, values, dones, last_value, gamma, lam):
    """Generalized advantage estimates and discounted returns."""
    n = len(rewards)
    adv = np.zeros(n, dtype=np.float32)
    running = 0.0
    next_value = last_value
    for t in reversed(range(n)):
        nonterminal = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        running = delta + gamma * lam * nonterminal * running
        adv[t] = running
        next_value = values[t]
    return adv, adv + np.asarray(values, dtype=np.float32)


def ppo_update(net: ActorCritic, optimizer, batch: dict, cfg: PpoConfig) -> dict:
    obs = batch["obs"]
    actions = batch["actions"].clamp(1e-6, 1 - 1e-6)  # keep log-prob finite
    old_logp = batch["logp"]
    adv = batch["adv"]
    adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    returns = batch["returns"]
    stats = {"policy": 0.0, "value": 0.0, "entropy": 0.0}
    n = obs.shape[0]
    idx = torch.randperm(n)
    for _ in range(cfg.epochs):
        for start in range(0, n, cfg.minibatch):
            mb = idx[start : start + cfg.minibatch]
            dist = net.distribution(obs[mb])
            logp = dist.log_prob(actions[mb])
            ratio = (logp - old_logp[mb]).exp()
            clipped = torch.clamp(ratio, 1 - cfg.clip, 1 + cfg.clip)
            policy_loss = -torch.min(ratio * adv[mb], clipped * adv[mb]).mean()
            _, value = net.forward(obs[mb])
            value_loss = nn.functional.mse_loss(value, returns[mb])
            # entropy of the squashed distribution has no closed form; use the
            # base distribution's entropy as the exploration bonus
            entropy = dist.base_dist.base_dist.entropy().sum(-1).mean() if hasattr(
                dist.base_dist, "base_dist"
            ) else torch.tensor(0.0)
            loss = policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * entropy
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            stats["policy"] += policy_loss.item()
            stats["value"] += value_loss.item()
            stats["entropy"] += entropy.item()
    return stats


def train_ppo(
    client: EnvClient,
    episodes: int,
    cfg: PpoConfig = PpoConfig(),
) -> tuple[ActorCritic, list[dict]]:
    torch.manual_seed(cfg.seed)
    layout = client.layout
    if layout is None:
        raise ValueError("client must be configured before training")
    net = ActorCritic(layout, cfg)
    optimizer = torch.optim.Adam(net.parameters(), lr=cfg.learning_rate)

    curve = []
    rollout = {k: [] for k in ("obs", "actions", "logp", "rewards", "values", "dones")}

    def flush(last_value: float):
        if not rollout["obs"]:
            return
        adv, returns = gae(
            rollout["rewards"], rollout["values"], rollout["dones"],
            last_value, cfg.gamma, cfg.gae_lambda,
        )
        batch = {
            "obs": torch.from_numpy(np.stack(rollout["obs"])),
            "actions": torch.from_numpy(np.stack(rollout["actions"])),
            "logp": torch.from_numpy(np.asarray(rollout["logp"], dtype=np.float32)),
            "adv": torch.from_numpy(adv),
            "returns": torch.from_numpy(returns),
        }
        ppo_update(net, optimizer, batch, cfg)
        for v in rollout.values():
            v.clear()

    for episode in range(episodes):
        out = client.reset()
        obs = out.observation
        ep_reward = 0.0
        ep_pnl = 0.0
        while not out.done:
            t = torch.from_numpy(obs).unsqueeze(0)
            with torch.no_grad():
                dist = net.distribution(t)
                action_t = dist.sample()
                logp = float(dist.log_prob(action_t).item())
                value = net.value_of(obs)
            action = action_t.squeeze(0).clamp(1e-6, 1 - 1e-6).numpy()
            out = client.step(action)
            rollout["obs"].append(obs)
            rollout["actions"].append(action)
            rollout["logp"].append(logp)
            rollout["rewards"].append(out.reward["total"])
            rollout["values"].append(value)
            rollout["dones"].append(float(out.done))
            obs = out.observation
            ep_reward += out.reward["total"]
            ep_pnl += out.reward["delta_pnl"]
            if len(rollout["obs"]) >= cfg.horizon:
                flush(last_value=0.0 if out.done else net.value_of(obs))
        flush(last_value=0.0)
        curve.append({"episode": episode, "reward": ep_reward, "pnl": ep_pnl})
        log.info("episode %d: reward %.2f pnl %.2f", episode, ep_reward, ep_pnl)
    return net, curve
