"""Dueling Q-learning over the environment protocol (discrete actions)."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import torch
from torch import nn

from .model import AttnLob, load_checkpoint
from .protocol import EnvClient
from .rl_common import ObservationEncoder, ReplayBuffer, Transition

log = logging.getLogger(__name__)

N_ACTIONS = 8


@dataclass
class DqnConfig:
    encoder: str = "attn"  # "attn" | "mlp"
    feature_dim: int = 64
    buffer_size: int = 50_000
    batch_size: int = 64
    learning_rate: float = 1e-3
    gamma: float = 0.95
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_steps: int = 20_000
    target_sync: int = 500
    train_start: int = 500
    train_every: int = 4
    seed: int = 0


class DuelingQNet(nn.Module):
    """Encoder -> shared features -> value + advantage -> Q values."""

    def __init__(self, layout: dict, cfg: DqnConfig, trunk: Optional[AttnLob] = None):
        super().__init__()
        self.encoder = ObservationEncoder(
            layout, kind=cfg.encoder, trunk=trunk, out_dim=cfg.feature_dim
        )
        self.value = nn.Sequential(
            nn.Linear(cfg.feature_dim, cfg.feature_dim), nn.LeakyReLU(0.01),
            nn.Linear(cfg.feature_dim, 1),
        )
        self.advantage = nn.Sequential(
            nn.Linear(cfg.feature_dim, cfg.feature_dim), nn.LeakyReLU(0.01),
            nn.Linear(cfg.feature_dim, N_ACTIONS),
        )

    def forward(self, obs: torch.Tensor) -> torch.Tensor:
        h = self.encoder(obs)
        v = self.value(h)
        a = self.advantage(h)
        return v + a - a.mean(dim=-1, keepdim=True)


def q_loss(net: nn.Module, target: nn.Module, batch: dict, gamma: float) -> torch.Tensor:
    q = net(batch["obs"]).gather(1, batch["actions"].unsqueeze(1)).squeeze(1)
    with torch.no_grad():
        next_q = target(batch["next_obs"]).max(dim=1).values
        y = batch["rewards"] + gamma * (1.0 - batch["dones"]) * next_q
    return nn.functional.smooth_l1_loss(q, y)


@torch.no_grad()
def greedy_action(net: nn.Module, obs: np.ndarray) -> int:
    q = net(torch.from_numpy(obs).unsqueeze(0))
    return int(q.argmax(dim=1).item())


def load_pretrained_trunk(path: str | Path) -> AttnLob:
    model, _ = load_checkpoint(path)
    if not isinstance(model, AttnLob):
        raise ValueError("checkpoint does not hold the CNN-attention architecture")
    return model


def train_dqn(
    client: EnvClient,
    episodes: int,
    cfg: DqnConfig = DqnConfig(),
    pretrained_trunk: Optional[str | Path] = None,
) -> tuple[DuelingQNet, list[dict]]:
    """Online training loop: one protocol session, one transition per step.

    Aborts with the current network if the loss diverges (NaN guard).
    """
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    layout = client.layout
    if layout is None:
        raise ValueError("client must be configured before training")
    trunk = load_pretrained_trunk(pretrained_trunk) if pretrained_trunk else None
    net = DuelingQNet(layout, cfg, trunk=trunk)
    target = DuelingQNet(layout, cfg, trunk=None if trunk is None else load_pretrained_trunk(pretrained_trunk))
    target.load_state_dict(net.state_dict())
    target.eval()
    optimizer = torch.optim.Adam(net.parameters(), lr=cfg.learning_rate)
    buffer = ReplayBuffer(cfg.buffer_size, layout["total"], seed=cfg.seed)

    curve = []
    global_step = 0
    for episode in range(episodes):
        out = client.reset()
        obs = out.observation
        ep_reward = 0.0
        ep_pnl = 0.0
        while not out.done:
            frac = min(1.0, global_step / max(1, cfg.epsilon_decay_steps))
            epsilon = cfg.epsilon_start + frac * (cfg.epsilon_end - cfg.epsilon_start)
            if rng.random() < epsilon:
                action = int(rng.integers(N_ACTIONS))
            else:
                action = greedy_action(net, obs)
            out = client.step(action)
            buffer.push(Transition(obs, action, out.reward["total"], out.observation, out.done))
            obs = out.observation
            ep_reward += out.reward["total"]
            ep_pnl += out.reward["delta_pnl"]
            global_step += 1
            if buffer.size >= cfg.train_start and global_step % cfg.train_every == 0:
                loss = q_loss(net, target, buffer.sample(cfg.batch_size), cfg.gamma)
                if not torch.isfinite(loss):
                    log.error("divergence guard: non-finite loss at step %d", global_step)
                    return net, curve
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
            if global_step % cfg.target_sync == 0:
                target.load_state_dict(net.state_dict())
        curve.append({"episode": episode, "reward": ep_reward, "pnl": ep_pnl,
                      "epsilon": epsilon, "steps": global_step})
        log.info("episode %d: reward %.2f pnl %.2f", episode, ep_reward, ep_pnl)
    return net, curve
