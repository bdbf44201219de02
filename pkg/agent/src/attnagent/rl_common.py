"""Shared RL plumbing: observation encoding and the replay buffer.

Observations arrive as flat float32 vectors whose group layout is
negotiated at configure time.  The encoder splits the vector, runs the
LOB window through the CNN-attention trunk (optionally warm-started
from a pre-training checkpoint) and concatenates the remaining groups.
Raw windows are first put through the same local stationarity transform
used for pre-training (price offsets against the window's final mid,
volumes scaled by the window max), so the trunk sees bounded inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch
from torch import nn

from .model import AttnLob, AttnLobConfig


def split_layout(layout: dict) -> dict[str, tuple[int, int, list[int]]]:
    """name -> (offset, length, shape) for each group."""
    out = {}
    ofs = 0
    for g in layout["groups"]:
        out[g["name"]] = (ofs, g["length"], list(g["shape"]))
        ofs += g["length"]
    if ofs != layout["total"]:
        raise ValueError("layout lengths do not add up")
    return out


class WindowNormalizer(nn.Module):
    """Local stationarity transform for raw (T, 4n) windows."""

    price_scale: float = 1e3  # offsets are ~1e-3; rescale to O(1)

    def forward(self, w: torch.Tensor) -> torch.Tensor:
        prices = w[..., 0::2]
        volumes = w[..., 1::2]
        ask1 = w[..., -1:, 0:1]
        bid1 = w[..., -1:, 2:3]
        mid = (ask1 + bid1) / 2.0
        mid = torch.where(mid > 0, mid, torch.ones_like(mid))
        p = torch.where(prices > 0, (prices - mid) / mid * self.price_scale,
                        torch.zeros_like(prices))
        vmax = volumes.amax(dim=(-2, -1), keepdim=True).clamp(min=1.0)
        v = volumes / vmax
        out = torch.empty_like(w)
        out[..., 0::2] = p
        out[..., 1::2] = v
        return out


class ObservationEncoder(nn.Module):
    """Flat observation -> feature vector, per the negotiated layout."""

    def __init__(
        self,
        layout: dict,
        kind: str = "attn",
        trunk: Optional[AttnLob] = None,
        out_dim: int = 64,
    ):
        super().__init__()
        self.groups = split_layout(layout)
        self.kind = kind
        self.normalize = WindowNormalizer()
        feat = 0
        if kind == "attn" and "lob_window" in self.groups:
            _, _, shape = self.groups["lob_window"]
            if trunk is None:
                trunk = AttnLob(AttnLobConfig(window=shape[0], width=shape[1]))
            self.trunk = trunk
            feat += trunk.cfg.hidden_dim
        else:
            self.trunk = None
            if "lob_window" in self.groups:
                feat += self.groups["lob_window"][1]
        for name, (_, length, _) in self.groups.items():
            if name != "lob_window":
                feat += length
        self.proj = nn.Sequential(nn.Linear(feat, out_dim), nn.LeakyReLU(0.01))
        self.out_dim = out_dim

    def forward(self, obs: torch.Tensor) -> torch.Tensor:
        parts = []
        for name, (ofs, length, shape) in self.groups.items():
            chunk = obs[..., ofs : ofs + length]
            if name == "lob_window":
                window = chunk.reshape(*obs.shape[:-1], *shape)
                window = self.normalize(window)
                if self.trunk is not None:
                    parts.append(self.trunk.embed(window))
                else:
                    parts.append(window.reshape(*obs.shape[:-1], -1))
            else:
                parts.append(chunk)
        return self.proj(torch.cat(parts, dim=-1))


@dataclass
class Transition:
    obs: np.ndarray
    action: int
    reward: float
    next_obs: np.ndarray
    done: bool


class ReplayBuffer:
    """Fixed-size ring of transitions for off-policy training."""

    def __init__(self, capacity: int, obs_dim: int, seed: int = 0):
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim), dtype=np.float32)
        self.next_obs = np.zeros((capacity, obs_dim), dtype=np.float32)
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity, dtype=np.float32)
        self.dones = np.zeros(capacity, dtype=np.float32)
        self.rng = np.random.default_rng(seed)
        self.size = 0
        self._pos = 0

    def push(self, t: Transition) -> None:
        i = self._pos
        self.obs[i] = t.obs
        self.next_obs[i] = t.next_obs
        self.actions[i] = t.action
        self.rewards[i] = t.reward
        self.dones[i] = float(t.done)
        self._pos = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch: int) -> dict[str, torch.Tensor]:
        idx = self.rng.integers(self.size, size=batch)
        return {
            "obs": torch.from_numpy(self.obs[idx]),
            "next_obs": torch.from_numpy(self.next_obs[idx]),
            "actions": torch.from_numpy(self.actions[idx]),
            "rewards": torch.from_numpy(self.rewards[idx]),
            "dones": torch.from_numpy(self.dones[idx]),
        }
