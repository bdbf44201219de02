"""CNN-attention network for limit-order-book windows.

The trunk reduces the spatial axis of a (T, 4n) window in three stages
(price/volume pairing, per-level aggregation, cross-level aggregation),
builds multi-scale temporal features with an inception block, and
aggregates temporal dependencies with multi-head self-attention.  The
classifier head emits a 3-way mid-price-direction distribution.

Exact kernel sizes, channel counts, head count and hidden width are
recorded here as configuration defaults; they are assumptions of this
implementation, not published values.  Temporal convolutions use
replicate padding so a constant window stays constant along time (an
untrained net then attends uniformly, which the tests exploit).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import torch
from torch import nn


@dataclass(frozen=True)
class AttnLobConfig:
    window: int = 50  # T
    width: int = 40  # 4n
    conv_channels: tuple[int, int, int] = (16, 16, 16)
    temporal_kernel: int = 3
    inception_channels: int = 8  # per branch; hidden_dim = 4 * this
    heads: int = 4
    classes: int = 3

    @property
    def hidden_dim(self) -> int:
        return 4 * self.inception_channels

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "AttnLobConfig":
        d = dict(d)
        if "conv_channels" in d:
            d["conv_channels"] = tuple(d["conv_channels"])
        return cls(**d)


def _temporal_conv(ch_in: int, ch_out: int, k: int) -> nn.Conv2d:
    return nn.Conv2d(ch_in, ch_out, (k, 1), padding=(k // 2, 0), padding_mode="replicate")


class SpatialStack(nn.Module):
    """Three-stage spatial reduction: 4n -> 2n -> n -> 1 columns."""

    def __init__(self, cfg: AttnLobConfig):
        super().__init__()
        if cfg.width % 4 != 0:
            raise ValueError(f"window width must be 4*n, got {cfg.width}")
        c1, c2, c3 = cfg.conv_channels
        k = cfg.temporal_kernel
        act = nn.LeakyReLU(0.01)
        self.stages = nn.Sequential(
            nn.Conv2d(1, c1, (1, 2), stride=(1, 2)),  # pair price with volume
            act,
            _temporal_conv(c1, c1, k),
            act,
            nn.Conv2d(c1, c2, (1, 2), stride=(1, 2)),  # ask/bid per level
            act,
            _temporal_conv(c2, c2, k),
            act,
            nn.Conv2d(c2, c3, (1, cfg.width // 4)),  # across all levels
            act,
            _temporal_conv(c3, c3, k),
            act,
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        # (B, T, 4n) -> (B, 1, T, 4n) -> (B, C, T, 1) -> (B, T, C)
        y = self.stages(x.unsqueeze(1))
        return y.squeeze(-1).transpose(1, 2)


class InceptionBlock(nn.Module):
    """Multi-scale temporal mixing; output width = 4 * branch channels."""

    def __init__(self, ch_in: int, branch: int):
        super().__init__()
        act = nn.LeakyReLU(0.01)
        self.b1 = nn.Sequential(nn.Conv1d(ch_in, branch, 1), act)
        self.b3 = nn.Sequential(
            nn.Conv1d(ch_in, branch, 3, padding=1, padding_mode="replicate"), act
        )
        self.b5 = nn.Sequential(
            nn.Conv1d(ch_in, branch, 5, padding=2, padding_mode="replicate"), act
        )
        self.bp = nn.Sequential(
            nn.ReplicationPad1d(1),
            nn.MaxPool1d(3, stride=1),
            nn.Conv1d(ch_in, branch, 1),
            act,
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        # (B, T, C) -> conv1d over T -> (B, T, 4*branch)
        y = x.transpose(1, 2)
        out = torch.cat([self.b1(y), self.b3(y), self.b5(y), self.bp(y)], dim=1)
        return out.transpose(1, 2)


class AttnLob(nn.Module):
    """Spatial conv stack -> inception -> multi-head self-attention -> logits."""

    def __init__(self, cfg: AttnLobConfig = AttnLobConfig()):
        super().__init__()
        self.cfg = cfg
        self.spatial = SpatialStack(cfg)
        self.inception = InceptionBlock(cfg.conv_channels[2], cfg.inception_channels)
        self.attn = nn.MultiheadAttention(cfg.hidden_dim, cfg.heads, batch_first=True)
        self.norm = nn.LayerNorm(cfg.hidden_dim)
        self.head = nn.Linear(cfg.hidden_dim, cfg.classes)

    def trunk(self, x: torch.Tensor, need_weights: bool = False):
        """(B, T, 4n) -> (B, T, hidden); optionally per-head attention."""
        h = self.inception(self.spatial(x))
        attn_out, weights = self.attn(
            h, h, h, need_weights=need_weights, average_attn_weights=False
        )
        h = self.norm(h + attn_out)
        return h, weights

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h, _ = self.trunk(x)
        return self.head(h[:, -1, :])

    def embed(self, x: torch.Tensor) -> torch.Tensor:
        """Final-timestep representation, used as the RL feature trunk."""
        h, _ = self.trunk(x)
        return h[:, -1, :]

    def attention_weights(self, x: torch.Tensor) -> torch.Tensor:
        """Per-head attention maps, shape (B, heads, T, T); rows sum to 1."""
        _, weights = self.trunk(x, need_weights=True)
        return weights


class FcLob(nn.Module):
    """Plain MLP baseline on the flattened window (optional extra)."""

    def __init__(self, cfg: AttnLobConfig = AttnLobConfig(), hidden: tuple[int, ...] = (256, 64)):
        super().__init__()
        self.cfg = cfg
        dims = [cfg.window * cfg.width, *hidden, cfg.classes]
        layers: list[nn.Module] = []
        for i in range(len(dims) - 1):
            layers.append(nn.Linear(dims[i], dims[i + 1]))
            if i < len(dims) - 2:
                layers.append(nn.LeakyReLU(0.01))
        self.net = nn.Sequential(*layers)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x.reshape(x.shape[0], -1))


def build_model(arch: str, cfg: AttnLobConfig) -> nn.Module:
    if arch == "attn":
        return AttnLob(cfg)
    if arch == "fc":
        return FcLob(cfg)
    raise ValueError(f"unknown architecture {arch!r}")


def save_checkpoint(
    path: str | Path,
    model: nn.Module,
    cfg: AttnLobConfig,
    arch: str = "attn",
    optimizer: Optional[torch.optim.Optimizer] = None,
    step: int = 0,
    extra: Optional[dict] = None,
) -> None:
    payload = {
        "arch": arch,
        "config": cfg.to_dict(),
        "model": model.state_dict(),
        "optimizer": optimizer.state_dict() if optimizer is not None else None,
        "step": step,
        "extra": extra or {},
    }
    torch.save(payload, path)


def load_checkpoint(path: str | Path) -> tuple[nn.Module, dict]:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    cfg = AttnLobConfig.from_dict(payload["config"])
    model = build_model(payload.get("arch", "attn"), cfg)
    model.load_state_dict(payload["model"])
    model.eval()
    return model, payload
