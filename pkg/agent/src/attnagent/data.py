"""Reader for the exported pre-training dataset.

The on-disk contract (produced by the environment package's exporter):
a directory with ``manifest.json`` plus ``train.bin`` / ``test.bin``
where each record is T*4n little-endian float32 values followed by one
signed byte label in {-1, 0, +1}.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch.utils.data import Dataset


@dataclass(frozen=True)
class DatasetInfo:
    T: int
    width: int
    record_bytes: int
    record_floats: int
    train_count: int
    test_count: int
    manifest: dict

    @classmethod
    def load(cls, directory: str | Path) -> "DatasetInfo":
        with open(Path(directory) / "manifest.json", encoding="utf-8") as f:
            manifest = json.load(f)
        return cls(
            T=manifest["T"],
            width=manifest["row_width"],
            record_bytes=manifest["record_bytes"],
            record_floats=manifest["record_floats"],
            train_count=manifest["train_count"],
            test_count=manifest["test_count"],
            manifest=manifest,
        )


def read_split(directory: str | Path, split: str) -> tuple[np.ndarray, np.ndarray]:
    """(windows float32 (N, T, 4n), labels int64 in {-1, 0, 1})."""
    info = DatasetInfo.load(directory)
    raw = (Path(directory) / f"{split}.bin").read_bytes()
    if len(raw) % info.record_bytes:
        raise ValueError(
            f"{split}.bin has {len(raw)} bytes, not a multiple of {info.record_bytes}"
        )
    n = len(raw) // info.record_bytes
    rows = np.frombuffer(raw, dtype=np.uint8).reshape(n, info.record_bytes)
    windows = (
        rows[:, : info.record_floats * 4]
        .copy()
        .view("<f4")
        .reshape(n, info.T, info.width)
    )
    labels = rows[:, -1].view(np.int8).astype(np.int64)
    return windows, labels


class WindowDataset(Dataset):
    """Torch view of one split; labels shifted to classes {0, 1, 2}."""

    def __init__(self, directory: str | Path, split: str):
        windows, labels = read_split(directory, split)
        self.windows = torch.from_numpy(np.ascontiguousarray(windows))
        self.labels = torch.from_numpy(labels + 1)

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, i: int):
        return self.windows[i], self.labels[i]

    def class_counts(self) -> torch.Tensor:
        return torch.bincount(self.labels, minlength=3)
