"""Mid-price-direction pre-training and its precision/recall/F1 report."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import torch
from torch import nn
from torch.utils.data import DataLoader

from .data import WindowDataset
from .model import AttnLobConfig, build_model, save_checkpoint

log = logging.getLogger(__name__)


@dataclass
class PretrainConfig:
    arch: str = "attn"
    epochs: int = 3
    batch_size: int = 256
    learning_rate: float = 1e-3
    weight_decay: float = 0.0
    seed: int = 0
    balance_classes: bool = False  # 27x weights on a 1% class destabilize small runs


def class_report(labels: np.ndarray, predictions: np.ndarray) -> dict:
    """Per-class and macro precision/recall/F1 for classes {-1, 0, +1}."""
    per_class = {}
    f1s, precs, recs = [], [], []
    for cls, name in ((-1, "down"), (0, "stationary"), (1, "up")):
        tp = int(np.sum((predictions == cls) & (labels == cls)))
        fp = int(np.sum((predictions == cls) & (labels != cls)))
        fn = int(np.sum((predictions != cls) & (labels == cls)))
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        per_class[name] = {
            "precision": precision, "recall": recall, "f1": f1,
            "support": int(np.sum(labels == cls)),
        }
        f1s.append(f1)
        precs.append(precision)
        recs.append(recall)
    return {
        "per_class": per_class,
        "macro": {
            "precision": float(np.mean(precs)),
            "recall": float(np.mean(recs)),
            "f1": float(np.mean(f1s)),
        },
        "accuracy": float(np.mean(predictions == labels)),
    }


def majority_class_report(labels: np.ndarray) -> dict:
    """Baseline: always predict the most frequent class."""
    values, counts = np.unique(labels, return_counts=True)
    majority = int(values[np.argmax(counts)])
    return class_report(labels, np.full_like(labels, majority))


@torch.no_grad()
def evaluate(model: nn.Module, dataset: WindowDataset, batch_size: int = 512) -> dict:
    model.eval()
    loader = DataLoader(dataset, batch_size=batch_size)
    preds, labels = [], []
    for x, y in loader:
        logits = model(x)
        preds.append(logits.argmax(dim=1).numpy())
        labels.append(y.numpy())
    predictions = np.concatenate(preds) - 1  # back to {-1, 0, 1}
    truth = np.concatenate(labels) - 1
    return class_report(truth, predictions)


def pretrain(
    dataset_dir: str | Path,
    cfg: PretrainConfig = PretrainConfig(),
    model_cfg: Optional[AttnLobConfig] = None,
    out_path: Optional[str | Path] = None,
) -> tuple[nn.Module, dict]:
    """Train on the exported train split, report on the test split."""
    torch.manual_seed(cfg.seed)
    train = WindowDataset(dataset_dir, "train")
    test = WindowDataset(dataset_dir, "test")
    if model_cfg is None:
        T, width = train.windows.shape[1], train.windows.shape[2]
        model_cfg = AttnLobConfig(window=T, width=width)
    model = build_model(cfg.arch, model_cfg)
    optimizer = torch.optim.Adam(
        model.parameters(), lr=cfg.learning_rate, weight_decay=cfg.weight_decay
    )
    weight = None
    if cfg.balance_classes:
        counts = train.class_counts().clamp(min=1).double()
        weight = (counts.sum() / (3 * counts)).float()
    loss_fn = nn.CrossEntropyLoss(weight=weight)
    loader = DataLoader(
        train,
        batch_size=cfg.batch_size,
        shuffle=True,
        generator=torch.Generator().manual_seed(cfg.seed),
    )
    model.train()
    step = 0
    for epoch in range(cfg.epochs):
        total = 0.0
        for x, y in loader:
            optimizer.zero_grad()
            loss = loss_fn(model(x), y)
            loss.backward()
            optimizer.step()
            total += loss.item()
            step += 1
        log.info("epoch %d: mean loss %.4f", epoch, total / max(1, len(loader)))
    report = {
        "test": evaluate(model, test),
        "train": evaluate(model, train),
        "majority_baseline": majority_class_report(test.labels.numpy() - 1),
        "epochs": cfg.epochs,
        "arch": cfg.arch,
    }
    if out_path is not None:
        out_path = Path(out_path)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        save_checkpoint(out_path, model, model_cfg, arch=cfg.arch,
                        optimizer=optimizer, step=step, extra={"report": report["test"]})
        with open(out_path.with_suffix(".report.json"), "w", encoding="utf-8") as f:
            json.dump(report, f, indent=2)
            f.write("\n")
    return model, report
