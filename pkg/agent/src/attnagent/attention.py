"""Raw attention-weight dumps for trained checkpoints."""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Union

import numpy as np
import torch

from .model import AttnLob, load_checkpoint


def dump_attention(
    model: Union[AttnLob, str, Path],
    window: np.ndarray,
    out_path: Optional[str | Path] = None,
) -> np.ndarray:
    """Per-head attention maps for one (T, 4n) window.

    Returns shape (heads, T, T); each row is a softmax distribution and
    sums to 1.  Optionally saves to an .npy file.
    """
    if not isinstance(model, AttnLob):
        model, _ = load_checkpoint(model)
        if not isinstance(model, AttnLob):
            raise ValueError("checkpoint does not hold the CNN-attention architecture")
    model.eval()
    x = torch.as_tensor(np.asarray(window, dtype=np.float32)).unsqueeze(0)
    with torch.no_grad():
        weights = model.attention_weights(x)
    maps = weights.squeeze(0).numpy()
    if out_path is not None:
        np.save(out_path, maps)
    return maps
