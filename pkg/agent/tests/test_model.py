import numpy as np
import pytest
import torch

from attnagent.attention import dump_attention
from attnagent.model import AttnLob, AttnLobConfig, FcLob, load_checkpoint, save_checkpoint


def test_forward_shapes_paper_config():
    torch.manual_seed(0)
    model = AttnLob(AttnLobConfig())
    x = torch.randn(5, 50, 40)
    logits = model(x)
    assert logits.shape == (5, 3)


def test_trunk_keeps_temporal_positions():
    torch.manual_seed(0)
    model = AttnLob(AttnLobConfig())
    h, _ = model.trunk(torch.randn(2, 50, 40))
    assert h.shape == (2, 50, model.cfg.hidden_dim)


def test_attention_rows_stochastic():
    torch.manual_seed(1)
    model = AttnLob(AttnLobConfig())
    w = model.attention_weights(torch.randn(3, 50, 40))
    assert w.shape == (3, 4, 50, 50)
    sums = w.sum(dim=-1)
    assert torch.allclose(sums, torch.ones_like(sums), atol=1e-6)


def test_uniform_input_near_uniform_attention():
    torch.manual_seed(2)
    model = AttnLob(AttnLobConfig())
    const = torch.full((1, 50, 40), 7.0)
    w = model.attention_weights(const)
    deviation = (w - 1.0 / 50).abs().max().item()
    assert deviation < 0.1


def test_permutation_sensitivity_across_time():
    torch.manual_seed(3)
    model = AttnLob(AttnLobConfig())
    x = torch.randn(1, 50, 40)
    perm = torch.randperm(50)
    assert not torch.allclose(model(x), model(x[:, perm, :]))


def test_checkpoint_roundtrip_bit_exact(tmp_path, tiny_cfg):
    torch.manual_seed(4)
    model = AttnLob(tiny_cfg)
    x = torch.randn(3, tiny_cfg.window, tiny_cfg.width)
    before = model(x)
    path = tmp_path / "ckpt.pt"
    save_checkpoint(path, model, tiny_cfg, step=17, extra={"note": "test"})
    loaded, payload = load_checkpoint(path)
    assert payload["step"] == 17
    after = loaded(x)
    assert torch.equal(before, after)


def test_dump_attention_from_checkpoint(tmp_path, tiny_cfg):
    torch.manual_seed(5)
    model = AttnLob(tiny_cfg)
    save_checkpoint(tmp_path / "m.pt", model, tiny_cfg)
    window = np.random.default_rng(0).normal(size=(tiny_cfg.window, tiny_cfg.width))
    maps = dump_attention(tmp_path / "m.pt", window, out_path=tmp_path / "attn.npy")
    assert maps.shape == (tiny_cfg.heads, tiny_cfg.window, tiny_cfg.window)
    assert np.allclose(maps.sum(axis=-1), 1.0, atol=1e-6)
    saved = np.load(tmp_path / "attn.npy")
    assert np.array_equal(saved, maps)


def test_fc_baseline_shapes():
    torch.manual_seed(6)
    model = FcLob(AttnLobConfig())
    assert model(torch.randn(4, 50, 40)).shape == (4, 3)


def test_width_must_be_multiple_of_four():
    with pytest.raises(ValueError):
        AttnLob(AttnLobConfig(width=30))
