import json
import subprocess
import sys

import pytest

SERVE_STDIO = [
    sys.executable, "-m", "lobmm.cli", "serve", "--bind", "stdio",
]


def serve_argv(seed=11, event_count=30_064, episode_events=250, extra=()):
    return SERVE_STDIO + [
        "--seed", str(seed),
        "--event-count", str(event_count),
        "--events-per-episode", str(episode_events),
        *extra,
    ]


@pytest.fixture(scope="session")
def dataset_dir(tmp_path_factory):
    """Planted-momentum dataset exported through the environment CLI."""
    out = tmp_path_factory.mktemp("dataset") / "ds"
    cmd = [
        sys.executable, "-m", "lobmm.cli", "export-dataset",
        "--events", "synthetic", "--seed", "42", "--event-count", "25000",
        "--reversion", "0.001", "--volatility", "0.2",
        "--trend-strength", "0.15", "--trend-flip-prob", "0.005",
        "--k", "10", "--alpha", "1e-5", "--T", "50", "--stride", "2",
        "--out", str(out),
    ]
    result = subprocess.run(cmd, capture_output=True, text=True)
    assert result.returncode == 0, result.stderr
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["train_count"] > 5000
    return out


@pytest.fixture()
def tiny_cfg():
    from attnagent.model import AttnLobConfig

    return AttnLobConfig(
        window=8, width=8, conv_channels=(4, 4, 4), inception_channels=2, heads=2
    )
