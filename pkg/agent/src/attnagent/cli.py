"""Agent entrypoint: pre-training, deep RL over the protocol, dumps."""

from __future__ import annotations

import argparse
import json
import logging
import shlex
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch

from .attention import dump_attention
from .data import read_split
from .dqn import DqnConfig, train_dqn
from .ppo import PpoConfig, train_ppo
from .pretrain import PretrainConfig, pretrain
from .protocol import EnvClient

log = logging.getLogger(__name__)


def make_client(args, action_space: str) -> EnvClient:
    if args.env_cmd:
        client = EnvClient.spawn_stdio(shlex.split(args.env_cmd), binary=not args.text)
    else:
        host, _, port = args.env.rpartition(":")
        client = EnvClient.connect_tcp(host or "127.0.0.1", int(port), binary=not args.text)
    client.hello()
    episode = {}
    if args.episode_events:
        episode["events_per_episode"] = args.episode_events
    if args.latency is not None:
        episode["latency"] = args.latency
    data = {"seed": args.seed} if args.seed is not None else None
    client.configure(action_space=action_space, episode=episode or None, data=data)
    return client


def _add_env_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--env", default="127.0.0.1:7007", help="server host:port")
    p.add_argument("--env-cmd", default=None,
                   help="spawn this command and speak the protocol on its stdio")
    p.add_argument("--text", action="store_true", help="disable binary observations")
    p.add_argument("--seed", type=int, default=None, help="per-session stream seed")
    p.add_argument("--episode-events", type=int, default=None)
    p.add_argument("--latency", type=int, default=None)


def cmd_pretrain(args) -> int:
    cfg = PretrainConfig(
        arch=args.arch, epochs=args.epochs, batch_size=args.batch_size,
        learning_rate=args.lr, seed=args.train_seed,
    )
    _, report = pretrain(args.dataset, cfg, out_path=args.out)
    print(json.dumps(report["test"]["macro"], indent=2))
    print(f"majority-baseline macro F1: {report['majority_baseline']['macro']['f1']:.4f}")
    return 0


def cmd_train_dqn(args) -> int:
    client = make_client(args, "discrete")
    cfg = DqnConfig(encoder=args.encoder, seed=args.train_seed)
    net, curve = train_dqn(client, args.episodes, cfg, pretrained_trunk=args.pretrained)
    client.bye()
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    torch.save({"model": net.state_dict(), "layout": client.layout,
                "config": cfg.__dict__}, out)
    with open(out.with_suffix(".curve.jsonl"), "w", encoding="utf-8") as f:
        for row in curve:
            f.write(json.dumps(row) + "\n")
    print(f"trained {len(curve)} episodes -> {out}")
    return 0


def cmd_train_ppo(args) -> int:
    client = make_client(args, "continuous")
    cfg = PpoConfig(encoder=args.encoder, seed=args.train_seed)
    net, curve = train_ppo(client, args.episodes, cfg)
    client.bye()
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    torch.save({"model": net.state_dict(), "layout": client.layout,
                "config": cfg.__dict__}, out)
    with open(out.with_suffix(".curve.jsonl"), "w", encoding="utf-8") as f:
        for row in curve:
            f.write(json.dumps(row) + "\n")
    print(f"trained {len(curve)} episodes -> {out}")
    return 0


def cmd_dump_attention(args) -> int:
    windows, _ = read_split(args.dataset, args.split)
    maps = dump_attention(args.checkpoint, windows[args.index], out_path=args.out)
    print(f"wrote attention maps {maps.shape} to {args.out}")
    return 0


def cmd_run_episodes(args) -> int:
    """Drive N random-action episodes; prints per-episode pnl (smoke/conformance)."""
    client = make_client(args, args.action_space)
    rng = np.random.default_rng(args.train_seed)
    pnls = []
    for _ in range(args.episodes):
        out = client.reset()
        while not out.done:
            if args.action_space == "discrete":
                action = int(rng.integers(8))
            else:
                action = rng.random(2)
            out = client.step(action)
        pnls.append(out.info["value"])
    client.bye()
    print(json.dumps({"episodes": len(pnls), "mean_pnl": float(np.mean(pnls)),
                      "protocol_errors": client.errors}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="attnagent", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pretrain", help="mid-price direction pre-training")
    p.add_argument("--dataset", required=True, help="exported dataset directory")
    p.add_argument("--arch", choices=("attn", "fc"), default="attn")
    p.add_argument("--epochs", type=int, default=3)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--train-seed", type=int, default=0)
    p.add_argument("--out", required=True, help="checkpoint path (.pt)")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("train-dqn", help="dueling DQN over the protocol")
    _add_env_flags(p)
    p.add_argument("--episodes", type=int, default=50)
    p.add_argument("--encoder", choices=("attn", "mlp"), default="attn")
    p.add_argument("--pretrained", default=None, help="pre-training checkpoint to warm-start")
    p.add_argument("--train-seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_dqn)

    p = sub.add_parser("train-ppo", help="continuous-action PPO over the protocol")
    _add_env_flags(p)
    p.add_argument("--episodes", type=int, default=50)
    p.add_argument("--encoder", choices=("attn", "mlp"), default="attn")
    p.add_argument("--train-seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_ppo)

    p = sub.add_parser("dump-attention", help="write per-head attention maps")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dump_attention)

    p = sub.add_parser("run-episodes", help="random-action protocol smoke run")
    _add_env_flags(p)
    p.add_argument("--episodes", type=int, default=5)
    p.add_argument("--action-space", choices=("discrete", "continuous"), default="discrete")
    p.add_argument("--train-seed", type=int, default=0)
    p.set_defaults(func=cmd_run_episodes)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
