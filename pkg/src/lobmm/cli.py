"""Single entrypoint: backtests, latency sweeps, dataset export, linear-Q
training, event generation, and the environment protocol server.

Exit codes: 0 ok, 2 bad flags, 3 data error, 4 runtime error.
Every writing command drops a ``manifest.json`` into its ``--out``
directory from which the run can be reproduced bit-exactly.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .bridge import DataConfig, EnvServer, ObservationToggles, serve_stdio
from .errors import LobmmError
from .ingest import (
    SyntheticMarketConfig,
    export_dataset,
    filter_sessions,
    generate_synthetic,
    read_event_file,
    write_events,
)
from .metrics import EpisodeReport, format_table, summarize, write_summary
from .sim import EpisodeConfig, ExchangeSimulator, run_episode, run_latency_sweep
from .strategies import (
    ASParams,
    AvellanedaStoikov,
    FixedQuoting,
    LinearQ,
    LinearQParams,
    RandomQuoting,
    train_linear_q,
)

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_RUNTIME = 4


def _add_episode_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--events-per-episode", type=int, default=2000)
    p.add_argument("--omega", type=int, default=10, help="position cap in trade units")
    p.add_argument("--T", dest="window", type=int, default=50, help="observation window length")
    p.add_argument("--latency", type=int, default=0, help="observation lag in events")
    p.add_argument("--eta", type=float, default=0.5, help="dampened-pnl coefficient")
    p.add_argument("--zeta", type=float, default=0.01, help="inventory punishment coefficient")
    p.add_argument("--levels", type=int, default=10)
    p.add_argument("--max-bias", type=float, default=0.05)
    p.add_argument("--max-spread", type=float, default=0.1)
    p.add_argument("--fee-ticks", type=int, default=0)


def _add_data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", default="synthetic", help="'synthetic' or an event CSV path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--event-count", type=int, default=None, help="synthetic stream length")
    p.add_argument("--mid", type=int, default=1000, help="synthetic initial mid, ticks")
    p.add_argument("--reversion", type=float, default=0.01)
    p.add_argument("--volatility", type=float, default=0.3)
    p.add_argument("--cancel-prob", type=float, default=0.25)
    p.add_argument("--market-order-prob", type=float, default=0.05)
    p.add_argument("--trend-strength", type=float, default=0.0)
    p.add_argument("--trend-flip-prob", type=float, default=0.0)


def _add_strategy_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--strategy", required=True,
                   help="fixed:1|fixed:2|fixed:3|random|as|linearq")
    p.add_argument("--weights", default=None, help="linearq weights file (.npz)")
    p.add_argument("--gamma", type=float, default=0.1)
    p.add_argument("--kappa", type=float, default=1.5)
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--strategy-seed", type=int, default=0)


def _episode_config(args, action_space: str = "discrete") -> EpisodeConfig:
    return EpisodeConfig(
        events_per_episode=args.events_per_episode,
        omega=args.omega,
        window=args.window,
        latency=args.latency,
        eta=args.eta,
        zeta=args.zeta,
        levels=args.levels,
        max_bias=args.max_bias,
        max_spread=args.max_spread,
        fee_ticks=args.fee_ticks,
        action_space=action_space,
    )


def _synthetic_config(args, seed: int, count: int) -> SyntheticMarketConfig:
    return SyntheticMarketConfig(
        seed=seed,
        initial_mid=args.mid,
        mean_reversion_rate=args.reversion,
        volatility=args.volatility,
        cancel_probability=args.cancel_prob,
        market_order_probability=args.market_order_prob,
        trend_strength=args.trend_strength,
        trend_flip_probability=args.trend_flip_prob,
        event_count=count,
    )


def _load_events(args, episodes: int, cfg: EpisodeConfig, seed: int):
    """(events, data descriptor for the manifest)."""
    if args.data == "synthetic":
        count = args.event_count or episodes * (cfg.window + cfg.events_per_episode) + 100
        syn = _synthetic_config(args, seed, count)
        events = generate_synthetic(syn)
        desc = {"kind": "synthetic", "config": asdict(syn)}
        desc["checksum"] = hashlib.sha256(
            json.dumps(desc["config"], sort_keys=True).encode()
        ).hexdigest()
        return events, desc
    header, events = read_event_file(args.data)
    desc = {
        "kind": "file",
        "path": str(Path(args.data).resolve()),
        "instrument": header.instrument,
        "tick": header.tick,
        "checksum": hashlib.sha256(Path(args.data).read_bytes()).hexdigest(),
    }
    return events, desc


def _make_strategy(args):
    name = args.strategy
    if name.startswith("fixed:"):
        return lambda: FixedQuoting(level=int(name.split(":", 1)[1]))
    if name == "random":
        return lambda: RandomQuoting(seed=args.strategy_seed)
    if name == "as":
        params = ASParams(gamma=args.gamma, kappa=args.kappa, sigma=args.sigma)
        return lambda: AvellanedaStoikov(params=params)
    if name == "linearq":
        if args.weights:
            return lambda: LinearQ.load(args.weights, explore=False, seed=args.strategy_seed)
        return lambda: LinearQ(explore=False, seed=args.strategy_seed)
    raise argparse.ArgumentTypeError(f"unknown strategy {name!r}")


def _write_manifest(
    out_dir: Path,
    command: str,
    args,
    data_desc: dict,
    extra: Optional[dict] = None,
    name: str = "manifest.json",
) -> None:
    manifest = {
        "command": command,
        "version": __version__,
        "config": {k: v for k, v in vars(args).items() if k not in ("func",)},
        "data": data_desc,
    }
    if extra:
        manifest.update(extra)
    with open(out_dir / name, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True, default=str)
        f.write("\n")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _backtest_job(payload: dict) -> tuple[int, list[dict], list[list[dict]], dict]:
    """One worker's share: its own seeded stream, episodes run sequentially."""
    args = argparse.Namespace(**payload["args"])
    seed = payload["seed"]
    episodes = payload["episodes"]
    cfg = _episode_config(args)
    events, data_desc = _load_events(args, episodes, cfg, seed)
    sim = ExchangeSimulator(events, cfg)
    strategy = _make_strategy(args)()
    reports, steps = [], []
    for _ in range(episodes):
        report, records = run_episode(sim, strategy, collect_steps=not args.no_step_log)
        reports.append(report.to_dict())
        steps.append(records)
    return seed, reports, steps, data_desc


def _backtest_jobs(args) -> list[dict]:
    plain = {k: v for k, v in vars(args).items() if k != "func"}
    if args.seeds:
        seeds = [int(s) for s in str(args.seeds).split(",")]
        return [{"args": plain, "seed": s, "episodes": args.episodes} for s in seeds]
    workers = max(1, args.parallel)
    if workers == 1:
        return [{"args": plain, "seed": args.seed, "episodes": args.episodes}]
    share = (args.episodes + workers - 1) // workers
    jobs = []
    remaining = args.episodes
    for i in range(workers):
        n = min(share, remaining)
        if n <= 0:
            break
        jobs.append({"args": plain, "seed": args.seed + i, "episodes": n})
        remaining -= n
    return jobs


def cmd_backtest(args) -> int:
    out_dir = _out_dir(args)
    jobs = _backtest_jobs(args)
    if args.parallel > 1 and len(jobs) > 1:
        import multiprocessing

        with multiprocessing.Pool(min(args.parallel, len(jobs))) as pool:
            results = pool.map(_backtest_job, jobs)
    else:
        results = [_backtest_job(job) for job in jobs]

    groups = {}
    data_desc = None
    with open(out_dir / "reports.jsonl", "w", encoding="utf-8") as rep_f, open(
        out_dir / "steps.jsonl", "w", encoding="utf-8"
    ) as step_f:
        for seed, report_dicts, steps, data_desc in results:
            reports = [EpisodeReport.from_dict(d) for d in report_dicts]
            for ep, (report, records) in enumerate(zip(report_dicts, steps)):
                rep_f.write(json.dumps({"seed": seed, "episode": ep, **report}) + "\n")
                for rec in records:
                    step_f.write(json.dumps({"seed": seed, "episode": ep, **rec}) + "\n")
            groups[f"seed={seed}"] = reports
    write_summary(out_dir / "metrics.json", groups)
    table = format_table({label: summarize(reports) for label, reports in groups.items()})
    (out_dir / "metrics.txt").write_text(table + "\n", encoding="utf-8")
    _write_manifest(out_dir, "backtest", args, data_desc)
    print(table)
    return EXIT_OK


def cmd_latency(args) -> int:
    out_dir = _out_dir(args)
    cfg = _episode_config(args)
    factory = _make_strategy(args)
    latencies = [int(x) for x in args.L.split(",")]
    events, data_desc = _load_events(args, args.episodes, cfg, args.seed)
    rows = run_latency_sweep(factory, events, latencies, args.episodes, cfg)
    payload = []
    table_rows = {}
    for row in rows:
        s = summarize(row.reports)
        payload.append(
            {
                "latency": row.latency,
                "mean_decision_ms": row.mean_decision_ms,
                "metrics": {**s.row()},
            }
        )
        table_rows[f"L={row.latency}"] = s
    with open(out_dir / "latency.json", "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    table = format_table(table_rows)
    runtime_line = "  ".join(f"L={p['latency']}: {p['mean_decision_ms']:.4f} ms/decision" for p in payload)
    (out_dir / "latency.txt").write_text(table + "\n" + runtime_line + "\n", encoding="utf-8")
    _write_manifest(out_dir, "latency", args, data_desc)
    print(table)
    print(runtime_line)
    return EXIT_OK


def cmd_train_linearq(args) -> int:
    out_dir = _out_dir(args)
    cfg = _episode_config(args)
    events, data_desc = _load_events(args, args.episodes, cfg, args.seed)
    sim = ExchangeSimulator(events, cfg)
    params = LinearQParams(
        learning_rate=args.lr,
        discount=args.discount,
        epsilon_start=args.eps_start,
        epsilon_end=args.eps_end,
        epsilon_decay_episodes=args.eps_decay,
    )
    agent, curve = train_linear_q(sim, args.episodes, params=params, seed=args.strategy_seed)
    agent.save(out_dir / "weights")
    with open(out_dir / "curve.jsonl", "w", encoding="utf-8") as f:
        for row in curve:
            f.write(json.dumps(row) + "\n")
    _write_manifest(out_dir, "train-linearq", args, data_desc, {"episodes_run": len(curve)})
    print(f"trained {len(curve)} episodes; weights at {out_dir / 'weights.npz'}")
    return EXIT_OK


def cmd_export_dataset(args) -> int:
    out_dir = _out_dir(args)
    if args.events == "synthetic":
        count = args.event_count or 20_000
        syn = _synthetic_config(args, args.seed, count)
        events = generate_synthetic(syn)
        source = {"kind": "synthetic", "config": asdict(syn)}
    else:
        header, events = read_event_file(args.events)
        source = {"kind": "file", "path": str(Path(args.events).resolve()), "tick": header.tick}
    if args.session_filter:
        events = list(filter_sessions(events))
        source["session_filter"] = True
    result = export_dataset(
        events,
        out_dir,
        k=args.k,
        alpha=args.alpha,
        T=args.window,
        levels=args.levels,
        split=args.split,
        stride=args.stride,
        source=source,
    )
    # manifest.json is the dataset's own sidecar (an external interface);
    # the run manifest lives beside it under a distinct name
    _write_manifest(out_dir, "export-dataset", args, source,
                    {"dataset": result.manifest}, name="run_manifest.json")
    print(
        f"wrote {result.manifest['train_count']} train / {result.manifest['test_count']} test samples"
    )
    return EXIT_OK


def cmd_gen_events(args) -> int:
    count = args.event_count or 10_000
    syn = _synthetic_config(args, args.seed, count)
    events = generate_synthetic(syn)
    write_events(args.out_file, syn.header(), events)
    print(f"wrote {len(events)} events to {args.out_file}")
    return EXIT_OK


def cmd_serve(args) -> int:
    cfg = _episode_config(args, action_space=args.action_space)
    if args.data == "synthetic":
        count = args.event_count or 50 * (cfg.window + cfg.events_per_episode)
        data = DataConfig(kind="synthetic", synthetic=_synthetic_config(args, args.seed, count))
    else:
        header, events = read_event_file(args.data)
        data = DataConfig(kind="file", events=events, tick=header.tick)
    toggles = None
    if args.ablate:
        dropped = {g.strip() for g in args.ablate.split(",") if g.strip()}
        unknown = dropped - {"lob_window", "dynamic_state", "agent_state"}
        if unknown:
            raise argparse.ArgumentTypeError(f"unknown observation groups: {sorted(unknown)}")
        toggles = ObservationToggles(
            lob_window="lob_window" not in dropped,
            dynamic_state="dynamic_state" not in dropped,
            agent_state="agent_state" not in dropped,
        )
    if args.bind == "stdio":
        serve_stdio(data, cfg, default_toggles=toggles)
        return EXIT_OK
    host, _, port = args.bind.rpartition(":")
    server = EnvServer(host or "127.0.0.1", int(port), data, cfg,
                       max_sessions=args.max_sessions, default_toggles=toggles)
    print(f"listening on {server.address[0]}:{server.address[1]}", flush=True)
    server.serve_forever()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lobmm", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("backtest", help="run episodes and write reports + metrics")
    _add_strategy_flags(p)
    _add_data_flags(p)
    _add_episode_flags(p)
    p.add_argument("--episodes", type=int, default=10)
    p.add_argument("--seeds", default=None, help="comma list; overrides --seed")
    p.add_argument("--parallel", type=int, default=1,
                   help="shard episodes across N workers with per-worker seeds")
    p.add_argument("--no-step-log", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_backtest)

    p = sub.add_parser("latency", help="latency sweep with identical episode cursors")
    _add_strategy_flags(p)
    _add_data_flags(p)
    _add_episode_flags(p)
    p.add_argument("--episodes", type=int, default=10)
    p.add_argument("--L", default="0,5,10,20,50", help="comma list of latencies in events")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_latency)

    p = sub.add_parser("train-linearq", help="train the linear Q baseline")
    _add_data_flags(p)
    _add_episode_flags(p)
    p.add_argument("--episodes", type=int, default=300)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--discount", type=float, default=0.9)
    p.add_argument("--eps-start", type=float, default=1.0)
    p.add_argument("--eps-end", type=float, default=0.05)
    p.add_argument("--eps-decay", type=int, default=300)
    p.add_argument("--strategy-seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_linearq)

    p = sub.add_parser("export-dataset", help="export normalized windows + labels")
    p.add_argument("--events", required=True, help="event CSV path or 'synthetic'")
    _add_data_flags(p)
    p.add_argument("--k", type=int, default=10, help="prediction horizon, events")
    p.add_argument("--alpha", type=float, default=1e-5, help="label threshold")
    p.add_argument("--T", dest="window", type=int, default=50)
    p.add_argument("--levels", type=int, default=10)
    p.add_argument("--split", type=float, default=0.7)
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--session-filter", action="store_true",
                   help="keep only 10:00-11:30 / 13:00-14:30 events (off by default)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_dataset)

    p = sub.add_parser("gen-events", help="write a synthetic event CSV")
    _add_data_flags(p)
    p.add_argument("--out-file", required=True)
    p.set_defaults(func=cmd_gen_events)

    p = sub.add_parser("serve", help="serve the environment protocol")
    _add_data_flags(p)
    _add_episode_flags(p)
    p.add_argument("--bind", default="127.0.0.1:0", help="host:port or 'stdio'")
    p.add_argument("--action-space", choices=("discrete", "continuous"), default="discrete")
    p.add_argument("--ablate", default=None, help="comma list of groups to drop by default")
    p.add_argument("--max-sessions", type=int, default=8)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except LobmmError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except argparse.ArgumentTypeError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # pragma: no cover
        log.exception("runtime error")
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
