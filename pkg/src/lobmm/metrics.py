"""Evaluation metrics over episode reports.

ND-PnL, PnLMAP and PR aggregate pnl over the period against the average
spread, mean absolute position and total traded volume; Sharpe is
mean/std of per-episode pnl (sample std, no annualization, zero risk-free
rate).  Undefined denominators yield None (reported as N/A).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .errors import ZeroSpread


@dataclass(frozen=True)
class EpisodeReport:
    pnl: float  # currency, episode's final value
    mean_abs_position: float  # shares, time-averaged per step
    traded_volume: int  # shares
    mean_spread: float  # currency, time-averaged per step
    step_count: int
    truncated: bool = False
    pnl_units: int = 0  # exact, half-tick*share units

    def to_dict(self) -> dict:
        return {
            "pnl": self.pnl,
            "mean_abs_position": self.mean_abs_position,
            "traded_volume": self.traded_volume,
            "mean_spread": self.mean_spread,
            "step_count": self.step_count,
            "truncated": self.truncated,
            "pnl_units": self.pnl_units,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EpisodeReport":
        return cls(
            pnl=d["pnl"],
            mean_abs_position=d["mean_abs_position"],
            traded_volume=d["traded_volume"],
            mean_spread=d["mean_spread"],
            step_count=d["step_count"],
            truncated=d.get("truncated", False),
            pnl_units=d.get("pnl_units", 0),
        )


def _total_pnl(reports: Sequence[EpisodeReport]) -> float:
    return sum(r.pnl for r in reports)


def _weighted_mean(pairs: Iterable[tuple[float, int]]) -> float:
    total = 0.0
    weight = 0
    for value, w in pairs:
        total += value * w
        weight += w
    return total / weight if weight else 0.0


def nd_pnl(reports: Sequence[EpisodeReport]) -> float:
    """Total pnl divided by the step-weighted average spread."""
    spread = _weighted_mean((r.mean_spread, r.step_count) for r in reports)
    if spread <= 0:
        raise ZeroSpread("average spread is zero")
    return _total_pnl(reports) / spread


def pnl_map(reports: Sequence[EpisodeReport]) -> Optional[float]:
    """Total pnl per unit of mean absolute position; None if MAP is zero."""
    map_ = _weighted_mean((r.mean_abs_position, r.step_count) for r in reports)
    if map_ <= 0:
        return None
    return _total_pnl(reports) / map_


def profit_ratio(reports: Sequence[EpisodeReport]) -> Optional[float]:
    """Total pnl per share traded; None if nothing traded."""
    volume = sum(r.traded_volume for r in reports)
    if volume <= 0:
        return None
    return _total_pnl(reports) / volume


def sharpe(reports: Sequence[EpisodeReport]) -> Optional[float]:
    """mean/std of per-episode pnl (sample std); None if undefined."""
    if len(reports) < 2:
        return None
    pnls = [r.pnl for r in reports]
    mean = sum(pnls) / len(pnls)
    var = sum((p - mean) ** 2 for p in pnls) / (len(pnls) - 1)
    if var == 0:
        return None
    return mean / math.sqrt(var)


def metrics_from_reports(reports: Sequence[EpisodeReport]) -> dict:
    return {
        "nd_pnl": nd_pnl(reports),
        "pnl_map": pnl_map(reports),
        "profit_ratio": profit_ratio(reports),
        "sharpe": sharpe(reports),
        "episodes": len(reports),
        "total_pnl": _total_pnl(reports),
    }


def metrics_from_step_log(records_per_episode: Sequence[Sequence[dict]], tick: float) -> dict:
    """Recompute the four metrics straight from step logs.

    Independent of the summary fields: pnl comes from summing exact
    per-step delta units, spread/position/volume from per-step values.
    """
    reports = []
    for records in records_per_episode:
        pnl_units = sum(r["delta_pnl_units"] for r in records)
        steps = len(records)
        spread = sum(r["spread"] for r in records) / steps
        map_ = sum(abs(r["inventory"]) for r in records) / steps
        volume = sum(abs(v) for r in records for _, v, _ in (tuple(f) for f in r["fills"]))
        reports.append(
            EpisodeReport(
                pnl=pnl_units * tick / 2.0,
                mean_abs_position=map_,
                traded_volume=volume,
                mean_spread=spread,
                step_count=steps,
                pnl_units=pnl_units,
            )
        )
    return metrics_from_reports(reports)


@dataclass(frozen=True)
class MetricsSummary:
    """Result-table summary with the conventional column scalings."""

    nd_pnl: float
    pnl_map: Optional[float]
    profit_ratio: Optional[float]
    sharpe: Optional[float]
    episodes: int
    total_pnl: float

    def row(self) -> dict:
        return {
            "nd_pnl_x1e5": self.nd_pnl / 1e5,
            "pnl_map": self.pnl_map,
            "pr_x1e-4": self.profit_ratio * 1e4 if self.profit_ratio is not None else None,
            "sharpe": self.sharpe,
            "episodes": self.episodes,
            "total_pnl": self.total_pnl,
        }


def summarize(reports: Sequence[EpisodeReport]) -> MetricsSummary:
    m = metrics_from_reports(reports)
    return MetricsSummary(
        nd_pnl=m["nd_pnl"],
        pnl_map=m["pnl_map"],
        profit_ratio=m["profit_ratio"],
        sharpe=m["sharpe"],
        episodes=m["episodes"],
        total_pnl=m["total_pnl"],
    )


def _fmt(v: Optional[float]) -> str:
    return "N/A" if v is None else f"{v:.4f}"


def format_table(rows: dict[str, MetricsSummary]) -> str:
    """Plain-text table, one row per label (strategy, seed, latency...)."""
    header = f"{'run':<24}{'ND-PnL(x1e5)':>14}{'PnLMAP':>12}{'PR(x1e-4)':>12}{'Sharpe':>10}{'episodes':>10}"
    lines = [header, "-" * len(header)]
    for label, s in rows.items():
        r = s.row()
        lines.append(
            f"{label:<24}{_fmt(r['nd_pnl_x1e5']):>14}{_fmt(r['pnl_map']):>12}"
            f"{_fmt(r['pr_x1e-4']):>12}{_fmt(r['sharpe']):>10}{s.episodes:>10}"
        )
    return "\n".join(lines)


def summary_payload(groups: dict[str, Sequence[EpisodeReport]]) -> dict:
    """Machine-readable summary: per-group metrics plus mean/std across groups.

    Groups are typically one per seed; the cross-group dispersion mirrors
    the +/- convention of multi-seed result tables.
    """
    per_group = {label: metrics_from_reports(reports) for label, reports in groups.items()}
    agg: dict[str, dict] = {}
    for key in ("nd_pnl", "pnl_map", "profit_ratio", "sharpe"):
        vals = [m[key] for m in per_group.values() if m[key] is not None]
        if vals:
            mean = sum(vals) / len(vals)
            std = math.sqrt(sum((v - mean) ** 2 for v in vals) / (len(vals) - 1)) if len(vals) > 1 else 0.0
            agg[key] = {"mean": mean, "std": std, "n": len(vals)}
        else:
            agg[key] = {"mean": None, "std": None, "n": 0}
    return {"groups": per_group, "across_groups": agg}


def write_summary(path, groups: dict[str, Sequence[EpisodeReport]]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(summary_payload(groups), f, indent=2, sort_keys=True)
        f.write("\n")
