"""Scoreboard construction: per-metric ranks with interval merging, averaged
across metrics.

Per metric, models are sorted best first by mean score (direction aware)
and walked from the worst position upward. A model joins the group below it
when its interval [mean - std, mean + std] overlaps the interval of the
group's bottommost member; every member of a group carries the group's
worst position as its rank. The final order is by mean rank, with ties
broken by the false-omission-rate rank and then the model name.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError

#: Direction of each known metric; "higher" means larger is better.
METRIC_DIRECTIONS = {"wasserstein": "higher", "for": "lower"}

#: Metric used to break mean-rank ties (lower rank wins).
TIEBREAK_METRIC = "for"


@dataclass(frozen=True)
class MetricStat:
    mean: float
    std: float

    def __post_init__(self):
        if self.std < 0:
            raise ValueError(f"std must be >= 0, got {self.std}")


@dataclass(frozen=True)
class ModelScores:
    model: str
    metrics: dict[str, MetricStat] = field(repr=False)


@dataclass(frozen=True)
class ScoreboardRow:
    model: str
    ranks: dict[str, int]
    mean_rank: float


@dataclass(frozen=True)
class Scoreboard:
    metrics: tuple[str, ...]
    rows: tuple[ScoreboardRow, ...]

    def to_json_dict(self) -> dict:
        return {
            "metrics": list(self.metrics),
            "rows": [
                {"model": r.model, "ranks": dict(r.ranks), "mean_rank": r.mean_rank}
                for r in self.rows
            ],
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["model"] + [f"rank_{m}" for m in self.metrics] + ["mean_rank"])
        for row in self.rows:
            writer.writerow([row.model] + [row.ranks[m] for m in self.metrics] + [row.mean_rank])
        return buf.getvalue()


def _intervals_overlap(m1: MetricStat, m2: MetricStat) -> bool:
    return m1.mean - m1.std <= m2.mean + m2.std and m2.mean - m2.std <= m1.mean + m1.std


def _metric_ranks(entries: list[tuple[str, MetricStat]], higher_better: bool) -> dict[str, int]:
    """Ranks for one metric: argsort by mean, then bottom-up interval merging.

    Walking up from the worst position, a model merges into the current
    group when its interval overlaps the interval of the group's anchor
    (its bottommost member); the merged group shares the anchor's position
    as rank.
    """
    order = sorted(
        entries, key=lambda e: ((-e[1].mean if higher_better else e[1].mean), e[0])
    )
    ranks: dict[str, int] = {}
    pos = len(order) - 1
    while pos >= 0:
        anchor_model, anchor_stat = order[pos]
        ranks[anchor_model] = pos + 1
        q = pos - 1
        while q >= 0 and _intervals_overlap(order[q][1], anchor_stat):
            ranks[order[q][0]] = pos + 1
            q -= 1
        pos = q
    return ranks


def rank_models(scores, directions: dict[str, str] | None = None) -> Scoreboard:
    """Build the scoreboard from per-model per-metric mean/std statistics."""
    scores = list(scores)
    if not scores:
        raise ValueError("need at least one model")
    directions = dict(METRIC_DIRECTIONS) if directions is None else dict(directions)
    names = [s.model for s in scores]
    if len(set(names)) != len(names):
        raise ConfigError("duplicate model names in ranking input")
    metrics = tuple(scores[0].metrics)
    for s in scores[1:]:
        if tuple(sorted(s.metrics)) != tuple(sorted(metrics)):
            raise ConfigError(
                f"inconsistent metric sets: {sorted(metrics)} vs {sorted(s.metrics)}"
            )
    for metric in metrics:
        if metric not in directions:
            raise ConfigError(f"no direction declared for metric {metric!r}")
        for s in scores:
            if np.isnan(s.metrics[metric].mean):
                raise ConfigError(f"model {s.model!r} has undefined {metric!r} score")

    per_metric: dict[str, dict[str, int]] = {}
    for metric in metrics:
        entries = [(s.model, s.metrics[metric]) for s in scores]
        per_metric[metric] = _metric_ranks(entries, directions[metric] == "higher")

    rows = []
    for s in scores:
        ranks = {metric: per_metric[metric][s.model] for metric in metrics}
        rows.append(
            ScoreboardRow(model=s.model, ranks=ranks, mean_rank=float(np.mean(list(ranks.values()))))
        )
    rows.sort(key=lambda r: (r.mean_rank, r.ranks.get(TIEBREAK_METRIC, 0), r.model))
    return Scoreboard(metrics=metrics, rows=tuple(rows))


def scoreboard_from_reports(reports_by_model: dict[str, list]) -> Scoreboard:
    """Aggregate per-seed evaluation reports into mean/std scores and rank.

    ``reports_by_model`` maps a model name to its EvalReports over seeds;
    the ranked metrics are the mean Wasserstein distance and the false
    omission rate.
    """
    scores = []
    for model, reports in sorted(reports_by_model.items()):
        if not reports:
            raise ValueError(f"model {model!r} has no reports")
        w = np.array([r.stat_wasserstein.mean_wasserstein for r in reports])
        f = np.array([r.stat_for.for_rate for r in reports])
        scores.append(
            ModelScores(
                model=model,
                metrics={
                    "wasserstein": MetricStat(float(w.mean()), float(w.std())),
                    "for": MetricStat(float(f.mean()), float(f.std())),
                },
            )
        )
    return rank_models(scores)


def read_scores_csv(paths) -> list[ModelScores]:
    """Read one or more ``model,metric,mean,std`` CSV files."""
    table: dict[str, dict[str, MetricStat]] = {}
    for path in paths:
        path = Path(path)
        if not path.exists():
            raise DataError(f"missing file: {path}")
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [h.strip().lower() for h in header] != ["model", "metric", "mean", "std"]:
                raise DataError(f"{path}: expected header 'model,metric,mean,std'")
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != 4:
                    raise DataError(f"{path}:{lineno}: expected 4 fields")
                model, metric = row[0], row[1]
                try:
                    stat = MetricStat(float(row[2]), float(row[3]))
                except ValueError as exc:
                    raise DataError(f"{path}:{lineno}: {exc}") from exc
                if metric in table.setdefault(model, {}):
                    raise DataError(f"{path}:{lineno}: duplicate entry for {model}/{metric}")
                table[model][metric] = stat
    return [ModelScores(model=m, metrics=stats) for m, stats in sorted(table.items())]
