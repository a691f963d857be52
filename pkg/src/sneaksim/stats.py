"""Descriptive statistics over session logs, grouped by condition."""

from __future__ import annotations

import json
import math
import statistics
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import EmptyGroup, MixedLevelSets, StatsError
from .sim.session import SessionLog, load_session

REPORT_FORMAT_VERSION = 1
METRICS = ("playtime", "detections", "restarts")


@dataclass(frozen=True)
class Summary:
    n: int
    mean: float
    std: float
    sem: float
    min: float
    max: float

    @classmethod
    def of(cls, values: Sequence[float]) -> Summary:
        if not values:
            raise EmptyGroup("no values to summarize")
        vals = [float(v) for v in values]
        n = len(vals)
        # sample (n - 1) deviation; a single run has no spread
        std = statistics.stdev(vals) if n > 1 else 0.0
        return cls(n, statistics.fmean(vals), std, std / math.sqrt(n), min(vals), max(vals))

    def to_dict(self) -> dict:
        return {"n": self.n, "mean": self.mean, "std": self.std, "sem": self.sem, "min": self.min, "max": self.max}


@dataclass(frozen=True)
class ConditionReport:
    condition: str
    n: int
    totals: dict[str, Summary]
    per_level: dict[int, dict[str, Summary]]

    def to_dict(self) -> dict:
        return {
            "condition": self.condition,
            "n": self.n,
            "totals": {m: s.to_dict() for m, s in self.totals.items()},
            "per_level": {str(lid): {m: s.to_dict() for m, s in ms.items()} for lid, ms in self.per_level.items()},
        }


@dataclass(frozen=True)
class Report:
    conditions: list[ConditionReport]
    level_ids: tuple[int, ...]
    # playtime_ratio[a][b] = mean playtime of a / mean playtime of b
    playtime_ratio: dict[str, dict[str, float]]

    def to_dict(self) -> dict:
        return {
            "format_version": REPORT_FORMAT_VERSION,
            "levels": list(self.level_ids),
            "conditions": [c.to_dict() for c in self.conditions],
            "playtime_ratio": self.playtime_ratio,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=False) + "\n"


def _as_dict(log: SessionLog | Mapping) -> Mapping:
    return log.to_dict() if isinstance(log, SessionLog) else log


def _level_ids(log: Mapping) -> tuple[int, ...]:
    return tuple(int(lv["id"]) for lv in log["levels"])


def aggregate(groups: Mapping[str, Iterable[SessionLog | Mapping]]) -> Report:
    """Per-condition means, sample deviations and standard errors.

    Every log must be complete and cover the same level sequence.  Input order
    within a group does not matter: values are sorted before summarizing.
    """
    if not groups:
        raise EmptyGroup("no conditions given")
    prepared: dict[str, list[Mapping]] = {}
    level_ids: tuple[int, ...] | None = None
    for label, logs in groups.items():
        logs = [_as_dict(lg) for lg in logs]
        if not logs:
            raise EmptyGroup(f"condition {label!r} has no logs")
        for lg in logs:
            if not lg.get("complete"):
                raise StatsError(f"condition {label!r} contains an incomplete session log")
            ids = _level_ids(lg)
            if level_ids is None:
                level_ids = ids
            elif ids != level_ids:
                raise MixedLevelSets(f"level sets differ: {list(level_ids)} vs {list(ids)} in {label!r}")
        prepared[label] = logs

    reports = []
    for label, logs in prepared.items():
        totals = {m: Summary.of(sorted(float(lg["totals"][m]) for lg in logs)) for m in METRICS}
        per_level = {}
        for k, lid in enumerate(level_ids):
            per_level[lid] = {m: Summary.of(sorted(float(lg["levels"][k][m]) for lg in logs)) for m in METRICS}
        reports.append(ConditionReport(label, len(logs), totals, per_level))

    ratios = {}
    for a in reports:
        ratios[a.condition] = {}
        for b in reports:
            mb = b.totals["playtime"].mean
            ratios[a.condition][b.condition] = a.totals["playtime"].mean / mb if mb > 0 else math.inf
    # JSON has no infinity; drop undefined ratios
    ratios = {a: {b: r for b, r in row.items() if math.isfinite(r)} for a, row in ratios.items()}
    return Report(reports, level_ids, ratios)


def load_logs(paths: Iterable[str | Path]) -> list[dict]:
    """Session logs from files and directories (``*.json`` inside each directory)."""
    out = []
    for p in paths:
        p = Path(p)
        files = sorted(p.glob("*.json")) if p.is_dir() else [p]
        if p.is_dir() and not files:
            raise EmptyGroup(f"no session logs in {p}")
        out.extend(load_session(f) for f in files)
    return out


def _fmt(s: Summary, digits: int) -> str:
    return f"{s.mean:.{digits}f} ± {s.sem:.{digits}f} (sd {s.std:.{digits}f})"


def render_table(report: Report) -> str:
    """Plain-text table: one row per condition, mean ± standard error."""
    header = ["condition", "n", "playtime [s]", "detections", "restarts"]
    rows = [[c.condition, str(c.n), _fmt(c.totals["playtime"], 1), _fmt(c.totals["detections"], 2),
             _fmt(c.totals["restarts"], 2)] for c in report.conditions]
    widths = [max(len(r[i]) for r in [header, *rows]) for i in range(len(header))]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths)),
             "  ".join("-" * w for w in widths)]
    lines += ["  ".join(v.ljust(w) if i == 0 else v.rjust(w) for i, (v, w) in enumerate(zip(r, widths)))
              for r in rows]
    if len(report.conditions) > 1:
        base = min(report.conditions, key=lambda c: c.totals["playtime"].mean)
        lines.append("")
        for c in report.conditions:
            if c is base or base.condition not in report.playtime_ratio[c.condition]:
                continue
            pct = (report.playtime_ratio[c.condition][base.condition] - 1) * 100
            lines.append(f"{c.condition} playtime vs {base.condition}: {pct:+.0f}%")
    return "\n".join(lines) + "\n"
