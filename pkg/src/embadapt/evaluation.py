"""Balanced accuracy, per-seed run records, and seed aggregation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import EmptyGroup, EmptyTestSet, MissingScenario

GROUP_KEYS = ("task_id", "method", "scenario", "shots")


def balanced_accuracy(y_true, y_pred, num_classes: int) -> tuple[float, np.ndarray]:
    """Mean per-class recall.

    Classes absent from y_true get NaN recall and are excluded from the
    mean (callers flag such runs; full test splits always cover every class).
    """
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.size == 0:
        raise EmptyTestSet("balanced accuracy over zero samples")
    if y_true.shape != y_pred.shape:
        raise ValueError("y_true and y_pred must have the same length")
    if min(y_true.min(), y_pred.min()) < 0 or max(y_true.max(), y_pred.max()) >= num_classes:
        raise ValueError("labels out of range")
    counts = np.bincount(y_true, minlength=num_classes).astype(np.float64)
    correct = np.bincount(y_true[y_true == y_pred], minlength=num_classes).astype(np.float64)
    recall = np.full(num_classes, np.nan)
    present = counts > 0
    recall[present] = correct[present] / counts[present]
    return float(np.mean(recall[present])), recall


@dataclass(frozen=True)
class RunRecord:
    """One (task, method, scenario, K, seed) evaluation result.

    aca is None for failed runs; fit_wallclock covers the fit step only.
    """

    task_id: str
    method: str
    scenario: str
    shots: int
    seed: int
    aca: float | None
    fit_wallclock: float
    per_class_recall: tuple | None = None
    flags: tuple = ()

    def __post_init__(self):
        if self.aca is not None and self.per_class_recall is not None:
            rec = np.asarray(self.per_class_recall, dtype=np.float64)
            present = ~np.isnan(rec)
            if present.any() and abs(float(np.mean(rec[present])) - self.aca) > 1e-9:
                raise ValueError("aca inconsistent with per-class recalls")

    def to_json(self) -> dict:
        rec = None
        if self.per_class_recall is not None:
            rec = [None if (isinstance(r, float) and math.isnan(r)) else r
                   for r in self.per_class_recall]
        return {
            "task_id": self.task_id,
            "method": self.method,
            "scenario": self.scenario,
            "shots": self.shots,
            "seed": self.seed,
            "aca": self.aca,
            "fit_wallclock": self.fit_wallclock,
            "per_class_recall": rec,
            "flags": list(self.flags),
        }

    @classmethod
    def from_json(cls, d: dict) -> "RunRecord":
        rec = d.get("per_class_recall")
        if rec is not None:
            rec = tuple(float("nan") if r is None else float(r) for r in rec)
        return cls(
            task_id=d["task_id"],
            method=d["method"],
            scenario=d["scenario"],
            shots=int(d["shots"]),
            seed=int(d["seed"]),
            aca=None if d["aca"] is None else float(d["aca"]),
            fit_wallclock=float(d["fit_wallclock"]),
            per_class_recall=rec,
            flags=tuple(d.get("flags", ())),
        )

    def key(self) -> tuple:
        return (self.task_id, self.method, self.scenario, self.shots, self.seed)


@dataclass
class GroupStats:
    n: int
    mean: float
    std: float
    ci95: tuple[float, float]
    values: tuple = ()


def aggregate(records, group_keys=GROUP_KEYS, use_t: bool = False) -> dict:
    """Per-group mean, sample std, and 95% CI over seeds.

    Failed records (aca None) are excluded. Single-record groups get
    std = 0 and zero-width CI. use_t swaps the normal quantile for
    Student's t.
    """
    records = list(records)
    if not records:
        raise EmptyGroup("no records to aggregate")
    groups: dict[tuple, list] = {}
    for r in records:
        if r.aca is None:
            continue
        key = tuple(getattr(r, k) for k in group_keys)
        groups.setdefault(key, []).append(r.aca)
    out = {}
    for key in sorted(groups):
        vals = np.asarray(groups[key], dtype=np.float64)
        n = vals.size
        mean = float(vals.mean())
        std = float(vals.std(ddof=1)) if n > 1 else 0.0
        if n > 1:
            q = float(stats.t.ppf(0.975, n - 1)) if use_t else float(stats.norm.ppf(0.975))
            half = q * std / math.sqrt(n)
        else:
            half = 0.0
        out[key] = GroupStats(n=n, mean=mean, std=std, ci95=(mean - half, mean + half),
                              values=tuple(float(v) for v in vals))
    return out


@dataclass
class EvalReport:
    """Record list plus aggregates recomputable from the records."""

    records: list = field(default_factory=list)

    def aggregates(self, group_keys=GROUP_KEYS, use_t: bool = False) -> dict:
        return aggregate(self.records, group_keys, use_t)

    def methods(self) -> list:
        return sorted({r.method for r in self.records})

    def tasks(self) -> list:
        return sorted({r.task_id for r in self.records})


def scenario_drop(report: EvalReport, method: str, from_scenario: str,
                  to_scenario: str) -> dict:
    """Per-(task, K) mean-ACA delta between two scenarios: mean(to) - mean(from)."""
    aggs = report.aggregates()
    out = {}
    cells = {(t, s, k) for (t, m, s, k) in aggs if m == method}
    for task, scen, shots in sorted(cells):
        if scen != from_scenario:
            continue
        to_key = (task, method, to_scenario, shots)
        if to_key not in aggs:
            raise MissingScenario(f"no {to_scenario!r} records for {task}/{method}/K={shots}")
        out[(task, shots)] = aggs[to_key].mean - aggs[(task, method, from_scenario, shots)].mean
    if not out:
        raise MissingScenario(f"no {from_scenario!r} records for method {method!r}")
    return out
