"""Coverage, reduction and timing metrics computed from per-cycle records.

Reduction ratios are aggregated over cycles (summed counts, then one ratio). Per-cycle
(macro) averages are available too, for transparency.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .domain import GoalSpec, QualityVector, QUALITIES, satisfies

PHASES = ("training", "learning")


@dataclass
class HeadScore:
    """Per-cycle evaluation of one head against the omniscient labels over the full space."""

    kind: str = "classification"
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0
    rho: float = math.nan


@dataclass
class CycleRecord:
    cycle_index: int
    phase: str
    total: int
    selected: int
    analyzed: int
    explored: int
    selected_option: int
    fallback_used: bool
    qualities: QualityVector
    verification_time: float
    learning_time: float
    full_verification_time: float = math.nan
    heads: dict[str, HeadScore] = field(default_factory=dict)

    def __post_init__(self):
        if self.phase not in PHASES:
            raise ValueError(f"phase must be one of {PHASES}")
        if not 0 <= self.selected <= self.total:
            raise ValueError("selected must lie in [0, total]")
        if self.analyzed < 0 or self.explored < 0:
            raise ValueError("counts must be >= 0")


def learning_records(records) -> list[CycleRecord]:
    return [r for r in records if r.phase == "learning"]


# --- classification and ranking quality ---------------------------------------------


def confusion(predicted, actual) -> tuple[int, int, int, int]:
    p = np.asarray(predicted).astype(bool)
    a = np.asarray(actual).astype(bool)
    if p.shape != a.shape:
        raise ValueError("predicted and actual classes differ in length")
    return int(np.sum(p & a)), int(np.sum(p & ~a)), int(np.sum(~p & a)), int(np.sum(~p & ~a))


def f1_from_counts(tp: int, fp: int, fn: int) -> float:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def f1_score(predicted, actual) -> float:
    tp, fp, fn, _ = confusion(predicted, actual)
    return f1_from_counts(tp, fp, fn)


def average_ranks(values) -> np.ndarray:
    """1-based ranks; tied values share the mean of the ranks they span."""
    v = np.asarray(values, dtype=float)
    order = np.argsort(v, kind="mergesort")
    sorted_v = v[order]
    ranks = np.empty(v.shape[0], dtype=float)
    # boundaries of runs of equal values
    starts = np.flatnonzero(np.r_[True, sorted_v[1:] != sorted_v[:-1]])
    ends = np.r_[starts[1:], v.shape[0]]
    for s, e in zip(starts, ends):
        ranks[order[s:e]] = (s + 1 + e) / 2.0
    return ranks


def spearman_rho(x, y) -> float:
    """Rank both inputs, then take the Pearson correlation of the ranks. NaN if either ranking is constant."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or x.shape[0] < 2:
        raise ValueError("spearman_rho needs two equal-length sequences of at least two values")
    rx = average_ranks(x)
    ry = average_ranks(y)
    dx = rx - rx.mean()
    dy = ry - ry.mean()
    denom = math.sqrt(float(np.sum(dx * dx)) * float(np.sum(dy * dy)))
    if denom == 0:
        return math.nan
    return float(np.sum(dx * dy)) / denom


def head_scores(records) -> dict[str, dict[str, float]]:
    """F1 from confusion counts summed over learning cycles; rho as the mean of per-cycle values."""
    out: dict[str, dict[str, float]] = {}
    recs = learning_records(records)
    names = sorted({h for r in recs for h in r.heads})
    for name in names:
        scores = [r.heads[name] for r in recs if name in r.heads]
        tp = sum(s.tp for s in scores)
        fp = sum(s.fp for s in scores)
        fn = sum(s.fn for s in scores)
        if scores[0].kind == "classification":
            out[name] = {"kind": "classification", "f1": f1_from_counts(tp, fp, fn)}
        else:
            rhos = [s.rho for s in scores if not math.isnan(s.rho)]
            out[name] = {"kind": "regression", "rho": float(np.mean(rhos)) if rhos else math.nan}
    return out


# --- reduction ---------------------------------------------------------------------------


def _sums(records):
    recs = learning_records(records)
    return (
        sum(r.total for r in recs),
        sum(r.selected for r in recs),
        sum(r.analyzed for r in recs),
    )


def aasr(records) -> float:
    """Adaptation-space reduction in percent: 1 - selected/total over all learning cycles."""
    total, selected, _ = _sums(records)
    if total == 0:
        return math.nan
    return 100.0 * (1.0 - selected / total)


def aaer(records) -> float:
    """Analysis-effort reduction in percent: 1 - analyzed/selected. NaN when nothing was selected."""
    _, selected, analyzed = _sums(records)
    if selected == 0:
        return math.nan
    return 100.0 * (1.0 - analyzed / selected)


def compose_reduction(aasr_pct: float, aaer_pct: float) -> float:
    return 100.0 - (100.0 - aasr_pct) * (1.0 - aaer_pct / 100.0)


def total_reduction(records) -> float:
    """1 - analyzed/total in percent, cross-checked against the composition of AASR and AAER."""
    total, selected, analyzed = _sums(records)
    if total == 0:
        return math.nan
    direct = 100.0 * (1.0 - analyzed / total)
    if selected > 0:
        composed = compose_reduction(aasr(records), aaer(records))
        if abs(composed - direct) > 1e-9:
            raise ArithmeticError(f"reduction formulas disagree: {direct} vs {composed}")
    return direct


def macro_reductions(records) -> dict[str, float]:
    """Per-cycle reductions averaged over learning cycles."""
    recs = learning_records(records)

    def mean(xs):
        xs = [x for x in xs if not math.isnan(x)]
        return float(np.mean(xs)) if xs else math.nan

    return {
        "aasr": mean([100.0 * (1 - r.selected / r.total) for r in recs if r.total]),
        "aaer": mean([100.0 * (1 - r.analyzed / r.selected) if r.selected else math.nan for r in recs]),
        "total_reduction": mean([100.0 * (1 - r.analyzed / r.total) for r in recs if r.total]),
    }


# --- comparison against a baseline ------------------------------------------------------


def _paired(records, baseline):
    a = learning_records(records)
    b = learning_records(baseline)
    if len(a) != len(b) or [r.cycle_index for r in a] != [r.cycle_index for r in b]:
        raise ValueError("runs cover different learning cycles")
    return a, b


def goal_satisfaction(records, goals: list[GoalSpec]) -> dict[str, float]:
    recs = learning_records(records)
    out = {}
    for g in goals:
        if g.is_classification and recs:
            out[g.name] = sum(satisfies(r.qualities, g) for r in recs) / len(recs)
    return out


def quality_summary(records, baseline, goals: list[GoalSpec]) -> dict:
    """Median of each quality over learning cycles for both runs, their difference, and goal-satisfaction rates."""
    a, b = _paired(records, baseline)
    qualities = {}
    for q in QUALITIES:
        ma = float(np.median([r.qualities[q] for r in a])) if a else math.nan
        mb = float(np.median([r.qualities[q] for r in b])) if b else math.nan
        qualities[q.value] = {"median": ma, "baseline_median": mb, "delta": ma - mb}
    return {
        "qualities": qualities,
        "satisfaction": goal_satisfaction(a, goals),
        "baseline_satisfaction": goal_satisfaction(b, goals),
    }


def time_reduction(records, baseline=None) -> float:
    """Percent of full-space verification time saved, counting learning and verification time.

    The reference is the baseline run's verification time when one is given, else the
    modeled cost of verifying the full space recorded with each cycle.
    """
    if baseline is None:
        a = learning_records(records)
        full = sum(r.full_verification_time for r in a)
    else:
        a, b = _paired(records, baseline)
        full = sum(r.verification_time for r in b)
    if not full > 0:
        return math.nan
    spent = sum(r.learning_time + r.verification_time for r in a)
    return 100.0 * (1.0 - spent / full)


def timing(records) -> dict[str, float]:
    recs = learning_records(records)
    full = sum(r.full_verification_time for r in recs)
    return {
        "full_verification_time": full,
        "learning_time_fraction": sum(r.learning_time for r in recs) / full if full > 0 else math.nan,
        "verification_time": sum(r.verification_time for r in recs),
        "learning_time": sum(r.learning_time for r in recs),
        "training_phase_time": sum(r.verification_time + r.learning_time for r in records if r.phase == "training"),
    }
