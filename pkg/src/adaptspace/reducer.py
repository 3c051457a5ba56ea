"""Online reduction of the adaptation space.

A learning cycle makes one prediction pass over every option. The classification heads
shrink the space to the options predicted to meet every threshold and set-point goal.
When an optimization goal exists, the regression head ranks that subspace. Options are
then verified in (shuffled or ranked) order until one meets all goals. A small random
sample of the remaining options is verified as well, and every verified option becomes
training data for an online update of the model.

Before reduction starts, training cycles verify the whole space and train the model on it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from .domain import ContractViolation, GoalKind, GoalSpec, Knowledge, QualityVector, satisfies, satisfies_all, violation

CLASS_THRESHOLD = 0.5

Analyze = Callable[[list[int]], dict[int, QualityVector]]


class Model(Protocol):
    predict_calls: int
    macs_per_row: int

    def predict(self, inputs) -> dict[str, np.ndarray]: ...

    def fit(self, inputs, targets, epochs, batch_size, rng) -> list[float]: ...


@dataclass(frozen=True)
class ReducerConfig:
    exploration_rate: float = 0.05
    training_cycles: int = 45
    seed: int = 0
    training_epochs: int = 5
    online_epochs: int = 1
    scaler_window: int = 20000
    seconds_per_flop: float = 1e-9

    def __post_init__(self):
        if not 0.0 <= self.exploration_rate <= 1.0:
            raise ValueError("exploration_rate must lie in [0, 1]")
        if self.training_cycles < 0:
            raise ValueError("training_cycles must be >= 0")
        if self.training_epochs < 1 or self.online_epochs < 0:
            raise ValueError("epoch counts must be positive")
        if self.scaler_window < 1:
            raise ValueError("scaler_window must be >= 1")


@dataclass
class ReductionOutcome:
    predicted_subspace: list[int]
    analyzed: list[int]
    selected: int
    fallback_used: bool = False
    ranked_order: list[int] | None = None
    explored: list[int] = field(default_factory=list)
    predictions: dict[str, np.ndarray] | None = None
    learning_flops: float = 0.0

    @property
    def verified(self) -> list[int]:
        return self.analyzed + self.explored


# --- selection ------------------------------------------------------------------


def least_violating(verified: dict[int, QualityVector], goals: list[GoalSpec]) -> int:
    """Fewest violated goals, then smallest summed normalized violation, then lowest id."""
    if not verified:
        raise ContractViolation("fallback needs at least one analyzed option")
    goals = [g for g in goals if g.is_classification]

    def key(oid):
        vs = [violation(verified[oid], g) for g in goals]
        return (sum(v for v, _ in vs), sum(m for _, m in vs), oid)

    return min(verified, key=key)


def fallback_option(knowledge: Knowledge) -> int:
    """The least-violating option among those analyzed this cycle."""
    return least_violating(knowledge.verification_results, knowledge.goal_set)


def _setpoint_distance(q: QualityVector, goals: list[GoalSpec]) -> float:
    return sum(abs(q[g.quality] - g.value) / (abs(g.value) or 1.0) for g in goals if g.kind is GoalKind.SET_POINT)


def select_best(verified: dict[int, QualityVector], goals: list[GoalSpec]) -> int:
    """Best verified option under the goal rules.

    Among options meeting every threshold and set-point goal: the optimization optimum if there
    is an optimization goal, else the one closest to the set-point(s), else the lowest id.
    Ties go to the lowest id. Without any satisfying option the least-violating one is returned.
    """
    if not verified:
        raise ContractViolation("select_best needs at least one verified option")
    ok = sorted(o for o, q in verified.items() if satisfies_all(q, goals))
    if not ok:
        return least_violating(verified, goals)
    opt = next((g for g in goals if g.kind.is_optimization), None)
    if opt is not None:
        sign = 1.0 if opt.kind is GoalKind.MINIMIZE else -1.0
        return min(ok, key=lambda o: (sign * verified[o][opt.quality], o))
    return min(ok, key=lambda o: (_setpoint_distance(verified[o], goals), o))


# --- labels and model updates ----------------------------------------------------


def targets_for(goals: list[GoalSpec], qualities: list[QualityVector]) -> dict[str, np.ndarray]:
    """Training targets per head: 0/1 goal satisfaction, or the raw quality for the optimization goal."""
    out = {}
    for g in goals:
        if g.is_classification:
            out[g.name] = np.array([1.0 if satisfies(q, g) else 0.0 for q in qualities])
        else:
            out[g.name] = np.array([q[g.quality] for q in qualities])
    return out


def _train_flops(model: Model, rows: int, epochs: int) -> float:
    # forward + backward is roughly three forward passes; a MAC is two flops
    return 6.0 * model.macs_per_row * rows * epochs


def _predict_flops(model: Model, rows: int) -> float:
    return 2.0 * model.macs_per_row * rows


def online_update(knowledge: Knowledge, model: Model, option_ids: list[int], cfg: ReducerConfig, rng, batch_size: int) -> float:
    """Train on the verification results of ``option_ids``; returns the modeled flop count."""
    if not option_ids or cfg.online_epochs == 0:
        return 0.0
    x = knowledge.input_vectors[option_ids]
    y = targets_for(knowledge.goal_set, [knowledge.verification_results[o] for o in option_ids])
    model.fit(x, y, cfg.online_epochs, batch_size, rng)
    return _train_flops(model, len(option_ids), cfg.online_epochs)


def exploration_count(rate: float, n_unselected: int) -> int:
    return int(math.floor(rate * n_unselected + 0.5))


def _explore(unselected: list[int], cfg: ReducerConfig, rng) -> list[int]:
    n = exploration_count(cfg.exploration_rate, len(unselected))
    if n == 0:
        return []
    picks = rng.choice(len(unselected), size=n, replace=False)
    return [unselected[i] for i in sorted(picks)]


# --- the two stages -----------------------------------------------------------------


def _predicted_subspace(knowledge: Knowledge, predictions: dict[str, np.ndarray]) -> list[int]:
    keep = np.ones(len(knowledge.adaptation_space), dtype=bool)
    for g in knowledge.classification_goals:
        keep &= predictions[g.name] >= CLASS_THRESHOLD
    return [int(i) for i in np.flatnonzero(keep)]


def _verify_in_order(knowledge: Knowledge, order: list[int], analyze: Analyze) -> tuple[list[int], int | None]:
    analyzed = []
    for oid in order:
        q = analyze([oid])[oid]
        knowledge.record({oid: q})
        analyzed.append(oid)
        if satisfies_all(q, knowledge.goal_set):
            return analyzed, oid
    return analyzed, None


def _finish(knowledge, model, cfg, analyze, rng, batch_size, outcome: ReductionOutcome, unselected, found):
    outcome.explored = _explore(unselected, cfg, rng)
    if outcome.explored:
        knowledge.record(analyze(outcome.explored))
    if found is None:
        outcome.fallback_used = True
        if not outcome.verified:
            # nothing predicted and nothing explored: keep the running configuration
            cur = knowledge.current_option
            knowledge.record(analyze([cur]))
            outcome.analyzed = [cur]
        pool = outcome.verified
        outcome.selected = select_best({o: knowledge.verification_results[o] for o in pool}, knowledge.goal_set)
    else:
        outcome.selected = found
    outcome.learning_flops += online_update(knowledge, model, outcome.verified, cfg, rng, batch_size)
    return outcome


def classification_stage(
    knowledge: Knowledge, model: Model, cfg: ReducerConfig, analyze: Analyze, rng, batch_size: int = 64
) -> ReductionOutcome:
    """One learning cycle. Hands over to :func:`regression_stage` when an optimization goal exists."""
    if not knowledge.goal_set:
        raise ContractViolation("goal set is empty")
    n = len(knowledge.adaptation_space)
    predictions = model.predict(knowledge.input_vectors)
    knowledge.predictions = predictions
    flops = _predict_flops(model, n)
    subspace = _predicted_subspace(knowledge, predictions)
    if knowledge.optimization_goal is not None:
        return regression_stage(knowledge, model, subspace, cfg, analyze, rng, batch_size, _flops=flops)

    order = list(subspace)
    rng.shuffle(order)
    analyzed, found = _verify_in_order(knowledge, order, analyze)
    outcome = ReductionOutcome(subspace, analyzed, -1, predictions=predictions, learning_flops=flops)
    in_sub = set(subspace)
    unselected = [o for o in range(n) if o not in in_sub]
    return _finish(knowledge, model, cfg, analyze, rng, batch_size, outcome, unselected, found)


def rank_subspace(subspace: list[int], scores: np.ndarray, goal: GoalSpec) -> list[int]:
    """Order by predicted quality (ascending to minimize, descending to maximize); ties by id."""
    sign = 1.0 if goal.kind is GoalKind.MINIMIZE else -1.0
    return sorted(subspace, key=lambda o: (sign * float(scores[o]), o))


def regression_stage(
    knowledge: Knowledge,
    model: Model,
    predicted_subspace: list[int],
    cfg: ReducerConfig,
    analyze: Analyze,
    rng,
    batch_size: int = 64,
    _flops: float = 0.0,
) -> ReductionOutcome:
    """Rank the subspace with the regression head (reusing the stage-one predictions) and verify in order."""
    opts = [g for g in knowledge.goal_set if g.kind.is_optimization]
    if len(opts) != 1:
        raise ContractViolation(f"regression stage needs exactly one optimization goal, got {len(opts)}")
    if knowledge.predictions is None:
        raise ContractViolation("regression stage runs on the classification stage's predictions")
    goal = opts[0]
    ranked = rank_subspace(predicted_subspace, knowledge.predictions[goal.name], goal)
    analyzed, found = _verify_in_order(knowledge, ranked, analyze)
    outcome = ReductionOutcome(
        list(predicted_subspace), analyzed, -1, ranked_order=ranked, predictions=knowledge.predictions,
        learning_flops=_flops,
    )
    done = set(analyzed)
    unselected = [o for o in range(len(knowledge.adaptation_space)) if o not in done]
    return _finish(knowledge, model, cfg, analyze, rng, batch_size, outcome, unselected, found)


# --- training cycles -------------------------------------------------------------------


class TrainingWindow:
    """Sliding window of recent training rows used to refit the scalers."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.inputs: list[np.ndarray] = []
        self.targets: list[dict[str, np.ndarray]] = []
        self.rows = 0

    def add(self, x: np.ndarray, y: dict[str, np.ndarray]) -> None:
        self.inputs.append(x)
        self.targets.append(y)
        self.rows += x.shape[0]
        while self.rows - self.inputs[0].shape[0] >= self.capacity:
            self.rows -= self.inputs.pop(0).shape[0]
            self.targets.pop(0)

    def stacked(self):
        x = np.vstack(self.inputs)[-self.capacity:]
        y = {k: np.concatenate([t[k] for t in self.targets])[-self.capacity:] for k in self.targets[0]}
        return x, y


def training_cycle(
    knowledge: Knowledge,
    model: Model,
    cfg: ReducerConfig,
    analyze: Analyze,
    rng,
    window: TrainingWindow,
    batch_size: int = 64,
) -> ReductionOutcome:
    """Verify the whole space and select the best option, then refit the scalers and train on the window.

    The window holds this cycle's rows and those of earlier training cycles, up to
    ``cfg.scaler_window`` rows.
    """
    ids = list(knowledge.adaptation_space.ids)
    results = analyze(ids)
    knowledge.record(results)
    selected = select_best(results, knowledge.goal_set)
    x = knowledge.input_vectors
    y = targets_for(knowledge.goal_set, [results[o] for o in ids])
    window.add(x, y)
    wx, wy = window.stacked()
    refit = getattr(model, "refit_scaling", None)
    if refit is not None:
        refit(wx, wy)
    model.fit(wx, wy, cfg.training_epochs, batch_size, rng)
    flops = _train_flops(model, wx.shape[0], cfg.training_epochs)
    fallback = not satisfies_all(results[selected], knowledge.goal_set)
    return ReductionOutcome(ids, ids, selected, fallback_used=fallback, learning_flops=flops)


# --- a stand-in model wired to ground truth -------------------------------------------


class OracleModel:
    """Model stand-in whose heads report the truth for the current cycle.

    ``truth`` maps option id to the qualities the verifier would report; call :meth:`bind`
    with the current cycle's truth before each prediction.
    """

    macs_per_row = 0

    def __init__(self, goals: list[GoalSpec]):
        self.goals = list(goals)
        self.predict_calls = 0
        self.fit_calls = 0
        self._truth: dict[int, QualityVector] = {}

    def bind(self, truth: dict[int, QualityVector]) -> None:
        self._truth = dict(truth)

    def predict(self, inputs) -> dict[str, np.ndarray]:
        self.predict_calls += 1
        n = np.asarray(inputs).shape[0]
        qs = [self._truth[o] for o in range(n)]
        return targets_for(self.goals, qs)

    def fit(self, inputs, targets, epochs, batch_size, rng) -> list[float]:
        self.fit_calls += 1
        return []
