"""Shared vocabulary: qualities, goals, adaptation options and the knowledge store."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Sequence

import numpy as np

#: Legal per-mote split of traffic over two parents, in percent.
DISTRIBUTION_STEPS = (0, 20, 40, 60, 80, 100)
DISTRIBUTION_PAIRS = tuple((p, 100 - p) for p in DISTRIBUTION_STEPS)


class Quality(str, Enum):
    PACKET_LOSS = "packet_loss"
    LATENCY = "latency"
    ENERGY = "energy"


QUALITIES = (Quality.PACKET_LOSS, Quality.LATENCY, Quality.ENERGY)


class GoalKind(str, Enum):
    THRESHOLD_BELOW = "threshold-below"
    THRESHOLD_ABOVE = "threshold-above"
    SET_POINT = "set-point"
    MINIMIZE = "minimize"
    MAXIMIZE = "maximize"

    @property
    def is_optimization(self) -> bool:
        return self in (GoalKind.MINIMIZE, GoalKind.MAXIMIZE)

    @property
    def is_threshold(self) -> bool:
        return self in (GoalKind.THRESHOLD_BELOW, GoalKind.THRESHOLD_ABOVE)


class ContractViolation(ValueError):
    """An operation was called outside its precondition."""


@dataclass(frozen=True)
class QualityVector:
    packet_loss: float
    latency: float
    energy: float

    def __post_init__(self):
        for name in ("packet_loss", "latency", "energy"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v}")
        if not 0.0 <= self.packet_loss <= 1.0:
            raise ValueError(f"packet_loss out of [0,1]: {self.packet_loss}")
        if not 0.0 <= self.latency <= 1.0:
            raise ValueError(f"latency out of [0,1]: {self.latency}")
        if self.energy < 0.0:
            raise ValueError(f"energy must be >= 0: {self.energy}")

    def __getitem__(self, quality: Quality | str) -> float:
        return getattr(self, Quality(quality).value)

    def as_array(self) -> np.ndarray:
        return np.array([self.packet_loss, self.latency, self.energy])


@dataclass(frozen=True)
class GoalSpec:
    kind: GoalKind
    quality: Quality
    value: float | None = None
    epsilon: float | None = None
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "kind", GoalKind(self.kind))
        object.__setattr__(self, "quality", Quality(self.quality))
        if not self.kind.is_optimization:
            if self.value is None or not math.isfinite(self.value):
                raise ValueError(f"goal {self.kind.value} needs a finite value")
        if self.kind is GoalKind.SET_POINT:
            if self.epsilon is None or not self.epsilon > 0:
                raise ValueError("set-point goal needs epsilon > 0")
        if not self.name:
            object.__setattr__(self, "name", _default_goal_name(self))

    @property
    def is_classification(self) -> bool:
        return not self.kind.is_optimization

    @classmethod
    def from_record(cls, record: dict[str, Any]) -> "GoalSpec":
        allowed = {"kind", "quality", "value", "epsilon", "name"}
        unknown = set(record) - allowed
        if unknown:
            raise ValueError(f"unknown goal keys: {sorted(unknown)}")
        return cls(
            kind=record["kind"],
            quality=record["quality"],
            value=record.get("value"),
            epsilon=record.get("epsilon"),
            name=record.get("name", ""),
        )

    def to_record(self) -> dict[str, Any]:
        rec: dict[str, Any] = {"kind": self.kind.value, "quality": self.quality.value, "name": self.name}
        if self.value is not None:
            rec["value"] = self.value
        if self.epsilon is not None:
            rec["epsilon"] = self.epsilon
        return rec


_SHORT = {Quality.PACKET_LOSS: "pl", Quality.LATENCY: "la", Quality.ENERGY: "ec"}


def _default_goal_name(goal: GoalSpec) -> str:
    q = _SHORT[goal.quality]
    if goal.kind is GoalKind.THRESHOLD_BELOW:
        return f"{q}_lt"
    if goal.kind is GoalKind.THRESHOLD_ABOVE:
        return f"{q}_gt"
    if goal.kind is GoalKind.SET_POINT:
        return f"{q}_sp"
    return f"{q}_{'min' if goal.kind is GoalKind.MINIMIZE else 'max'}"


def validate_goal_set(goals: Sequence[GoalSpec]) -> None:
    if not goals:
        raise ValueError("goal set is empty")
    if sum(g.kind.is_optimization for g in goals) > 1:
        raise ValueError("at most one optimization goal is supported")
    names = [g.name for g in goals]
    if len(set(names)) != len(names):
        raise ValueError(f"goal names must be unique: {names}")


def satisfies(qualities: QualityVector, goal: GoalSpec) -> bool:
    """Whether one option's qualities meet a threshold or set-point goal.

    Thresholds are strict, the set-point band is closed.
    """
    v = qualities[goal.quality]
    if goal.kind is GoalKind.THRESHOLD_BELOW:
        return v < goal.value
    if goal.kind is GoalKind.THRESHOLD_ABOVE:
        return v > goal.value
    if goal.kind is GoalKind.SET_POINT:
        return goal.value - goal.epsilon <= v <= goal.value + goal.epsilon
    raise ContractViolation(f"optimization goal {goal.name!r} has no satisfaction predicate")


def satisfies_all(qualities: QualityVector, goals: Sequence[GoalSpec]) -> bool:
    if not goals:
        raise ContractViolation("goal set is empty")
    return all(satisfies(qualities, g) for g in goals if g.is_classification)


def violation(qualities: QualityVector, goal: GoalSpec) -> tuple[bool, float]:
    """(violated?, normalized violation magnitude) for a classification goal."""
    v = qualities[goal.quality]
    scale = abs(goal.value) if goal.value else 1.0
    if goal.kind is GoalKind.THRESHOLD_BELOW:
        return (not v < goal.value), max(0.0, v - goal.value) / scale
    if goal.kind is GoalKind.THRESHOLD_ABOVE:
        return (not v > goal.value), max(0.0, goal.value - v) / scale
    if goal.kind is GoalKind.SET_POINT:
        excess = abs(v - goal.value) - goal.epsilon
        return excess > 0, max(0.0, excess) / scale
    raise ContractViolation(f"optimization goal {goal.name!r} cannot be violated")


@dataclass(frozen=True)
class AdaptationOption:
    """One configuration: a distribution pair per dual-parent mote plus optional power toggles."""

    option_id: int
    distribution: tuple[tuple[int, int], ...]
    power_choice: tuple[int, ...] = ()

    def __post_init__(self):
        if self.option_id < 0:
            raise ValueError("option_id must be >= 0")
        for pair in self.distribution:
            if len(pair) != 2 or pair[0] + pair[1] != 100 or pair[0] not in DISTRIBUTION_STEPS:
                raise ValueError(f"illegal distribution pair {pair}")
        if any(c not in (0, 1) for c in self.power_choice):
            raise ValueError(f"power toggle choices must be 0/1: {self.power_choice}")


@dataclass(frozen=True)
class AdaptationSpace:
    options: tuple[AdaptationOption, ...]

    def __post_init__(self):
        for i, opt in enumerate(self.options):
            if opt.option_id != i:
                raise ValueError("option ids must be dense 0..size-1 in order")

    @classmethod
    def enumerate(cls, n_dual: int, n_toggles: int = 0) -> "AdaptationSpace":
        """All combinations; later motes vary fastest."""
        combos = itertools.product(
            itertools.product(DISTRIBUTION_PAIRS, repeat=n_dual),
            itertools.product((0, 1), repeat=n_toggles),
        )
        return cls(tuple(AdaptationOption(i, d, p) for i, (d, p) in enumerate(combos)))

    def __len__(self) -> int:
        return len(self.options)

    def __getitem__(self, option_id: int) -> AdaptationOption:
        return self.options[option_id]

    def __iter__(self):
        return iter(self.options)

    @property
    def ids(self) -> list[int]:
        return list(range(len(self.options)))


@dataclass
class Knowledge:
    """Mutable state shared by the MAPE elements for one scenario run."""

    adaptation_space: AdaptationSpace
    goal_set: list[GoalSpec]
    current_option: int = 0
    uncertainty_snapshot: Any = None
    verification_results: dict[int, QualityVector] = field(default_factory=dict)
    input_vectors: np.ndarray | None = None
    predictions: dict[str, np.ndarray] | None = None
    model_handle: Any = None

    def __post_init__(self):
        validate_goal_set(self.goal_set)
        if not 0 <= self.current_option < len(self.adaptation_space):
            raise ValueError("current_option is not part of the adaptation space")

    @property
    def classification_goals(self) -> list[GoalSpec]:
        return [g for g in self.goal_set if g.is_classification]

    @property
    def optimization_goal(self) -> GoalSpec | None:
        return next((g for g in self.goal_set if g.kind.is_optimization), None)

    def record(self, results: dict[int, QualityVector]) -> None:
        n = len(self.adaptation_space)
        for oid in results:
            if not 0 <= oid < n:
                raise ValueError(f"option {oid} not in adaptation space")
        self.verification_results.update(results)

    def new_cycle(self, snapshot: Any, input_vectors: np.ndarray | None) -> None:
        self.uncertainty_snapshot = snapshot
        self.input_vectors = input_vectors
        self.verification_results = {}
        self.predictions = None


def goals_from_records(records: Iterable[dict[str, Any]]) -> list[GoalSpec]:
    goals = [GoalSpec.from_record(r) for r in records]
    validate_goal_set(goals)
    return goals
