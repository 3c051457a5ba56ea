"""The feedback loop: monitor the network, analyze and plan with a strategy, execute the choice.

Three strategies share the same environment stream for a given seed, so their records
pair up cycle by cycle:

``dlaser_plus``
    training cycles over the full space, then learning cycles with online reduction.
``exhaustive_reference``
    verifies every option every cycle and picks the best.
``random_reducer``
    verifies a uniform random sample of the space (ablation baseline).

Seed derivation from the single top-level seed: the environment walk uses
``[seed, 0xE1, cycle]``, execution ``[seed, 0xE2, cycle]``, verification
``[seed, 0xA1, cycle, option]``, model initialization ``[seed, 0xB1]``, per-cycle
reducer randomness ``[seed, 0xB2, cycle]`` and the random baseline ``[seed, 0xB3, cycle]``.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .domain import GoalSpec, Knowledge, QualityVector, satisfies, satisfies_all, validate_goal_set
from .features import build_input_vectors, input_width
from .metrics import CycleRecord, HeadScore, confusion, spearman_rho
from .neural.model import DivergenceError, HyperParams, NeuralModel, build_model
from .reducer import (
    ReducerConfig,
    ReductionOutcome,
    TrainingWindow,
    classification_stage,
    select_best,
    targets_for,
    training_cycle,
)
from .simnet import NetworkTopology, UncertaintyProfile, advance_cycle, execute_cycle, initial_state, load_topology
from .verify import Verifier, VerifierConfig

__all__ = ["STRATEGIES", "ScenarioRun", "ScenarioResult", "run_scenario", "select_best", "collect_dataset"]

log = logging.getLogger(__name__)

STRATEGIES = ("dlaser_plus", "exhaustive_reference", "random_reducer")

_MODEL_TAG = 0xB1
_REDUCER_TAG = 0xB2
_RANDOM_TAG = 0xB3


@dataclass
class ScenarioRun:
    topology: str | NetworkTopology
    goals: list[GoalSpec]
    strategy: str = "dlaser_plus"
    training_cycles: int = 45
    learning_cycles: int = 100
    seed: int = 0
    verifier: VerifierConfig = field(default_factory=VerifierConfig)
    reducer: ReducerConfig = field(default_factory=ReducerConfig)
    hyperparams: HyperParams = field(default_factory=HyperParams)
    uncertainty: dict = field(default_factory=dict)
    random_fraction: float = 0.5
    threads: int = 1

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")
        validate_goal_set(self.goals)
        if self.training_cycles < 0 or self.learning_cycles < 0:
            raise ValueError("cycle counts must be >= 0")
        if not 0.0 < self.random_fraction <= 1.0:
            raise ValueError("random_fraction must lie in (0, 1]")
        if isinstance(self.topology, str):
            self.topology = load_topology(self.topology)

    @property
    def cycles(self) -> int:
        return self.training_cycles + self.learning_cycles


@dataclass
class ScenarioResult:
    records: list[CycleRecord]
    model: NeuralModel | None
    wall_times: list[dict[str, float]]
    executed: list[QualityVector]


class _Analyzer:
    """Verifier front end for one cycle that accumulates the modeled cost of every request."""

    def __init__(self, verifier: Verifier, state, space):
        self.verifier = verifier
        self.state = state
        self.space = space
        self.cost = 0.0

    def __call__(self, option_ids):
        results, cost = self.verifier.verify(self.state, [self.space[i] for i in option_ids])
        self.cost += cost
        return results


def _score_heads(goals, predictions, truth: dict[int, QualityVector]) -> dict[str, HeadScore]:
    qs = [truth[o] for o in range(len(truth))]
    scores = {}
    for g in goals:
        pred = predictions[g.name]
        if g.is_classification:
            actual = [satisfies(q, g) for q in qs]
            tp, fp, fn, tn = confusion(pred >= 0.5, actual)
            scores[g.name] = HeadScore("classification", tp, fp, fn, tn)
        else:
            scores[g.name] = HeadScore("regression", rho=spearman_rho(pred, [q[g.quality] for q in qs]))
    return scores


def _random_cycle(knowledge: Knowledge, analyze: _Analyzer, fraction: float, rng) -> ReductionOutcome:
    n = len(knowledge.adaptation_space)
    size = max(1, int(np.floor(fraction * n + 0.5)))
    sample = [int(i) for i in rng.choice(n, size=size, replace=False)]
    if knowledge.optimization_goal is not None:
        results = analyze(sorted(sample))
        knowledge.record(results)
        chosen = select_best(results, knowledge.goal_set)
        return ReductionOutcome(sample, sorted(sample), chosen, not satisfies_all(results[chosen], knowledge.goal_set))
    analyzed = []
    for oid in sample:
        q = analyze([oid])[oid]
        knowledge.record({oid: q})
        analyzed.append(oid)
        if satisfies_all(q, knowledge.goal_set):
            return ReductionOutcome(sample, analyzed, oid)
    chosen = select_best(knowledge.verification_results, knowledge.goal_set)
    return ReductionOutcome(sample, analyzed, chosen, True)


def run_scenario(run: ScenarioRun) -> ScenarioResult:
    """Run every cycle of a scenario and return its records; deterministic given the run's seeds."""
    topo = run.topology
    space = topo.space()
    goals = list(run.goals)
    profile = UncertaintyProfile.for_topology(topo, rng_seed=run.seed, **run.uncertainty)
    vcfg = replace(run.verifier, seed=run.seed)
    verifier = Verifier(topo, vcfg, threads=run.threads)
    rcfg = run.reducer
    model = None
    window = None
    if run.strategy == "dlaser_plus":
        model = build_model(run.hyperparams, goals, input_width(topo), np.random.default_rng([run.seed, _MODEL_TAG]))
        window = TrainingWindow(rcfg.scaler_window)
    knowledge = Knowledge(space, goals, current_option=0, model_handle=model)

    records, walls, executed = [], [], []
    state = initial_state(profile)
    for c in range(run.cycles):
        if c > 0:
            state = advance_cycle(state, profile)
        t0 = time.perf_counter()
        phase = "training" if c < run.training_cycles else "learning"
        x = build_input_vectors(topo, state, space[knowledge.current_option])
        knowledge.new_cycle({"snr": state.snr.copy(), "load": state.load.copy()}, x)
        analyze = _Analyzer(verifier, state, space)
        verify_wall = verifier.wall_time
        rng = np.random.default_rng([run.seed, _REDUCER_TAG, c])
        heads = {}
        try:
            if run.strategy == "exhaustive_reference":
                results = analyze(space.ids)
                knowledge.record(results)
                sel = select_best(results, goals)
                outcome = ReductionOutcome(space.ids, space.ids, sel, not satisfies_all(results[sel], goals))
            elif run.strategy == "random_reducer":
                outcome = _random_cycle(
                    knowledge, analyze, run.random_fraction, np.random.default_rng([run.seed, _RANDOM_TAG, c])
                )
            elif phase == "training":
                outcome = training_cycle(knowledge, model, rcfg, analyze, rng, window, run.hyperparams.batch_size)
            else:
                outcome = classification_stage(knowledge, model, rcfg, analyze, rng, run.hyperparams.batch_size)
                truth = verifier.peek(state, list(space))
                heads = _score_heads(goals, outcome.predictions, truth)
        except DivergenceError as exc:
            raise DivergenceError(f"model diverged in cycle {c} ({phase}): {exc}") from exc

        chosen = knowledge.verification_results[outcome.selected]
        knowledge.current_option = outcome.selected
        observed, state = execute_cycle(topo, state, space[outcome.selected], run.seed, vcfg.energy_model)
        executed.append(observed)
        records.append(
            CycleRecord(
                cycle_index=c,
                phase=phase,
                total=len(space),
                selected=len(outcome.predicted_subspace),
                analyzed=len(outcome.analyzed),
                explored=len(outcome.explored),
                selected_option=outcome.selected,
                fallback_used=outcome.fallback_used,
                qualities=chosen,
                verification_time=analyze.cost,
                learning_time=outcome.learning_flops * rcfg.seconds_per_flop,
                full_verification_time=vcfg.option_cost(topo) * len(space),
                heads=heads,
            )
        )
        walls.append(
            {
                "cycle_index": c,
                "verification_wall": verifier.wall_time - verify_wall,
                "cycle_wall": time.perf_counter() - t0,
            }
        )
        log.debug("cycle %d %s: selected option %d", c, phase, outcome.selected)
    return ScenarioResult(records, model, walls, executed)


def collect_dataset(run: ScenarioRun, cycles: int):
    """Full-space verification data of ``cycles`` consecutive cycles, as ``[(inputs, targets), ...]``.

    The network runs under the best option of each cycle, like the exhaustive reference.
    """
    topo = run.topology
    space = topo.space()
    profile = UncertaintyProfile.for_topology(topo, rng_seed=run.seed, **run.uncertainty)
    vcfg = replace(run.verifier, seed=run.seed)
    verifier = Verifier(topo, vcfg, threads=run.threads)
    state = initial_state(profile)
    current = 0
    data = []
    for c in range(cycles):
        if c > 0:
            state = advance_cycle(state, profile)
        x = build_input_vectors(topo, state, space[current])
        results, _ = verifier.verify(state, list(space))
        data.append((x, targets_for(run.goals, [results[o] for o in space.ids])))
        current = select_best(results, run.goals)
        _, state = execute_cycle(topo, state, space[current], run.seed, vcfg.energy_model)
    return data
