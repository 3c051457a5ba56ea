"""Offline hyper-parameter search: train every grid combination, keep the lowest validation loss."""

from __future__ import annotations

import copy
import hashlib
import itertools
import math
from dataclasses import dataclass

import numpy as np

from ..domain import GoalSpec
from ..metrics import f1_score, spearman_rho
from .model import DivergenceError, HyperParams, NeuralModel, build_model

DEFAULT_GRID = {
    "scaler": ["standard", "max-abs"],
    "batch_size": [16, 64],
    "learning_rate": [5e-3, 2e-3],
    "optimizer": ["adam", "rmsprop"],
    "core_layers": [[50, 25, 15], [40, 20]],
    "head_layers": [[[20, 10, 5], [40, 20, 10, 5]], [[20, 10], [20, 10]]],
}

GRID_KEYS = tuple(DEFAULT_GRID)


def expand_grid(spec: dict | None = None) -> list[HyperParams]:
    """Cartesian product of the grid dimensions; the last key varies fastest.

    ``head_layers`` lists (classification layout, regression layout) pairs.
    """
    spec = dict(DEFAULT_GRID if spec is None else spec)
    unknown = set(spec) - set(GRID_KEYS)
    if unknown:
        raise ValueError(f"unknown grid dimensions: {sorted(unknown)}")
    dims = [spec.get(k, DEFAULT_GRID[k]) for k in GRID_KEYS]
    if any(len(d) == 0 for d in dims):
        raise ValueError("every grid dimension needs at least one value")
    grid = []
    for scaler, batch, lr, opt, core, (cls_l, reg_l) in itertools.product(*dims):
        grid.append(HyperParams(scaler, int(batch), float(lr), opt, tuple(core), tuple(cls_l), tuple(reg_l)))
    return grid


@dataclass
class GridRow:
    index: int
    hyperparams: HyperParams
    validation_loss: float
    epochs_run: int
    n_params: int
    head_scores: dict[str, float]


@dataclass
class GridResult:
    best: HyperParams
    model: NeuralModel
    rows: list[GridRow]

    @property
    def best_row(self) -> GridRow:
        return min(self.rows, key=_rank_key)


def _rank_key(row: GridRow):
    return (row.validation_loss, row.n_params, row.index)


def _row_digests(x: np.ndarray) -> set[bytes]:
    x = np.ascontiguousarray(x, dtype=float)
    return {hashlib.blake2b(r.tobytes(), digest_size=16).digest() for r in x}


def check_disjoint(train_x, val_x) -> None:
    if _row_digests(train_x) & _row_digests(val_x):
        raise ValueError("training and validation data overlap")


def _score(model: NeuralModel, goals: list[GoalSpec], x, y) -> dict[str, float]:
    pred = model.predict(x)
    out = {}
    for g in goals:
        if g.is_classification:
            out[f"{g.name}_f1"] = f1_score(pred[g.name] >= 0.5, y[g.name] >= 0.5)
        else:
            out[f"{g.name}_rho"] = spearman_rho(pred[g.name], y[g.name])
    return out


def train_one(
    hp: HyperParams, goals, train, val, epochs: int, patience: int, rng
) -> tuple[NeuralModel, float, int]:
    """Train with early stopping on validation loss; the best epoch's weights are kept."""
    x, y = train
    model = build_model(hp, goals, x.shape[1], rng)
    model.refit_scaling(x, y)
    best_loss, best_params, stale, ran = math.inf, None, 0, 0
    for _ in range(epochs):
        ran += 1
        try:
            model.fit(x, y, 1, hp.batch_size, rng)
            loss = model.evaluate(*val)
        except DivergenceError:
            break
        if not math.isfinite(loss):
            break
        if loss < best_loss:
            best_loss, best_params, stale = loss, copy.deepcopy(model.params()), 0
        else:
            stale += 1
            if stale >= patience:
                break
    if best_params is not None:
        for p, b in zip(model.params(), best_params):
            p[...] = b
    return model, best_loss, ran


def grid_search(
    grid: list[HyperParams],
    train: tuple[np.ndarray, dict],
    validation: tuple[np.ndarray, dict],
    goals: list[GoalSpec],
    epochs: int = 200,
    patience: int = 20,
    seed: int = 0,
) -> GridResult:
    """Score every combination by summed validation loss (diverging ones score infinity).

    Ties are broken by fewer parameters, then by grid order.
    """
    if not grid:
        raise ValueError("grid is empty")
    check_disjoint(train[0], validation[0])
    rows, models = [], []
    for i, hp in enumerate(grid):
        model, loss, ran = train_one(hp, goals, train, validation, epochs, patience, np.random.default_rng([seed, i]))
        scores = _score(model, goals, *validation) if math.isfinite(loss) else {}
        rows.append(GridRow(i, hp, loss, ran, model.n_params, scores))
        models.append(model)
    best = min(rows, key=_rank_key)
    return GridResult(best.hyperparams, models[best.index], rows)
