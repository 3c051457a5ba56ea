"""Shared-core, multi-head network with one head per adaptation goal."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ..domain import ContractViolation, GoalSpec
from .layers import DenseLayer, activation_grad
from .optim import OPTIMIZERS, make_optimizer
from .scaling import SCALERS, Scaler

PROB_CLAMP = 1e-7
CHECKPOINT_FORMAT = "adaptspace-model"
CHECKPOINT_VERSION = 1


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss or gradient."""


@dataclass(frozen=True)
class HyperParams:
    scaler: str = "standard"
    batch_size: int = 64
    learning_rate: float = 5e-3
    optimizer: str = "adam"
    core_layers: tuple[int, ...] = (50, 25, 15)
    class_layers: tuple[int, ...] = (20, 10, 5)
    regr_layers: tuple[int, ...] = (40, 20, 10, 5)

    def __post_init__(self):
        object.__setattr__(self, "core_layers", tuple(int(n) for n in self.core_layers))
        object.__setattr__(self, "class_layers", tuple(int(n) for n in self.class_layers))
        object.__setattr__(self, "regr_layers", tuple(int(n) for n in self.regr_layers))
        if self.scaler not in SCALERS:
            raise ValueError(f"unknown scaler {self.scaler!r}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning rate must be > 0")
        if not self.core_layers or any(n < 1 for n in self.core_layers + self.class_layers + self.regr_layers):
            raise ValueError("layer widths must be >= 1 and the core needs at least one layer")

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("core_layers", "class_layers", "regr_layers"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "HyperParams":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown hyper-parameter keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class Head:
    name: str
    kind: str  # "classification" | "regression"
    layers: list[DenseLayer]
    target_offset: float = 0.0
    target_scale: float = 1.0

    @property
    def n_params(self) -> int:
        return sum(l.n_params for l in self.layers)


class NeuralModel:
    """Core layers shared by all heads; classification heads end in a sigmoid, the regression head is linear."""

    def __init__(self, core: list[DenseLayer], heads: list[Head], scaler: Scaler, optimizer=None):
        if not core:
            raise ValueError("model needs at least one core layer")
        width = core[-1].n_out
        for h in heads:
            if h.layers[0].n_in != width:
                raise ValueError(f"head {h.name} expects width {h.layers[0].n_in}, core gives {width}")
            if h.layers[-1].n_out != 1:
                raise ValueError(f"head {h.name} must end in a width-1 layer")
            want = "sigmoid" if h.kind == "classification" else "linear"
            if h.layers[-1].activation != want:
                raise ValueError(f"{h.kind} head {h.name} must end in {want}")
        if sum(h.kind == "regression" for h in heads) > 1:
            raise ValueError("at most one regression head")
        self.core = core
        self.heads = heads
        self.scaler = scaler
        self.optimizer = optimizer
        self.predict_calls = 0

    @property
    def input_width(self) -> int:
        return self.core[0].n_in

    @property
    def head_names(self) -> list[str]:
        return [h.name for h in self.heads]

    @property
    def n_params(self) -> int:
        return sum(l.n_params for l in self.core) + sum(h.n_params for h in self.heads)

    @property
    def macs_per_row(self) -> int:
        """Multiply-accumulates of one forward pass for one input row."""
        return sum(l.weights.size for l in self.core) + sum(l.weights.size for h in self.heads for l in h.layers)

    def layers(self):
        yield from self.core
        for h in self.heads:
            yield from h.layers

    def params(self) -> list[np.ndarray]:
        out = []
        for l in self.layers():
            out += [l.weights, l.biases]
        return out

    # --- forward / backward -------------------------------------------------

    def forward(self, x, keep=False):
        """One pass through the core, then every head. Returns ``{head: (batch,)}``."""
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.input_width:
            raise ContractViolation(f"expected inputs of shape (n, {self.input_width}), got {x.shape}")
        trace = [] if keep else None
        h = x
        for layer in self.core:
            z, y = layer.forward(h)
            if keep:
                trace.append((layer, h, z, y))
            h = y
        outputs = {}
        head_traces = {}
        for head in self.heads:
            g = h
            ht = []
            for layer in head.layers:
                z, y = layer.forward(g)
                if keep:
                    ht.append((layer, g, z, y))
                g = y
            outputs[head.name] = g[:, 0]
            head_traces[head.name] = ht
        if keep:
            return outputs, (trace, head_traces)
        return outputs

    def loss(self, outputs, targets):
        """Summed loss: binary cross-entropy per classification head plus MSE for the regression head.

        ``targets`` are in model space (regression targets already standardized).
        Returns the total and the gradient of the total w.r.t. each head output.
        """
        total = 0.0
        grads = {}
        for head in self.heads:
            y = outputs[head.name]
            t = np.asarray(targets[head.name], dtype=float)
            n = y.shape[0]
            if head.kind == "classification":
                yc = np.clip(y, PROB_CLAMP, 1.0 - PROB_CLAMP)
                total += float(-np.mean(t * np.log(yc) + (1.0 - t) * np.log(1.0 - yc)))
                inside = (y > PROB_CLAMP) & (y < 1.0 - PROB_CLAMP)
                grads[head.name] = inside * (-t / yc + (1.0 - t) / (1.0 - yc)) / n
            else:
                d = y - t
                total += float(np.mean(d * d))
                grads[head.name] = 2.0 * d / n
        return total, grads

    def backward(self, traces, out_grads):
        core_trace, head_traces = traces
        grads = {}
        shared = None
        for head in self.heads:
            g = out_grads[head.name][:, None]
            for layer, x_in, z, y in reversed(head_traces[head.name]):

                dz = g * activation_grad(z, y, layer.activation)
                grads[id(layer.weights)] = dz.T @ x_in
                grads[id(layer.biases)] = dz.sum(axis=0)
                g = dz @ layer.weights
            shared = g if shared is None else shared + g
        g = shared
        for layer, x_in, z, y in reversed(core_trace):

            dz = g * activation_grad(z, y, layer.activation)
            grads[id(layer.weights)] = dz.T @ x_in
            grads[id(layer.biases)] = dz.sum(axis=0)
            g = dz @ layer.weights
        return [grads[id(p)] for p in self.params()]

    def loss_and_grads(self, x, targets):
        outputs, traces = self.forward(x, keep=True)
        total, out_grads = self.loss(outputs, targets)
        return total, self.backward(traces, out_grads)

    # --- conversion between quality units and model space -------------------

    def encode_targets(self, targets: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
        enc = {}
        for head in self.heads:
            t = np.asarray(targets[head.name], dtype=float)
            enc[head.name] = (t - head.target_offset) / head.target_scale if head.kind == "regression" else t
        return enc

    def fit_target_scaling(self, targets: dict[str, np.ndarray]) -> None:
        for head in self.heads:
            if head.kind == "regression":
                t = np.asarray(targets[head.name], dtype=float)
                head.target_offset = float(t.mean())
                sd = float(t.std())
                head.target_scale = sd if sd > 0 else 1.0

    def refit_scaling(self, inputs, targets) -> None:
        """Recompute input and regression-target statistics, e.g. over a sliding training window."""
        self.scaler.fit(inputs)
        self.fit_target_scaling(targets)

    def predict(self, inputs) -> dict[str, np.ndarray]:
        """Scale raw input vectors, run one forward pass, return probabilities / quality values."""
        self.predict_calls += 1
        out = self.forward(self.scaler.transform(inputs))
        for head in self.heads:
            if head.kind == "regression":
                out[head.name] = out[head.name] * head.target_scale + head.target_offset
        return out

    # --- training --------------------------------------------------------------

    def train_step(self, x_scaled, targets_encoded) -> float:
        """One optimizer update on a batch; returns the loss before the update."""
        if self.optimizer is None:
            raise ContractViolation("model has no optimizer")
        total, grads = self.loss_and_grads(x_scaled, targets_encoded)
        if not np.isfinite(total) or not all(np.all(np.isfinite(g)) for g in grads):
            raise DivergenceError(f"non-finite training loss ({total})")
        self.optimizer.step(self.params(), grads)
        return total

    def fit(self, inputs, targets, epochs, batch_size, rng) -> list[float]:
        """Mini-batch training on raw inputs / quality-unit targets; returns mean loss per epoch."""
        x = self.scaler.transform(inputs)
        enc = self.encode_targets(targets)
        n = x.shape[0]
        history = []
        for _ in range(epochs):
            order = rng.permutation(n)
            losses = []
            for start in range(0, n, batch_size):
                idx = order[start:start + batch_size]
                losses.append(self.train_step(x[idx], {k: v[idx] for k, v in enc.items()}))
            history.append(float(np.mean(losses)) if losses else 0.0)
        return history

    def evaluate(self, inputs, targets) -> float:
        outputs = self.forward(self.scaler.transform(inputs))
        total, _ = self.loss(outputs, self.encode_targets(targets))
        return total

    # --- checkpoints ------------------------------------------------------------

    def to_dict(self) -> dict:
        def layer(l):
            return {
                "activation": l.activation,
                "weights": [[float(v).hex() for v in row] for row in l.weights],
                "biases": [float(v).hex() for v in l.biases],
            }

        def arr(a):
            return None if a is None else [float(v).hex() for v in np.asarray(a).ravel()]

        return {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "scaler": {"kind": self.scaler.kind, "offset": arr(self.scaler.offset), "scale": arr(self.scaler.scale)},
            "core": [layer(l) for l in self.core],
            "heads": [
                {
                    "name": h.name,
                    "kind": h.kind,
                    "target_offset": float(h.target_offset).hex(),
                    "target_scale": float(h.target_scale).hex(),
                    "layers": [layer(l) for l in h.layers],
                }
                for h in self.heads
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NeuralModel":
        if d.get("format") != CHECKPOINT_FORMAT or d.get("version") != CHECKPOINT_VERSION:
            raise ValueError("not a supported model checkpoint")

        def unhex(xs):
            return np.array([float.fromhex(v) for v in xs], dtype=float)

        def layer(rec):
            w = np.array([[float.fromhex(v) for v in row] for row in rec["weights"]], dtype=float)
            return DenseLayer(w, unhex(rec["biases"]), rec["activation"])

        sc = d["scaler"]
        scaler = Scaler(sc["kind"])
        if sc["offset"] is not None:
            scaler.offset = unhex(sc["offset"])
            scaler.scale = unhex(sc["scale"])
        heads = [
            Head(
                h["name"], h["kind"], [layer(l) for l in h["layers"]],
                float.fromhex(h["target_offset"]), float.fromhex(h["target_scale"]),
            )
            for h in d["heads"]
        ]
        return cls([layer(l) for l in d["core"]], heads, scaler)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "NeuralModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def build_model(hp: HyperParams, goals: list[GoalSpec], input_width: int, rng) -> NeuralModel:
    """Fresh model for a goal set: a classification head per threshold/set-point goal, a regression head for the optimization goal."""
    core = []
    width = input_width
    for n in hp.core_layers:
        core.append(DenseLayer.glorot(width, n, "relu", rng))
        width = n
    heads = []
    for goal in goals:
        kind = "classification" if goal.is_classification else "regression"
        hidden = hp.class_layers if goal.is_classification else hp.regr_layers
        layers = []
        w = width
        for n in hidden:
            layers.append(DenseLayer.glorot(w, n, "relu", rng))
            w = n
        layers.append(DenseLayer.glorot(w, 1, "sigmoid" if kind == "classification" else "linear", rng))
        heads.append(Head(goal.name, kind, layers))
    return NeuralModel(core, heads, Scaler(hp.scaler), make_optimizer(hp.optimizer, hp.learning_rate))
