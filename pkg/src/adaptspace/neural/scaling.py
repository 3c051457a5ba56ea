"""Per-feature affine scalers (standard, max-abs, min-max).

Features with zero spread are passed through with unit scale.
"""

from __future__ import annotations

import numpy as np

from ..domain import ContractViolation

SCALERS = ("standard", "max-abs", "min-max")


class Scaler:
    def __init__(self, kind: str = "standard"):
        if kind not in SCALERS:
            raise ValueError(f"unknown scaler {kind!r}; expected one of {SCALERS}")
        self.kind = kind
        self.offset: np.ndarray | None = None
        self.scale: np.ndarray | None = None

    @property
    def fitted(self) -> bool:
        return self.offset is not None

    def fit(self, data) -> "Scaler":
        x = np.asarray(data, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.shape[0] == 0:
            raise ValueError("cannot fit a scaler on zero rows")
        if self.kind == "standard":
            offset, spread = x.mean(axis=0), x.std(axis=0)
        elif self.kind == "max-abs":
            offset, spread = np.zeros(x.shape[1]), np.abs(x).max(axis=0)
        else:
            offset = x.min(axis=0)
            spread = x.max(axis=0) - offset
        self.offset = offset
        self.scale = np.where(spread > 0, spread, 1.0)
        return self

    def _check(self, x):
        if not self.fitted:
            raise ContractViolation("scaler used before fit")
        if x.shape[-1] != self.offset.shape[0]:
            raise ContractViolation(f"expected {self.offset.shape[0]} features, got {x.shape[-1]}")

    def transform(self, data) -> np.ndarray:
        x = np.asarray(data, dtype=float)
        self._check(x)
        return (x - self.offset) / self.scale

    def inverse_transform(self, data) -> np.ndarray:
        x = np.asarray(data, dtype=float)
        self._check(x)
        return x * self.scale + self.offset

    def fit_transform(self, data) -> np.ndarray:
        return self.fit(data).transform(data)

    def state(self) -> dict:
        return {"kind": self.kind, "offset": self.offset, "scale": self.scale}

    @classmethod
    def from_state(cls, state: dict) -> "Scaler":
        s = cls(state["kind"])
        if state["offset"] is not None:
            s.offset = np.asarray(state["offset"], dtype=float)
            s.scale = np.asarray(state["scale"], dtype=float)
        return s
