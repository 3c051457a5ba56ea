import numpy as np

ACTIVATIONS = ("relu", "sigmoid", "linear")


def activate(z, kind):
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "sigmoid":
        # split on sign to avoid overflow in exp
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out
    if kind == "linear":
        return z
    raise ValueError(f"unknown activation {kind!r}")


def activation_grad(z, y, kind):
    """dy/dz evaluated elementwise."""
    if kind == "relu":
        return (z > 0).astype(z.dtype)
    if kind == "sigmoid":
        return y * (1.0 - y)
    return np.ones_like(z)


class DenseLayer:
    """Fully connected layer ``y = f(W x + b)`` with ``W`` of shape (out, in)."""

    def __init__(self, weights, biases, activation="relu"):
        weights = np.asarray(weights, dtype=float)
        biases = np.asarray(biases, dtype=float)
        if weights.ndim != 2 or biases.shape != (weights.shape[0],):
            raise ValueError(f"inconsistent shapes {weights.shape} / {biases.shape}")
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.weights = weights
        self.biases = biases
        self.activation = activation

    @classmethod
    def glorot(cls, n_in, n_out, activation, rng):
        limit = np.sqrt(6.0 / (n_in + n_out))
        return cls(rng.uniform(-limit, limit, size=(n_out, n_in)), np.zeros(n_out), activation)

    @property
    def n_in(self):
        return self.weights.shape[1]

    @property
    def n_out(self):
        return self.weights.shape[0]

    @property
    def n_params(self):
        return self.weights.size + self.biases.size

    def forward(self, x):
        z = x @ self.weights.T + self.biases
        return z, activate(z, self.activation)

    def __repr__(self):
        return f"DenseLayer({self.n_in}->{self.n_out}, {self.activation})"
