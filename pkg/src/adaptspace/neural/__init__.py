"""Dense networks with a shared core and one head per goal, trained with Adam or RMSprop."""

from .layers import DenseLayer, activate
from .model import DivergenceError, HyperParams, NeuralModel, build_model
from .optim import Adam, RMSprop, make_optimizer
from .scaling import Scaler

__all__ = [
    "Adam",
    "DenseLayer",
    "DivergenceError",
    "HyperParams",
    "NeuralModel",
    "RMSprop",
    "Scaler",
    "activate",
    "build_model",
    "make_optimizer",
]
