from .layers import (
    Conv1d,
    Flatten,
    GRULayer,
    Linear,
    MaxPool1d,
    Parameter,
    ReLU,
    Reshape,
    Sequential,
    Transpose,
    log_softmax,
    mse_loss,
    softmax,
    softmax_cross_entropy,
)
from .models import NeuralNetModel, build_network
from .optim import Adam

__all__ = [
    "Adam",
    "Conv1d",
    "Flatten",
    "GRULayer",
    "Linear",
    "MaxPool1d",
    "NeuralNetModel",
    "Parameter",
    "ReLU",
    "Reshape",
    "Sequential",
    "Transpose",
    "build_network",
    "log_softmax",
    "mse_loss",
    "softmax",
    "softmax_cross_entropy",
]
