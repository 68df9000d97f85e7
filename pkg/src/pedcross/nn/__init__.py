"""Minimal dense-tensor NN core: autodiff, layers, loss, optimizer."""

from . import ops
from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import grad_check
from .layers import LSTM, Conv2D, Dense, LayerSpec, lstm_step
from .losses import weighted_bce
from .optim import RMSProp, rmsprop_step
from .tensor import GraphError, Parameter, Tensor, backward

__all__ = [
    "ops",
    "Tensor",
    "Parameter",
    "backward",
    "GraphError",
    "Conv2D",
    "Dense",
    "LSTM",
    "LayerSpec",
    "lstm_step",
    "weighted_bce",
    "RMSProp",
    "rmsprop_step",
    "grad_check",
    "save_checkpoint",
    "load_checkpoint",
]
