"""Class-weighted binary cross-entropy."""

import numpy as np

from . import ops
from .tensor import Tensor

CLAMP_EPS = 1e-7


def weighted_bce(pred: Tensor, labels, w_pos: float, w_neg: float) -> Tensor:
    """loss = -mean(w_pos * y * ln p + w_neg * (1-y) * ln(1-p)).

    Predictions are clamped to [1e-7, 1 - 1e-7] before the logs, so the
    loss is finite for saturated outputs.
    """
    y = np.asarray(labels, dtype=np.float64)
    if pred.shape != y.shape:
        raise ValueError(f"weighted_bce: predictions {pred.shape} vs labels {y.shape}")
    p = ops.clip(pred, CLAMP_EPS, 1.0 - CLAMP_EPS)
    one_minus_p = ops.affine(p, -1.0, 1.0)
    pos_term = ops.mul_const(ops.log(p), w_pos * y)
    neg_term = ops.mul_const(ops.log(one_minus_p), w_neg * (1.0 - y))
    return ops.affine(ops.mean_all(ops.add(pos_term, neg_term)), -1.0, 0.0)
