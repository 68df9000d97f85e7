"""Finite-difference gradient verification.

``grad_check`` rebuilds the (deterministic) forward graph, backpropagates
once, and compares each parameter gradient against central differences
with step 1e-5. Tensors above ``max_coords`` entries are probed at a
seeded random coordinate subset; small tensors are checked exhaustively.
"""

import numpy as np

from .tensor import backward


def grad_check(build_loss, params, step: float = 1e-5, max_coords: int = 64,
               seed: int = 0) -> float:
    """Max over probed coordinates of |g_ad - g_fd| / max(1, |g_ad|, |g_fd|).

    ``build_loss`` must return a scalar-loss Tensor and be a pure function
    of the current parameter values.
    """
    params = list(params)
    for p in params:
        p.zero_grad()
    backward(build_loss())
    analytic = [p.grad.copy() for p in params]

    rng = np.random.default_rng(seed)
    worst = 0.0
    for p, grad in zip(params, analytic):
        flat = p.data.reshape(-1)
        gflat = grad.reshape(-1)
        size = flat.shape[0]
        if size <= max_coords:
            coords = range(size)
        else:
            coords = np.sort(rng.choice(size, size=max_coords, replace=False))
        for i in coords:
            original = flat[i]
            flat[i] = original + step
            loss_plus = float(build_loss().data)
            flat[i] = original - step
            loss_minus = float(build_loss().data)
            flat[i] = original
            fd = (loss_plus - loss_minus) / (2.0 * step)
            ad = gflat[i]
            err = abs(ad - fd) / max(1.0, abs(ad), abs(fd))
            if err > worst:
                worst = err
    return worst
