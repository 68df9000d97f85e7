"""Representative gradient-check suite over every layer kind.

Inputs are promoted to Parameters so input gradients are verified along
with weights; the scalar loss mixes outputs through a fixed random
projection so no gradient path collapses to zero.
"""

import numpy as np

from . import ops
from .gradcheck import grad_check
from .layers import LSTM, Conv2D, Dense
from .tensor import Parameter


def _projected_loss(out, rng):
    return ops.mean_all(ops.mul_const(out, rng.normal(size=out.shape)))


def layer_suite(seed: int = 0, configs_per_kind: int = 5) -> dict:
    """Max finite-difference relative error per layer kind."""
    rng = np.random.default_rng(seed)
    results = {}

    def record(kind, err):
        results[kind] = max(results.get(kind, 0.0), err)

    for _ in range(configs_per_kind):
        n = int(rng.integers(1, 4))

        d, u = int(rng.integers(1, 6)), int(rng.integers(1, 6))
        x = Parameter(rng.normal(size=(n, d)))
        dense = Dense(d, u, rng)
        params = [x] + dense.parameters()
        record("dense", grad_check(
            lambda: _projected_loss(dense(x), np.random.default_rng(seed)),
            params, seed=seed))

        c, f = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        k = int(rng.choice([1, 3]))
        stride = int(rng.integers(1, 4))
        h = int(rng.integers(3, 9))
        x = Parameter(rng.normal(size=(n, c, h, h)))
        conv = Conv2D(c, f, k, stride, rng)
        params = [x] + conv.parameters()
        record("conv2d", grad_check(
            lambda: _projected_loss(conv(x), np.random.default_rng(seed)),
            params, seed=seed))

        d, u, steps = int(rng.integers(1, 4)), int(rng.integers(1, 5)), int(rng.integers(1, 6))
        seq = rng.normal(size=(n, steps, d))
        lstm = LSTM(d, u, rng)
        record("lstm", grad_check(
            lambda: _projected_loss(lstm(seq), np.random.default_rng(seed)),
            lstm.parameters(), seed=seed))

        x = Parameter(rng.normal(size=(n, int(rng.integers(2, 6)))))
        mask = rng.random(x.shape) >= 0.5
        record("dropout", grad_check(
            lambda: _projected_loss(
                ops.dropout(x, 0.5, "train", mask=mask),
                np.random.default_rng(seed)),
            [x], seed=seed))

        x = Parameter(rng.normal(size=(n, 2, int(rng.integers(2, 5)), int(rng.integers(2, 5)))))
        record("global_avg_pool", grad_check(
            lambda: _projected_loss(ops.global_avg_pool(x), np.random.default_rng(seed)),
            [x], seed=seed))

        # keep relu inputs away from the kink so central differences stay valid
        x_data = rng.normal(size=(n, 5)) * 2.0
        x_data += np.sign(x_data) * 0.01
        x = Parameter(x_data)
        record("activation", grad_check(
            lambda: _projected_loss(
                ops.tanh(ops.sigmoid(ops.relu(x))), np.random.default_rng(seed)),
            [x], seed=seed))

    return results
