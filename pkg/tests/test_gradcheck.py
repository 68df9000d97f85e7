import numpy as np

from pedcross import nn
from pedcross.nn import ops
from pedcross.nn.suite import layer_suite
from pedcross.nn.tensor import Parameter


def projected_loss(out, seed=0):
    rng = np.random.default_rng(seed)
    return ops.mean_all(ops.mul_const(out, rng.normal(size=out.shape)))


class TestGradCheck:
    def test_single_dense_layer_tight(self):
        rng = np.random.default_rng(0)
        dense = nn.Dense(6, 4, rng)
        x = Parameter(rng.normal(size=(3, 6)))
        err = nn.grad_check(lambda: projected_loss(dense(x)),
                            [x] + dense.parameters())
        assert err < 1e-6

    def test_three_layer_conv_stack(self):
        rng = np.random.default_rng(1)
        convs = [nn.Conv2D(2, 3, 3, 1, rng), nn.Conv2D(3, 4, 3, 2, rng),
                 nn.Conv2D(4, 4, 3, 2, rng)]
        x = Parameter(rng.normal(size=(2, 2, 8, 8)))

        def build():
            h = x
            for conv in convs:
                h = conv(h)
            return projected_loss(h)

        params = [x]
        for conv in convs:
            params.extend(conv.parameters())
        assert nn.grad_check(build, params) < 1e-5

    def test_lstm_over_five_steps(self):
        rng = np.random.default_rng(2)
        lstm = nn.LSTM(3, 4, rng)
        seq = rng.normal(size=(2, 5, 3))
        err = nn.grad_check(lambda: projected_loss(lstm(seq)), lstm.parameters())
        assert err < 1e-5

    def test_loss_composition_through_bce(self):
        rng = np.random.default_rng(3)
        dense = nn.Dense(4, 1, rng)
        x = rng.normal(size=(5, 4))
        y = rng.integers(0, 2, 5).astype(float)

        def build():
            logits = dense(ops.constant(x))
            probs = ops.reshape(ops.sigmoid(logits), (5,))
            return nn.weighted_bce(probs, y, 1.7, 0.6)

        assert nn.grad_check(build, dense.parameters()) < 1e-6

    def test_suite_covers_every_layer_kind(self):
        results = layer_suite(seed=0, configs_per_kind=3)
        assert set(results) == {"dense", "conv2d", "lstm", "dropout",
                                "global_avg_pool", "activation"}
        for kind, err in results.items():
            assert err < 1e-4, f"{kind}: {err}"
