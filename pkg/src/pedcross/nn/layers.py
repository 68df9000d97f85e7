"""Layer modules over the primitive ops.

Initialization: conv and dense weights draw uniform from
+/- sqrt(6 / (fan_in + fan_out)); LSTM matrices likewise per matrix, with
the forget-gate bias set to 1. All draws come from the caller's seeded
generator, so a fixed seed gives a bit-identical model.
"""

from dataclasses import dataclass, field

import numpy as np

from . import ops
from .tensor import Parameter, Tensor

LAYER_KINDS = ("conv2d", "lstm", "dense", "dropout", "global_avg_pool", "activation")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.kind == "conv2d":
            if self.params.get("kernel", 1) < 1 or self.params.get("stride", 1) < 1:
                raise ValueError(f"conv2d spec needs kernel >= 1 and stride >= 1: {self.params}")
        if self.kind == "dropout":
            p = self.params.get("p", 0.0)
            if not 0.0 <= p < 1.0:
                raise ValueError(f"dropout p must be in [0, 1), got {p}")

    def to_json(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params)}

    @classmethod
    def from_json(cls, d: dict) -> "LayerSpec":
        return cls(kind=str(d["kind"]), params=dict(d["params"]))


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Conv2D:
    def __init__(self, in_channels: int, filters: int, kernel: int, stride: int,
                 rng: np.random.Generator, name: str = "conv"):
        fan_in = in_channels * kernel * kernel
        fan_out = filters * kernel * kernel
        self.stride = stride
        self.w = Parameter(
            glorot_uniform(rng, (filters, in_channels, kernel, kernel), fan_in, fan_out),
            name=f"{name}.w",
        )
        self.b = Parameter(np.zeros(filters), name=f"{name}.b")

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.w, self.b, self.stride)

    def parameters(self):
        return [self.w, self.b]

    def spec(self) -> LayerSpec:
        f, c, k, _ = self.w.shape
        return LayerSpec("conv2d", {"in_channels": c, "filters": f, "kernel": k,
                                    "stride": self.stride})


class Dense:
    def __init__(self, in_dim: int, units: int, rng: np.random.Generator,
                 name: str = "dense"):
        self.w = Parameter(glorot_uniform(rng, (in_dim, units), in_dim, units),
                           name=f"{name}.w")
        self.b = Parameter(np.zeros(units), name=f"{name}.b")

    def __call__(self, x: Tensor) -> Tensor:
        return ops.add(ops.matmul(x, self.w), self.b)

    def parameters(self):
        return [self.w, self.b]

    def spec(self) -> LayerSpec:
        d, u = self.w.shape
        return LayerSpec("dense", {"in_dim": d, "units": u})


class LSTM:
    """Standard LSTM; gate order in the stacked weight matrices is
    (input, forget, cell, output)."""

    def __init__(self, input_dim: int, units: int, rng: np.random.Generator,
                 name: str = "lstm"):
        self.units = units
        self.input_dim = input_dim
        self.wx = Parameter(
            glorot_uniform(rng, (input_dim, 4 * units), input_dim, 4 * units),
            name=f"{name}.wx",
        )
        self.wh = Parameter(
            glorot_uniform(rng, (units, 4 * units), units, 4 * units),
            name=f"{name}.wh",
        )
        bias = np.zeros(4 * units)
        bias[units : 2 * units] = 1.0  # forget gate starts open
        self.b = Parameter(bias, name=f"{name}.b")

    def step(self, x_t: Tensor, h_prev: Tensor, c_prev: Tensor):
        u = self.units
        z = ops.add(ops.add(ops.matmul(x_t, self.wx), ops.matmul(h_prev, self.wh)), self.b)
        i = ops.sigmoid(ops.narrow(z, 1, 0, u))
        f = ops.sigmoid(ops.narrow(z, 1, u, u))
        g = ops.tanh(ops.narrow(z, 1, 2 * u, u))
        o = ops.sigmoid(ops.narrow(z, 1, 3 * u, u))
        c_t = ops.add(ops.mul(f, c_prev), ops.mul(i, g))
        h_t = ops.mul(o, ops.tanh(c_t))
        return h_t, c_t

    def __call__(self, x_seq: np.ndarray) -> Tensor:
        """Run over [N, T, D]; returns the final hidden state [N, units]."""
        n = x_seq.shape[0]
        h = ops.constant(np.zeros((n, self.units)))
        c = ops.constant(np.zeros((n, self.units)))
        for t in range(x_seq.shape[1]):
            h, c = self.step(ops.constant(x_seq[:, t, :]), h, c)
        return h

    def parameters(self):
        return [self.wx, self.wh, self.b]

    def spec(self) -> LayerSpec:
        return LayerSpec("lstm", {"input_dim": self.input_dim, "units": self.units})


def lstm_step(x_t, h_prev, c_prev, wx, wh, b):
    """Functional single step on raw arrays; returns (h_t, c_t) arrays."""
    units = h_prev.shape[1]
    lstm = object.__new__(LSTM)
    lstm.units = units
    lstm.wx = ops.constant(wx)
    lstm.wh = ops.constant(wh)
    lstm.b = ops.constant(b)
    h, c = LSTM.step(lstm, ops.constant(x_t), ops.constant(h_prev), ops.constant(c_prev))
    return h.data, c.data
