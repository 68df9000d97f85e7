"""Differentiable primitive operations.

Each op runs its numpy (or kernel-backed) forward, then returns a Tensor
whose backward closure routes the output gradient to the operands.
Convolutions use the dual-path kernels; everything else is plain numpy.
"""

import numpy as np

from .. import kernels
from .tensor import Tensor, unbroadcast


def _shape_error(op, *tensors):
    shapes = ", ".join(str(t.shape) for t in tensors)
    return ValueError(f"{op}: incompatible shapes {shapes}")


def constant(data) -> Tensor:
    return Tensor(data)


def add(a: Tensor, b: Tensor) -> Tensor:
    try:
        data = a.data + b.data
    except ValueError:
        raise _shape_error("add", a, b) from None
    out = Tensor(data, parents=(a, b))

    def _bwd(g):
        a.accumulate(unbroadcast(g, a.shape))
        b.accumulate(unbroadcast(g, b.shape))

    out._backward = _bwd
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    try:
        data = a.data * b.data
    except ValueError:
        raise _shape_error("mul", a, b) from None
    out = Tensor(data, parents=(a, b))

    def _bwd(g):
        a.accumulate(unbroadcast(g * b.data, a.shape))
        b.accumulate(unbroadcast(g * a.data, b.shape))

    out._backward = _bwd
    return out


def mul_const(a: Tensor, c) -> Tensor:
    c = np.asarray(c, dtype=np.float64)
    out = Tensor(a.data * c, parents=(a,))
    out._backward = lambda g: a.accumulate(unbroadcast(g * c, a.shape))
    return out


def affine(a: Tensor, scale: float, shift: float) -> Tensor:
    out = Tensor(scale * a.data + shift, parents=(a,))
    out._backward = lambda g: a.accumulate(scale * g)
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise _shape_error("matmul", a, b)
    out = Tensor(a.data @ b.data, parents=(a, b))

    def _bwd(g):
        a.accumulate(g @ b.data.T)
        b.accumulate(a.data.T @ g)

    out._backward = _bwd
    return out


def conv2d(x: Tensor, w: Tensor, b: Tensor, stride: int) -> Tensor:
    """Same-padded cross-correlation, x [N,C,H,W], w [F,C,k,k], b [F]."""
    if x.data.ndim != 4 or w.data.ndim != 4 or x.shape[1] != w.shape[1]:
        raise _shape_error("conv2d", x, w)
    if b.shape != (w.shape[0],):
        raise _shape_error("conv2d bias", w, b)
    if w.shape[2] != w.shape[3] or w.shape[2] < 1 or stride < 1:
        raise ValueError(f"conv2d: kernel {w.shape[2:]} / stride {stride} invalid")
    out = Tensor(kernels.conv2d_forward(x.data, w.data, b.data, stride), parents=(x, w, b))

    def _bwd(g):
        dx, dw, db = kernels.conv2d_backward(x.data, w.data, stride, g)
        x.accumulate(dx)
        w.accumulate(dw)
        b.accumulate(db)

    out._backward = _bwd
    return out


def global_avg_pool(x: Tensor) -> Tensor:
    """Mean over the spatial axes, [N,C,H,W] -> [N,C]."""
    if x.data.ndim != 4:
        raise _shape_error("global_avg_pool", x)
    n, c, h, w = x.shape
    out = Tensor(x.data.mean(axis=(2, 3)), parents=(x,))

    def _bwd(g):
        x.accumulate(np.broadcast_to(g[:, :, None, None], x.shape) / (h * w))

    out._backward = _bwd
    return out


def concat(tensors, axis: int) -> Tensor:
    tensors = list(tensors)
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis), parents=tensors)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def _bwd(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            t.accumulate(g[tuple(idx)])

    out._backward = _bwd
    return out


def narrow(x: Tensor, axis: int, start: int, size: int) -> Tensor:
    idx = [slice(None)] * x.data.ndim
    idx[axis] = slice(start, start + size)
    idx = tuple(idx)
    out = Tensor(x.data[idx], parents=(x,))

    def _bwd(g):
        full = np.zeros_like(x.data)
        full[idx] = g
        x.accumulate(full)

    out._backward = _bwd
    return out


def reshape(x: Tensor, shape) -> Tensor:
    out = Tensor(x.data.reshape(shape), parents=(x,))
    out._backward = lambda g: x.accumulate(g.reshape(x.shape))
    return out


def relu(x: Tensor) -> Tensor:
    out = Tensor(np.maximum(x.data, 0.0), parents=(x,))
    out._backward = lambda g: x.accumulate(g * (x.data > 0.0))
    return out


def sigmoid(x: Tensor) -> Tensor:
    y = 1.0 / (1.0 + np.exp(-x.data))
    out = Tensor(y, parents=(x,))
    out._backward = lambda g: x.accumulate(g * y * (1.0 - y))
    return out


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    out = Tensor(y, parents=(x,))
    out._backward = lambda g: x.accumulate(g * (1.0 - y * y))
    return out


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp with zero gradient outside the open interval (lo, hi)."""
    out = Tensor(np.clip(x.data, lo, hi), parents=(x,))
    inside = (x.data > lo) & (x.data < hi)
    out._backward = lambda g: x.accumulate(g * inside)
    return out


def log(x: Tensor) -> Tensor:
    out = Tensor(np.log(x.data), parents=(x,))
    out._backward = lambda g: x.accumulate(g / x.data)
    return out


def mean_all(x: Tensor) -> Tensor:
    out = Tensor(np.asarray(x.data.mean()), parents=(x,))
    out._backward = lambda g: x.accumulate(np.broadcast_to(g, x.shape) / x.data.size)
    return out


def dropout(x: Tensor, p: float, mode: str, rng=None, mask=None) -> Tensor:
    """Inverted dropout: train zeroes with probability p and rescales
    survivors by 1/(1-p); eval is the identity. ``mask`` overrides the
    sampled keep-mask (for deterministic gradient checks)."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if mode not in ("train", "eval"):
        raise ValueError(f"dropout mode must be train or eval, got {mode!r}")
    if mode == "eval":
        out = Tensor(x.data.copy(), parents=(x,))
        out._backward = lambda g: x.accumulate(g)
        return out
    if mask is None:
        if rng is None:
            raise ValueError("train-mode dropout needs an rng (or explicit mask)")
        mask = rng.random(x.shape) >= p
    scale = mask.astype(np.float64) / (1.0 - p)
    out = Tensor(x.data * scale, parents=(x,))
    out._backward = lambda g: x.accumulate(g * scale)
    return out
