"""Hot numeric kernels with numba and pure-numpy paths.

Public entry points (``conv2d_forward``, ``conv2d_backward``,
``polygon_mask``) dispatch on :mod:`pedcross.backend`. The ``*_np`` and
``*_nb`` variants stay importable for the benchmark script and the
backend-equivalence tests.

Convolution semantics: cross-correlation (no kernel flip), zero "same"
padding. Output extent is ``ceil(in / stride)``; the total padding
``max((out - 1) * stride + k - in, 0)`` is split ``total // 2`` before,
remainder after.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .backend import CONV_USE_NUMBA, HAVE_NUMBA, RASTER_USE_NUMBA

if HAVE_NUMBA:
    from numba import njit
else:  # pragma: no cover - exercised only when numba is absent
    njit = None


def same_pad(extent: int, kernel: int, stride: int) -> tuple[int, int, int]:
    """Return (out_extent, pad_before, pad_after) for same padding."""
    out = -(-extent // stride)
    total = max((out - 1) * stride + kernel - extent, 0)
    return out, total // 2, total - total // 2


def _pad_input(x: np.ndarray, k: int, s: int):
    n, c, h, w = x.shape
    oh, pt, pb = same_pad(h, k, s)
    ow, pl, pr = same_pad(w, k, s)
    xp = np.pad(x, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
    return xp, oh, ow, pt, pl


# ---------------------------------------------------------------------------
# conv2d, pure numpy (im2col + BLAS matmul)


def conv2d_forward_np(x, w, b, stride):
    n, c, h, wd = x.shape
    f, _, k, _ = w.shape
    xp, oh, ow, _, _ = _pad_input(x, k, stride)
    win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(
        n * oh * ow, c * k * k
    )
    y = cols @ w.reshape(f, c * k * k).T + b
    return np.ascontiguousarray(y.reshape(n, oh, ow, f).transpose(0, 3, 1, 2))


def conv2d_backward_np(x, w, stride, dy):
    n, c, h, wd = x.shape
    f, _, k, _ = w.shape
    xp, oh, ow, pt, pl = _pad_input(x, k, stride)
    win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    dw = np.tensordot(dy, win, axes=([0, 2, 3], [0, 2, 3]))
    db = dy.sum(axis=(0, 2, 3))
    dxp = np.zeros_like(xp)
    for kh in range(k):
        for kw in range(k):
            contrib = np.tensordot(dy, w[:, :, kh, kw], axes=([1], [0]))
            dxp[:, :, kh : kh + stride * oh : stride, kw : kw + stride * ow : stride] += (
                contrib.transpose(0, 3, 1, 2)
            )
    dx = dxp[:, :, pt : pt + h, pl : pl + wd]
    return dx, dw, db


# ---------------------------------------------------------------------------
# conv2d, numba (NHWC loops, channel-contiguous inner dimension)

if HAVE_NUMBA:

    @njit(cache=True)
    def _conv2d_forward_kernel(xp, wt, bias, stride, out):
        # xp: [N,Hp,Wp,C], wt: [k,k,C,F], out: [N,OH,OW,F] zero-initialized
        nn_, oh_, ow_, f_ = out.shape
        k = wt.shape[0]
        c_ = wt.shape[2]
        for n in range(nn_):
            for oh in range(oh_):
                for ow in range(ow_):
                    acc = out[n, oh, ow]
                    for kh in range(k):
                        for kw in range(k):
                            xrow = xp[n, oh * stride + kh, ow * stride + kw]
                            for c in range(c_):
                                xv = xrow[c]
                                wrow = wt[kh, kw, c]
                                for f in range(f_):
                                    acc[f] += xv * wrow[f]
                    for f in range(f_):
                        acc[f] += bias[f]

    @njit(cache=True)
    def _conv2d_backward_kernel(xp, wt, stride, dyt, dxp, dwt):
        # dyt: [N,OH,OW,F]; dxp, dwt zero-initialized accumulators
        nn_, oh_, ow_, f_ = dyt.shape
        k = wt.shape[0]
        c_ = wt.shape[2]
        for n in range(nn_):
            for oh in range(oh_):
                for ow in range(ow_):
                    dyrow = dyt[n, oh, ow]
                    for kh in range(k):
                        for kw in range(k):
                            xrow = xp[n, oh * stride + kh, ow * stride + kw]
                            dxrow = dxp[n, oh * stride + kh, ow * stride + kw]
                            for c in range(c_):
                                xv = xrow[c]
                                wrow = wt[kh, kw, c]
                                dwrow = dwt[kh, kw, c]
                                acc = 0.0
                                for f in range(f_):
                                    dyv = dyrow[f]
                                    acc += dyv * wrow[f]
                                    dwrow[f] += dyv * xv
                                dxrow[c] += acc


def conv2d_forward_nb(x, w, b, stride):
    n, c, h, wd = x.shape
    f, _, k, _ = w.shape
    xp, oh, ow, _, _ = _pad_input(x, k, stride)
    xp = np.ascontiguousarray(xp.transpose(0, 2, 3, 1))
    wt = np.ascontiguousarray(w.transpose(2, 3, 1, 0))
    out = np.zeros((n, oh, ow, f))
    _conv2d_forward_kernel(xp, wt, b, stride, out)
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2))


def conv2d_backward_nb(x, w, stride, dy):
    n, c, h, wd = x.shape
    f, _, k, _ = w.shape
    xp, oh, ow, pt, pl = _pad_input(x, k, stride)
    xp = np.ascontiguousarray(xp.transpose(0, 2, 3, 1))
    wt = np.ascontiguousarray(w.transpose(2, 3, 1, 0))
    dyt = np.ascontiguousarray(dy.transpose(0, 2, 3, 1))
    dxp = np.zeros_like(xp)
    dwt = np.zeros_like(wt)
    _conv2d_backward_kernel(xp, wt, stride, dyt, dxp, dwt)
    dx = np.ascontiguousarray(dxp.transpose(0, 3, 1, 2))[:, :, pt : pt + h, pl : pl + wd]
    dw = np.ascontiguousarray(dwt.transpose(3, 2, 0, 1))
    db = dy.sum(axis=(0, 2, 3))
    return dx, dw, db


# ---------------------------------------------------------------------------
# even-odd point-in-polygon mask over pixel centers


def polygon_mask_np(px, py, poly):
    """Even-odd inside test for flat point arrays against one polygon.

    The crossing test evaluates the same float expressions as the numba
    path and the brute-force oracle, so results match bit for bit.
    """
    xs = poly[:, 0]
    ys = poly[:, 1]
    inside = np.zeros(px.shape, dtype=bool)
    nv = len(xs)
    j = nv - 1
    with np.errstate(divide="ignore", invalid="ignore"):
        for i in range(nv):
            crosses = (ys[i] > py) != (ys[j] > py)
            xcross = (xs[j] - xs[i]) * (py - ys[i]) / (ys[j] - ys[i]) + xs[i]
            inside ^= crosses & (px < xcross)
            j = i
    return inside


if HAVE_NUMBA:

    @njit(cache=True)
    def _polygon_mask_kernel(px, py, xs, ys, out):
        nv = xs.shape[0]
        for p in range(px.shape[0]):
            x = px[p]
            y = py[p]
            inside = False
            j = nv - 1
            for i in range(nv):
                if (ys[i] > y) != (ys[j] > y):
                    xcross = (xs[j] - xs[i]) * (y - ys[i]) / (ys[j] - ys[i]) + xs[i]
                    if x < xcross:
                        inside = not inside
                j = i
            out[p] = inside


def polygon_mask_nb(px, py, poly):
    out = np.zeros(px.shape[0], dtype=np.bool_)
    _polygon_mask_kernel(
        np.ascontiguousarray(px),
        np.ascontiguousarray(py),
        np.ascontiguousarray(poly[:, 0]),
        np.ascontiguousarray(poly[:, 1]),
        out,
    )
    return out


# ---------------------------------------------------------------------------
# dispatch (see pedcross.backend for the policy)

if CONV_USE_NUMBA:
    conv2d_forward = conv2d_forward_nb
    conv2d_backward = conv2d_backward_nb
else:
    conv2d_forward = conv2d_forward_np
    conv2d_backward = conv2d_backward_np

if RASTER_USE_NUMBA:
    polygon_mask = polygon_mask_nb
else:
    polygon_mask = polygon_mask_np
