#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallback.

Times the two hot paths (same-padded conv2d forward/backward and the
polygon rasterization mask) on shapes the training pipeline actually
uses. The numba path is warmed before timing so JIT compilation is
excluded.

    python3 benchmarks/bench_kernels.py [--repeats 5]
"""

import argparse
import math
import time

import numpy as np

from pedcross import kernels
from pedcross.backend import HAVE_NUMBA

CONV_CASES = [
    # (label, N, C, H, F, k, stride)
    ("conv 16px head", 8, 15, 16, 32, 3, 3),
    ("conv 32px head", 8, 15, 32, 64, 3, 3),
    ("conv fusion 3px", 8, 384, 3, 512, 3, 1),
    ("conv fusion 8px", 8, 384, 8, 512, 3, 1),
]

RASTER_CASES = [
    # (label, side, vertices)
    ("raster 300px hexagon", 300, 6),
    ("raster 300px 24-gon", 300, 24),
    ("raster 64px hexagon", 64, 6),
]


def time_call(fn, repeats):
    best = math.inf
    for _ in range(repeats):
        started = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - started)
    return best


def bench_conv(repeats):
    rng = np.random.default_rng(0)
    rows = []
    for label, n, c, h, f, k, s in CONV_CASES:
        x = rng.normal(size=(n, c, h, h))
        w = rng.normal(size=(f, c, k, k))
        b = rng.normal(size=f)
        dy = rng.normal(size=kernels.conv2d_forward_np(x, w, b, s).shape)

        variants = {"numpy": (kernels.conv2d_forward_np, kernels.conv2d_backward_np)}
        if HAVE_NUMBA:
            kernels.conv2d_forward_nb(x, w, b, s)  # warm the JIT
            kernels.conv2d_backward_nb(x, w, s, dy)
            variants["numba"] = (kernels.conv2d_forward_nb, kernels.conv2d_backward_nb)

        timings = {}
        for name, (fwd, bwd) in variants.items():
            timings[f"{name} fwd"] = time_call(lambda: fwd(x, w, b, s), repeats)
            timings[f"{name} bwd"] = time_call(lambda: bwd(x, w, s, dy), repeats)
        rows.append((label, timings))
    return rows


def bench_raster(repeats):
    rng = np.random.default_rng(1)
    rows = []
    for label, side, vertices in RASTER_CASES:
        angles = np.sort(rng.uniform(0, 2 * math.pi, vertices))
        poly = np.stack([10.0 * np.cos(angles), 10.0 * np.sin(angles)], axis=1)
        centers = (np.arange(side) + 0.5 - side / 2.0) * (30.0 / side)
        px = np.broadcast_to(centers[None, :], (side, side)).reshape(-1).copy()
        py = np.broadcast_to(centers[:, None], (side, side)).reshape(-1).copy()

        variants = {"numpy": kernels.polygon_mask_np}
        if HAVE_NUMBA:
            kernels.polygon_mask_nb(px, py, poly)  # warm the JIT
            variants["numba"] = kernels.polygon_mask_nb

        timings = {}
        for name, fn in variants.items():
            timings[name] = time_call(lambda: fn(px, py, poly), repeats)
        rows.append((label, timings))
    return rows


def print_rows(rows):
    for label, timings in rows:
        parts = [f"{name} {seconds * 1e3:8.2f} ms" for name, seconds in
                 timings.items()]
        print(f"{label:<22} " + "  ".join(parts))


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    if not HAVE_NUMBA:
        print("numba not importable: timing the numpy fallback only")
    print(f"repeats per case: {args.repeats} (best shown)\n")
    print_rows(bench_conv(args.repeats))
    print()
    print_rows(bench_raster(args.repeats))


if __name__ == "__main__":
    main()
