"""Kernel backend selection.

The hot numeric loops (conv2d forward/backward, polygon rasterization)
exist twice: a pure-numpy implementation and a numba ``@njit`` one. The
active paths are chosen once at import time from the ``PEDCROSS_BACKEND``
environment variable:

    PEDCROSS_BACKEND=auto    per-kernel fastest (default): numba for the
                             pixel-loop rasterizer, numpy (im2col + BLAS)
                             for convolutions; falls back to numpy
                             entirely when numba is not importable
    PEDCROSS_BACKEND=numba   force numba everywhere, raise if missing
    PEDCROSS_BACKEND=numpy   force the pure-numpy fallback everywhere

The split default comes from benchmarks/bench_kernels.py: convolution in
this architecture is GEMM-bound (channel widths up to 512), where BLAS
beats scalar loops several-fold, while the rasterizer's per-pixel
crossing tests vectorize poorly in numpy and run ~2x faster under numba.

Each configuration is deterministic run to run; conv paths may differ
from each other in the last ulp because reduction orders differ. The
rasterizer paths evaluate identical expressions and agree bit for bit.
"""

import os

_CHOICES = ("auto", "numba", "numpy")


def _numba_importable() -> bool:
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


HAVE_NUMBA = _numba_importable()


def _resolve() -> str:
    requested = os.environ.get("PEDCROSS_BACKEND", "auto").strip().lower()
    if requested not in _CHOICES:
        raise ValueError(
            f"PEDCROSS_BACKEND must be one of {_CHOICES}, got {requested!r}"
        )
    if requested == "numba" and not HAVE_NUMBA:
        raise ImportError("PEDCROSS_BACKEND=numba but numba is not importable")
    if not HAVE_NUMBA:
        return "numpy"
    return requested


BACKEND = _resolve()

CONV_USE_NUMBA = BACKEND == "numba"
RASTER_USE_NUMBA = BACKEND in ("auto", "numba") and HAVE_NUMBA
