import numpy as np
import pytest

from pedcross import kernels
from pedcross.backend import HAVE_NUMBA

needs_numba = pytest.mark.skipif(not HAVE_NUMBA, reason="numba not installed")


@needs_numba
class TestBackendEquivalence:
    def test_conv_forward_paths_agree(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            n, c, f = rng.integers(1, 4, size=3)
            k = int(rng.choice([1, 3]))
            s = int(rng.integers(1, 4))
            h, w = rng.integers(2, 12, size=2)
            x = rng.normal(size=(n, c, h, w))
            wt = rng.normal(size=(f, c, k, k))
            b = rng.normal(size=f)
            a = kernels.conv2d_forward_np(x, wt, b, s)
            bb = kernels.conv2d_forward_nb(x, wt, b, s)
            assert np.allclose(a, bb, rtol=1e-12, atol=1e-12)

    def test_conv_backward_paths_agree(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            n, c, f = rng.integers(1, 4, size=3)
            k = int(rng.choice([1, 3]))
            s = int(rng.integers(1, 4))
            h, w = rng.integers(2, 12, size=2)
            x = rng.normal(size=(n, c, h, w))
            wt = rng.normal(size=(f, c, k, k))
            dy = rng.normal(size=kernels.conv2d_forward_np(
                x, wt, np.zeros(f), s).shape)
            dx_a, dw_a, db_a = kernels.conv2d_backward_np(x, wt, s, dy)
            dx_b, dw_b, db_b = kernels.conv2d_backward_nb(x, wt, s, dy)
            assert np.allclose(dx_a, dx_b, rtol=1e-12, atol=1e-12)
            assert np.allclose(dw_a, dw_b, rtol=1e-12, atol=1e-12)
            assert np.allclose(db_a, db_b, rtol=1e-12, atol=1e-12)

    def test_polygon_mask_paths_bit_identical(self):
        rng = np.random.default_rng(2)
        for _ in range(30):
            poly = rng.uniform(-4, 4, size=(int(rng.integers(3, 9)), 2))
            px = rng.uniform(-5, 5, 200)
            py = rng.uniform(-5, 5, 200)
            a = kernels.polygon_mask_np(px, py, poly)
            b = kernels.polygon_mask_nb(px, py, poly)
            assert np.array_equal(a, b)


class TestDispatch:
    def test_active_backend_matches_env(self):
        from pedcross.backend import BACKEND, CONV_USE_NUMBA, RASTER_USE_NUMBA
        assert BACKEND in ("auto", "numba", "numpy")
        if BACKEND == "numpy":
            assert not CONV_USE_NUMBA and not RASTER_USE_NUMBA
        elif BACKEND == "numba":
            assert CONV_USE_NUMBA and RASTER_USE_NUMBA

    @needs_numba
    def test_auto_splits_conv_and_raster(self):
        import subprocess
        import sys
        code = (
            "import pedcross.backend as b; "
            "assert b.BACKEND == 'auto', b.BACKEND; "
            "assert not b.CONV_USE_NUMBA and b.RASTER_USE_NUMBA; "
            "import pedcross.kernels as k; "
            "assert k.conv2d_forward is k.conv2d_forward_np; "
            "assert k.polygon_mask is k.polygon_mask_nb; "
            "print('ok')"
        )
        out = subprocess.run(
            [sys.executable, "-c", code],
            env={"PATH": "/usr/bin:/bin"},
            capture_output=True, text=True)
        assert out.returncode == 0, out.stderr
        assert out.stdout.strip() == "ok"

    def test_numpy_fallback_selected_by_env_flag(self):
        import subprocess
        import sys
        code = (
            "import pedcross.backend as b; "
            "assert b.BACKEND == 'numpy', b.BACKEND; "
            "import pedcross.kernels as k; "
            "assert k.conv2d_forward is k.conv2d_forward_np; "
            "assert k.polygon_mask is k.polygon_mask_np; "
            "print('ok')"
        )
        out = subprocess.run(
            [sys.executable, "-c", code],
            env={"PEDCROSS_BACKEND": "numpy", "PATH": "/usr/bin:/bin"},
            capture_output=True, text=True)
        assert out.returncode == 0, out.stderr
        assert out.stdout.strip() == "ok"

    def test_invalid_backend_value_rejected(self):
        import subprocess
        import sys
        out = subprocess.run(
            [sys.executable, "-c", "import pedcross.backend"],
            env={"PEDCROSS_BACKEND": "gpu", "PATH": "/usr/bin:/bin"},
            capture_output=True, text=True)
        assert out.returncode != 0
        assert "PEDCROSS_BACKEND" in out.stderr
