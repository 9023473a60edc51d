import os
import subprocess
import sys

import numpy as np
import pytest

from polytraverse import _kernels
from polytraverse.lp import _PIVOT_TOL

needs_numba = pytest.mark.skipif(not _kernels.HAVE_NUMBA, reason="numba not installed")


def lp_instances(seed, n=60):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        m, k = int(rng.integers(1, 12)), int(rng.integers(1, 8))
        A = rng.normal(size=(m, k))
        b = rng.normal(size=m)
        c = rng.normal(size=k)
        yield A, b, c


@needs_numba
def test_simplex_backends_agree():
    for A, b, c in lp_instances(0):
        args = (A, b, c, 50 * sum(A.shape) + 1000, _PIVOT_TOL, 1e-9)
        s1, z1, v1, i1 = _kernels.simplex_numba(*args)
        s2, z2, v2, i2 = _kernels.simplex_numpy(*args)
        assert s1 == s2 and i1 == i2
        np.testing.assert_allclose(z1, z2, rtol=0, atol=1e-12)
        if s1 == _kernels.OPTIMAL:
            assert v1 == pytest.approx(v2, abs=1e-12)


@needs_numba
def test_relu_backends_agree():
    rng = np.random.default_rng(1)
    for _ in range(20):
        H = rng.normal(size=(200, 5))
        W, b = rng.normal(size=(7, 5)), rng.normal(size=7)
        o1, b1 = _kernels.relu_layer_numba(H, W, b)
        o2, b2 = _kernels.relu_layer_numpy(H, W, b)
        np.testing.assert_allclose(o1, o2, atol=1e-12)
        pre = H @ W.T + b
        clear = np.abs(pre) > 1e-12
        np.testing.assert_array_equal(b1[clear], b2[clear])


def test_env_flag_selects_numpy_path():
    env = {**os.environ, "POLYTRAVERSE_DISABLE_JIT": "1"}
    out = subprocess.run([sys.executable, "-c", "import polytraverse as p; print(p.backend())"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"


@needs_numba
def test_default_backend_is_numba():
    env = {k: v for k, v in os.environ.items() if k != "POLYTRAVERSE_DISABLE_JIT"}
    out = subprocess.run([sys.executable, "-c", "import polytraverse as p; print(p.backend())"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numba"
