import math
import os
import subprocess
import sys

import numpy as np
import pytest

from gimbal import kernels


@pytest.fixture
def restore_backend():
    before = kernels.active_backend()
    yield
    kernels.set_backend(before)


def random_neighborhood(rng, n):
    east = rng.normal(0, 3000, n)
    north = rng.normal(0, 3000, n)
    if rng.random() < 0.5:
        east[0] = 0.0
        north[0] = 0.0
    dist = np.hypot(east, north)
    z = dist / 3000.0
    y = rng.normal(0, 1, n)
    return east, north, dist, z, y


@pytest.mark.skipif(not kernels.HAS_NUMBA, reason="numba not installed")
def test_weight_map_paths_agree(restore_backend):
    rng = np.random.default_rng(60)
    for trial in range(100):
        n = int(rng.integers(2, 50))
        east, north, dist, z, y = random_neighborhood(rng, n)
        flags = (int(rng.random() < 0.8), int(rng.random() < 0.8), int(rng.random() < 0.8))
        args = (east, north, dist, z, y, 3000.0, 1e-3, 1e-8, 1e-8, 50.0,
                15.0, 4.0, *flags)
        kernels.set_backend("numpy")
        a = kernels.weight_map(*args)
        kernels.set_backend("numba")
        b = kernels.weight_map(*args)
        # scalars
        for i in range(14):
            if isinstance(a[i], float) and math.isnan(a[i]):
                assert math.isnan(b[i])
            elif isinstance(a[i], (bool, int)) or i in (12, 13):
                assert a[i] == b[i], (trial, i)
            else:
                assert abs(a[i] - b[i]) <= 1e-12 * max(1.0, abs(a[i])), (trial, i)
        assert np.allclose(a[14], b[14], rtol=0, atol=1e-12)


@pytest.mark.skipif(not kernels.HAS_NUMBA, reason="numba not installed")
def test_haversine_paths_agree(restore_backend):
    rng = np.random.default_rng(61)
    lats = rng.uniform(-60, 60, 300)
    lons = rng.uniform(-179, 179, 300)
    kernels.set_backend("numpy")
    a = kernels.haversine_row(lats, lons, 35.0, 135.0)
    kernels.set_backend("numba")
    b = kernels.haversine_row(lats, lons, 35.0, 135.0)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-6)


def test_set_backend_rejects_unknown():
    with pytest.raises(ValueError):
        kernels.set_backend("fortran")


def test_env_flag_selects_numpy_fallback():
    code = (
        "import gimbal.kernels as k; "
        "assert k.active_backend() == 'numpy', k.active_backend(); "
        "print('ok')"
    )
    env = dict(os.environ, GIMBAL_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env,
                         capture_output=True, text=True)
    assert out.returncode == 0, out.stderr
    assert out.stdout.strip() == "ok"


@pytest.mark.skipif(not kernels.HAS_NUMBA, reason="numba not installed")
def test_default_backend_is_numba_without_flag():
    env = {k: v for k, v in os.environ.items() if k != "GIMBAL_DISABLE_NUMBA"}
    code = "import gimbal.kernels as k; print(k.active_backend())"
    out = subprocess.run([sys.executable, "-c", code], env=env,
                         capture_output=True, text=True)
    assert out.stdout.strip() == "numba"
