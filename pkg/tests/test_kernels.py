import os
import subprocess
import sys

import numpy as np
import pytest

from glass_complexity import _kernels
from glass_complexity._accel import NUMBA_ENABLED
from glass_complexity.mde import covering_radius, default_grid
from glass_complexity.params import ModelParams

BACKENDS = ["numba", "numpy"]


@pytest.mark.parametrize("mode", ["continuation", "cold"])
def test_sweep_backends_agree(mode):
    params = ModelParams(2, 3, 0.4)
    xs = default_grid(params, n=301)
    args = (xs, 1e-5, params.variance_profile, 1e-12, 200, covering_radius(params))
    a = _kernels.sweep(*args, mode=mode, backend="numba")
    b = _kernels.sweep(*args, mode=mode, backend="numpy")
    assert np.max(np.abs(a[0] - b[0])) <= 1e-12
    assert np.max(np.abs(a[1] - b[1])) <= 1e-12
    assert np.all(a[4] == _kernels.STATUS_OK) and np.all(b[4] == _kernels.STATUS_OK)


def test_sweep_rejects_unknown_mode():
    with pytest.raises(ValueError):
        _kernels.sweep(np.zeros(3), 1e-3, (1, 1, 1, 1), 1e-12, 10, 3.0, mode="sideways")


def test_qgrid_backends_agree():
    rng = np.random.default_rng(0)
    h, k = rng.standard_normal((40, 50)), rng.standard_normal((40, 50))
    es = np.linspace(-2, 2, 9)
    a = _kernels.qgrid_max(h, k, es, backend="numba")
    b = _kernels.qgrid_max(h, k, es, backend="numpy")
    np.testing.assert_array_equal(a[1], b[1])
    np.testing.assert_allclose(a[0], b[0], atol=1e-15)
    # brute force
    ref = [np.max(h + e * e * k) for e in es]
    np.testing.assert_allclose(a[0], ref, atol=1e-15)


def test_log_potential_grid_backends_agree(m333):
    es = np.linspace(-3, 3, 31)
    a = _kernels.log_potential_grid(m333.grid, m333.density, es, backend="numba")
    b = _kernels.log_potential_grid(m333.grid, m333.density, es, backend="numpy")
    assert np.max(np.abs(a - b)) <= 1e-12


def test_log_potential_grid_exact_for_linear_density():
    # a single hat function: exact integral of (1 - |x|) log|x - E| on [-1, 1]
    x = np.array([-1.0, 0.0, 1.0])
    d = np.array([0.0, 1.0, 0.0])
    from scipy.integrate import quad
    for E in (0.0, 0.3, 2.0):
        ref = quad(lambda u: (1 - abs(u)) * np.log(abs(u - E)), -1, 1, points=[E, 0.0] if abs(E) < 1 else [0.0],
                   limit=200)[0]
        for b in BACKENDS:
            assert _kernels.log_potential_grid(x, d, np.array([E]), backend=b)[0] == pytest.approx(ref, abs=1e-10)


def test_numba_disabled_by_env():
    code = ("import numpy as np\n"
            "from glass_complexity._accel import NUMBA_ENABLED\n"
            "from glass_complexity.params import ModelParams\n"
            "from glass_complexity.mde import spectral_density\n"
            "m = spectral_density(ModelParams(3, 3, 0.5))\n"
            "print(NUMBA_ENABLED, repr(m.edge))\n")
    env = dict(os.environ, GLASS_COMPLEXITY_NO_NUMBA="1")
    proc = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, env=env, timeout=600)
    assert proc.returncode == 0, proc.stderr
    flag, edge = proc.stdout.split()
    assert flag == "False"
    assert abs(float(edge) - 2 * np.sqrt(5 / 6)) < 1e-6


def test_default_backend_follows_flag():
    assert isinstance(NUMBA_ENABLED, bool)
