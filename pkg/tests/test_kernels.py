import os
import subprocess
import sys

import numpy as np
import pytest

from trajdiff import kernels
from trajdiff.kernels import _pykernels

try:
    from trajdiff.kernels import _ckernels
except ImportError:  # extension not built
    _ckernels = None

needs_ext = pytest.mark.skipif(_ckernels is None, reason="compiled kernels not built")


def test_backend_reported():
    assert kernels.BACKEND in ("cython", "python")
    if _ckernels is not None:
        assert kernels.BACKEND == "cython"


def test_env_forces_fallback():
    env = {**os.environ, "TRAJDIFF_PURE_PYTHON": "1"}
    out = subprocess.run([sys.executable, "-c", "from trajdiff import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


@needs_ext
def test_displacement_errors_agree():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(4, 7, 25, 2)), rng.normal(size=(4, 7, 25, 2))
    assert np.allclose(_ckernels.displacement_errors(a, b), _pykernels.displacement_errors(a, b), atol=1e-14)


@needs_ext
@pytest.mark.parametrize("exponent", [1.0, 2.0])
def test_pursuit_rollout_agrees(exponent):
    rng = np.random.default_rng(1)
    refs = np.cumsum(rng.normal(0.8, 0.6, size=(6, 25, 2)), axis=1)
    init = np.column_stack([rng.normal(size=(6, 2)) * 0.3, rng.uniform(-np.pi, np.pi, 6)])
    pc, cc = _ckernels.pursuit_rollout(refs, init, 0.2, 1.5, 0.5, exponent)
    pp, cp = _pykernels.pursuit_rollout(refs, init, 0.2, 1.5, 0.5, exponent)
    assert np.allclose(pc, pp, atol=1e-10) and np.allclose(cc, cp, atol=1e-10)


@pytest.mark.parametrize("impl", ["python", "cython"])
def test_displacement_shape_mismatch(impl):
    mod = _pykernels if impl == "python" else _ckernels
    if mod is None:
        pytest.skip("compiled kernels not built")
    with pytest.raises(ValueError):
        mod.displacement_errors(np.zeros((3, 2)), np.zeros((4, 2)))
