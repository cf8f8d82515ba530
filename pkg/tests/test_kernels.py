import os
import subprocess
import sys

import numpy as np
import pytest

from scanssc import kernels
from scanssc.kernels import _pykernels


def test_backend_selection():
    assert "python" in kernels.available()
    assert kernels.set_backend("python") == "python"
    assert kernels.backend() == "python"
    kernels.set_backend("auto")
    with pytest.raises(ImportError):
        kernels.set_backend("fortran")


def test_env_forces_fallback():
    env = dict(os.environ, SCANSSC_KERNELS="python")
    out = subprocess.run([sys.executable, "-c", "from scanssc import kernels; print(kernels.backend())"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


@pytest.mark.skipif("cython" not in kernels.available(), reason="compiled kernels not built")
def test_backends_agree(rng):
    from scanssc.kernels import _ckernels

    xp = rng.normal(size=(6, 5, 4, 3))
    w = rng.normal(size=(3, 3, 3, 3, 4))
    out = _ckernels.conv3d_valid(xp, w)
    np.testing.assert_allclose(out, _pykernels.conv3d_valid(xp, w), atol=1e-12)
    g = rng.normal(size=out.shape)
    np.testing.assert_allclose(_ckernels.conv3d_valid_grad_input(g, w, xp.shape),
                               _pykernels.conv3d_valid_grad_input(g, w, xp.shape), atol=1e-12)
    np.testing.assert_allclose(_ckernels.conv3d_valid_grad_weight(xp, g, 3),
                               _pykernels.conv3d_valid_grad_weight(xp, g, 3), atol=1e-12)
    pred, gt = rng.integers(0, 5, (5, 4, 3)), rng.integers(0, 5, (5, 4, 3))
    gt[0, 0, 0] = 255
    for axis in range(3):
        assert np.array_equal(_ckernels.axis_confusion(pred, gt, axis, 5, 255),
                              _pykernels.axis_confusion(pred, gt, axis, 5, 255))


def test_conv_brute_force(rng, kernel_backend):
    xp = rng.normal(size=(4, 4, 3, 2))
    w = rng.normal(size=(3, 3, 3, 2, 3))
    out = kernels.conv3d_valid(xp, w)
    want = np.zeros((2, 2, 1, 3))
    for x, y, z in np.ndindex(2, 2, 1):
        want[x, y, z] = np.einsum("abci,abcio->o", xp[x:x + 3, y:y + 3, z:z + 3], w)
    np.testing.assert_allclose(out, want, atol=1e-12)


def test_confusion_brute_force(rng, kernel_backend):
    pred, gt = rng.integers(0, 3, (3, 2, 2)), rng.integers(0, 3, (3, 2, 2))
    gt[1, 1, 1] = 255
    cm = kernels.axis_confusion(pred, gt, 0, 3, 255)
    want = np.zeros((3, 3, 3), dtype=np.int64)
    for idx in np.ndindex(gt.shape):
        if gt[idx] != 255:
            want[idx[0], gt[idx], pred[idx]] += 1
    assert np.array_equal(cm, want)


def test_empty_shapes(kernel_backend):
    assert kernels.conv3d_valid(np.zeros((2, 2, 2, 1)), np.zeros((3, 3, 3, 1, 2))).shape == (0, 0, 0, 2)
