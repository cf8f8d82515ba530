import numpy as np
import pytest

from scanssc import kernels


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(params=kernels.available())
def kernel_backend(request):
    """Run a test once per available kernel backend."""
    kernels.set_backend(request.param)
    yield request.param
    kernels.set_backend("auto")
