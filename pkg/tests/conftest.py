import numpy as np
import pytest

from nzkl.kernels import TimeGrid
from nzkl.liouville import TlsModel
from nzkl.projectors import System

from helpers import TLS_DELTA, TLS_EPSILON


@pytest.fixture
def tls_model():
    return TlsModel(TLS_EPSILON, TLS_DELTA)


@pytest.fixture
def tls_system():
    return System.tls(TLS_EPSILON, TLS_DELTA)


@pytest.fixture
def grid_10():
    return TimeGrid.from_duration(1e-3, 10.0)


@pytest.fixture
def ket0():
    return np.array([[1.0, 0.0], [0.0, 0.0]], dtype=complex)
