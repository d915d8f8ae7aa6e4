import numpy as np
import pytest

from qpkam import FrequencyData


@pytest.fixture
def freq1():
    return FrequencyData((1.0,), np.sqrt(2.0))


@pytest.fixture
def freq2():
    return FrequencyData((1.0, np.sqrt(2.0)), np.sqrt(3.0) - 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20260824)
