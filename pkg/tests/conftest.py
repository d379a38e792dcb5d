import pytest

from glass_complexity.mde import spectral_density
from glass_complexity.params import ModelParams

_CACHE = {}


def measure_for(p, q, gamma):
    key = (p, q, gamma)
    if key not in _CACHE:
        _CACHE[key] = spectral_density(ModelParams(p, q, gamma))
    return _CACHE[key]


@pytest.fixture(scope="session")
def measure():
    return measure_for


@pytest.fixture(scope="session")
def m333():
    return measure_for(3, 3, 0.5)
