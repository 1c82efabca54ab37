import numpy as np
import pytest

from chbs.domain import build_unit_square


@pytest.fixture(scope="session")
def domain_cache():
    cache = {}

    def get(n):
        if n not in cache:
            cache[n] = build_unit_square(n)
        return cache[n]

    return get


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(20240817))
