import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_c2(rng, n, scale=1.0):
    return (rng.normal(size=(2, n)) + 1j * rng.normal(size=(2, n))) * scale
