import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=25)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def rand_sym(rng, n):
    M = rng.standard_normal((n, n))
    return 0.5 * (M + M.T)
