import numpy as np
import pytest
from hypothesis import settings

from mmot.regmot import MotInstance

# fixed example streams so every run of the suite checks the same cases
settings.register_profile("repro", derandomize=True, deadline=None)
settings.load_profile("repro")


def random_instance(rng, n, m, floor=0.05, cost_scale=1.0):
    C = cost_scale * rng.random((n,) * m)
    r = rng.random((m, n)) + floor
    return MotInstance(C, r / r.sum(axis=1, keepdims=True))


def uniform_instance(n, m, cost=None):
    C = np.zeros((n,) * m) if cost is None else np.asarray(cost, dtype=float)
    return MotInstance(C, np.full((m, n), 1.0 / n))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
