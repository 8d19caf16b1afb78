import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from paramot.measures import make_measure

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def rand_measure(rng, n, dim=1):
    return make_measure(rng.random((n, dim)), rng.random(n) + 0.05)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
