import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ordertransit.dtmc import TransitionMatrix

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_tpm(rng: np.random.Generator, n: int = 10, alpha: float = 1.0, floor: float = 0.0) -> TransitionMatrix:
    """Dirichlet rows; with ``floor`` > 0 every entry is at least ``floor`` before renormalizing."""
    p = rng.dirichlet(np.full(n, alpha), size=n) + floor
    return TransitionMatrix(p / p.sum(axis=1, keepdims=True))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
