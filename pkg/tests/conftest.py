import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from tdho.frequency import builtin_profiles

settings.register_profile("tdho", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("tdho")


@pytest.fixture
def mathieu_slow():
    return builtin_profiles("mathieu", omega_bar=1.0, eta=0.5, alpha=0.5)


@pytest.fixture
def mathieu_resonant():
    return builtin_profiles("mathieu", omega_bar=1.0, eta=0.2, alpha=2.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
