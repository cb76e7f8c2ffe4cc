import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from seqcrowd.worker_sim import WorkerModel

# Property tests trade speed for coverage; per-example deadlines only add
# flakiness on a loaded machine.
settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def model():
    return WorkerModel()
