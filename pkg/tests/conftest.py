import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from carnot import engel, heisenberg

settings.register_profile(
    "carnot", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("carnot")


@pytest.fixture(scope="session")
def h1():
    return heisenberg()


@pytest.fixture(scope="session")
def eng():
    return engel()


@pytest.fixture(params=["h1", "engel"], scope="session")
def group(request):
    return heisenberg() if request.param == "h1" else engel()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
