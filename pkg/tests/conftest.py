import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mildspde.problems import build_example1
from mildspde.spectral import SpectralOperator

settings.register_profile("repo", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


@pytest.fixture(scope="session")
def example1():
    return build_example1()


@pytest.fixture
def op3():
    return SpectralOperator(np.array([1.0, 4.0, 9.0]), ("a", "b", "c"))


def op_from(lams):
    lams = np.sort(np.asarray(lams, dtype=float))
    return SpectralOperator(lams, tuple(str(i) for i in range(lams.size)))
