import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from augairl.expert import collect_demos
from augairl.sim import TrafficConfig

settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=200,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def traffic():
    return TrafficConfig()


@pytest.fixture(scope="session")
def small_demos():
    """A few expert episodes; enough to drive discriminator and BC code paths."""
    return collect_demos(8, seed=11)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def demos500():
    """Five hundred expert episodes for the imitation-quality measurements."""
    return collect_demos(500, seed=3)


def pytest_terminal_summary(terminalreporter):
    from _helpers import ACCEPTANCE

    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
