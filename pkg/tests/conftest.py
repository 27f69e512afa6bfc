import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ballstab.fem import cached_mesh

settings.register_profile("default", max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def disk_mesh():
    return cached_mesh(2, 0.02)


@pytest.fixture(scope="session")
def coarse_disk_mesh():
    return cached_mesh(2, 0.05)


@pytest.fixture(scope="session")
def coarse_ball_mesh():
    return cached_mesh(3, 0.15)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)



def pytest_terminal_summary(terminalreporter):
    import sys

    mod = next((m for name, m in list(sys.modules.items()) if name.endswith("test_acceptance")), None)
    lines = getattr(mod, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
