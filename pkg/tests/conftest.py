import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from npmixreg.fw_solver import FitConfig, fit_npmle
from npmixreg.model import Box
from npmixreg.simgen import Scenario, generate

settings.register_profile(
    "default", deadline=None, max_examples=50, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def sim1():
    """Sim-1 data (three lines, n=500, sigma=0.5) and its truth."""
    return generate(Scenario("three_lines", n=500, seed=0))


@pytest.fixture(scope="session")
def sim1_fit(sim1):
    data, truth = sim1
    return fit_npmle(data, truth.rf, 0.5, Box.cube(-10.0, 10.0, 2), FitConfig())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for num in sorted(results):
        tr.write_line(results[num])
    passed = sum(line.startswith("[PASS]") for line in results.values())
    tr.write_line(f"{passed}/{len(results)} criteria passed")
