import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from grovermesh.hardware import ImperfectionConfig, sample_hardware

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def device12():
    return sample_hardware(3, mode_count=12)


@pytest.fixture(scope="session")
def ideal_device():
    return sample_hardware(0, ImperfectionConfig.ideal(), mode_count=8)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_report():
    """Collects one PASS/FAIL line per acceptance criterion."""

    def report(name, passed, detail):
        line = f"{name}: {'PASS' if passed else 'FAIL'}  {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)

    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
