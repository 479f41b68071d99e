import numpy as np
import pytest

from stripfold.scenarios import Scenario


@pytest.fixture
def small_scenario():
    """Coarse default strip, cheap enough for unit tests."""
    return Scenario(nx=24, nz=2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = {}


def record_criterion(number, passed, text):
    """Store the verdict line of one acceptance criterion and echo it."""
    line = f"C{number} {'PASS' if passed else 'FAIL'}: {text}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
