import numpy as np
import pytest

from setinv.svm import SvmModel

_CRITERIA: list = []


@pytest.fixture
def report_criterion():
    """Record a PASS/FAIL line for the end-of-session acceptance summary."""

    def record(number: int, passed: bool, detail: str) -> None:
        line = f"CRITERION {number}: {'PASS' if passed else 'FAIL'} {detail}"
        _CRITERIA.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)


@pytest.fixture
def unit_circle_model():
    """Single support vector at the origin whose zero set is the unit circle."""
    return SvmModel(np.zeros((1, 2)), [1.0], [1.0], -np.exp(-0.5), 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
