import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from xbarsim.io import load_dataset, load_network

settings.register_profile(
    "repo", deadline=None, derandomize=True, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("repo")


@pytest.fixture(scope="session")
def digits_train():
    return load_dataset("fixture:digits-train")


@pytest.fixture(scope="session")
def digits_test():
    return load_dataset("fixture:digits-test")


@pytest.fixture(scope="session")
def calibration(digits_train):
    return digits_train.take(64).images


@pytest.fixture(scope="session")
def mlp():
    return load_network("fixture:mlp")


@pytest.fixture(scope="session")
def cnn():
    return load_network("fixture:cnn")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Record a pass/fail line for the acceptance report, then assert."""

    def check(number, title, passed, detail):
        ACCEPTANCE_LINES.append((number, f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {title}: {detail}"))
        assert passed, f"criterion {number} ({title}) failed: {detail}"

    return check


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
