import numpy as np
import pytest

from hkdmpc.config import load_robot

ACCEPTANCE_RESULTS: list[str] = []


@pytest.fixture(scope="session")
def mc():
    return load_robot("mini_cheetah")


@pytest.fixture(scope="session", params=["mini_cheetah", "a1", "laikago"])
def robot(request):
    return load_robot(request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)
