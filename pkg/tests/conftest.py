import numpy as np
import pytest

from fracbc.generators import SUPPORTED_PAIRS

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(params=SUPPORTED_PAIRS)
def pair(request):
    return request.param


@pytest.fixture(params=[1.2, 1.5, 1.9])
def alpha(request):
    return request.param


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
