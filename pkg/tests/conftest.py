import numpy as np
import pytest

from pxsym import kernels

# lines collected by test_acceptance and echoed in the terminal summary
ACCEPTANCE_LINES = []

BACKENDS = ["python"] + (["cython"] if kernels._c is not None else [])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)
