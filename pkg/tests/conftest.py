import pytest

from qdisc._accel import HAVE_NUMBA

from helpers import ACCEPTANCE_LINES

BACKENDS = ["numpy"] + (["numba"] if HAVE_NUMBA else [])


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for label, passed, detail in ACCEPTANCE_LINES:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {label}: {detail}")
