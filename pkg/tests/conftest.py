import pytest

from lorentz_lab.rng import RngStreamSpec

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def rng():
    return RngStreamSpec(12345, 0)


@pytest.fixture
def acceptance_log():
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
