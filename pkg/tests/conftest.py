from __future__ import annotations

import pytest

_REPORT: list[str] = []


@pytest.fixture(scope="session")
def report():
    """Collects one summary line per acceptance criterion."""
    def add(line: str) -> None:
        print(line)
        _REPORT.append(line)
    return add


def pytest_terminal_summary(terminalreporter):
    if _REPORT:
        terminalreporter.section("acceptance criteria")
        for line in _REPORT:
            terminalreporter.write_line(line)
