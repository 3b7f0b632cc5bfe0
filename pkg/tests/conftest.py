import pytest

_RESULTS = {}


@pytest.fixture(scope="session")
def report():
    """Record ``(criterion, passed, detail)``; lines are printed in the terminal summary."""

    def record(number: int, title: str, passed: bool, detail: str):
        line = f"criterion {number:2d} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
        _RESULTS[number] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        terminalreporter.write_line(_RESULTS[number])
