import pytest

_RESULTS = []


@pytest.fixture
def verdict():
    """Record ``(criterion, ok, detail)``, print it, and return ``ok``."""

    def record(criterion, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'}  criterion {criterion}: {detail}"
        _RESULTS.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in _RESULTS:
            terminalreporter.write_line(line)
