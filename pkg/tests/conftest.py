import pytest

_LINES = []


@pytest.fixture
def acceptance_log():
    """Records one pass/fail line per acceptance criterion."""

    def record(number, name, passed, detail=""):
        _LINES.append((number, name, passed, detail))

    return record


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, passed, detail in sorted(_LINES):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] {number:>2}. {name}: {detail}")
