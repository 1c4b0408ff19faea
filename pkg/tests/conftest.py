import pytest

_LINES = {}


@pytest.fixture
def criterion(request):
    """Record the one-line result of an acceptance criterion."""

    def report(number, text):
        line = f"criterion {number}: {text}"
        _LINES[number] = line
        print(line)

    return report


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_LINES):
            terminalreporter.write_line(_LINES[number])
