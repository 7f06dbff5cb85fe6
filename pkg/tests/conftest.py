import pytest

_RESULTS: list[tuple[int, str]] = []


@pytest.fixture
def acceptance_report():
    """Record a passed acceptance criterion; the summary hook prints them."""

    def _report(number: int, name: str) -> None:
        _RESULTS.append((number, name))
        print(f"ACCEPTANCE CRITERION {number} ({name}): PASS")

    return _report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _RESULTS:
        terminalreporter.write_sep("=", "acceptance criteria")
        for number, name in sorted(set(_RESULTS)):
            terminalreporter.write_line(f"criterion {number:>2} PASS  {name}")
