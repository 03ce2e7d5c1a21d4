"""Shared test plumbing: the acceptance reporter and its terminal summary."""

import pytest

_ACCEPTANCE_LINES: list = []


@pytest.fixture
def acceptance_report():
    """Record and print one pass/fail line per acceptance criterion."""

    def _report(criterion: int, label: str, ok: bool, detail: str = ""):
        status = "PASS" if ok else "FAIL"
        line = f"criterion {criterion} ({label}): {status}"
        if detail:
            line += f" [{detail}]"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return _report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
