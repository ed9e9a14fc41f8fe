import os
import sys

import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

_LINES = []


@pytest.fixture
def report_criterion():
    """Record a one-line verdict; all verdicts are printed after the run."""
    def record(number, ok, detail):
        _LINES.append((number, "PASS" if ok else "FAIL", detail))
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number, verdict, detail in sorted(_LINES):
        terminalreporter.write_line(f"criterion {number:>2}: {verdict}  {detail}")
