"""Shared pytest plumbing: one summary line per acceptance criterion.

Tests named test_criterion_<n>_* contribute a "CRITERION <n>: PASS/FAIL"
line to the terminal summary; tests may attach a detail string via the
`criterion_detail` fixture."""

import re

import pytest

_LINES: dict[int, str] = {}
_DETAILS: dict[int, str] = {}


@pytest.fixture
def criterion_detail():
    def record(number: int, detail: str) -> None:
        _DETAILS[number] = detail

    return record


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    match = re.search(r"test_criterion_(\d+)", report.nodeid)
    if not match:
        return
    number = int(match.group(1))
    if report.passed:
        status = "PASS"
    elif report.skipped:
        status = "SKIP"
    else:
        status = "FAIL"
    detail = _DETAILS.get(number, "")
    line = f"CRITERION {number}: {status}"
    if detail:
        line += f" - {detail}"
    # A criterion may span several parametrized tests; FAIL wins.
    if number in _LINES and "FAIL" in _LINES[number]:
        return
    _LINES[number] = line


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _LINES:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(_LINES):
        terminalreporter.write_line(_LINES[number])
