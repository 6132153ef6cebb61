"""Shared pytest hooks.

The acceptance tests record one ``ACCEPTANCE <n> <description>: PASS|FAIL``
line per criterion.  Pytest captures stdout of passing tests, so the lines
are echoed in the terminal summary where a plain ``pytest -v`` run shows
them.
"""

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
