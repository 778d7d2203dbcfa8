"""Replays the acceptance scoreboard after the run summary.

The acceptance tests record one "criterion N (...)" line apiece as a test
property; default capture would swallow lines printed from inside a test,
so they are written here through the terminal reporter instead.
"""


def pytest_terminal_summary(terminalreporter):
    lines = set()
    for reports in terminalreporter.stats.values():
        for report in reports:
            for key, value in getattr(report, "user_properties", []):
                if key == "criterion":
                    lines.add(value)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
