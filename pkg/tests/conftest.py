"""Shared pytest wiring.

The acceptance tests register one verdict line each; printing them from
inside a test would be swallowed by output capture, so they surface
here as a terminal-summary section instead.
"""


def pytest_configure(config):
    config._criterion_lines = {}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_criterion_lines", {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for key in sorted(lines):
            terminalreporter.write_line(lines[key])
