"""Echo the acceptance verdict lines after capture is torn down."""

import sys


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    module = (sys.modules.get("test_acceptance")
              or sys.modules.get("tests.test_acceptance"))
    lines = getattr(module, "VERDICT_LINES", None) if module else None
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
