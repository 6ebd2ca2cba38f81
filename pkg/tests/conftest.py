import os
import sys

sys.path.insert(0, os.path.dirname(__file__))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for cr in mod.CRITERIA:
        if cr.number in mod.RESULTS:
            terminalreporter.write_line(mod.summary_line(cr))
