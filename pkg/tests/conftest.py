import re

_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    m = re.search(r"test_acceptance.*test_criterion_(\d+)", report.nodeid)
    if m:
        _ACCEPTANCE[int(m.group(1))] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        outcome = "PASS" if _ACCEPTANCE[number] == "passed" else "FAIL"
        terminalreporter.write_line("criterion %d: %s" % (number, outcome))
