import re

_CRITERION_RESULTS = {}
_CRITERION_PAT = re.compile(r"test_criterion_(\d+)_(\w+)")


def pytest_runtest_logreport(report):
    m = _CRITERION_PAT.search(report.nodeid)
    if m and report.when == "call":
        num, name = int(m.group(1)), m.group(2)
        _CRITERION_RESULTS[num] = (name, report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERION_RESULTS:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for num in sorted(_CRITERION_RESULTS):
        name, outcome = _CRITERION_RESULTS[num]
        status = "PASS" if outcome == "passed" else outcome.upper()
        terminalreporter.write_line(
            f"criterion {num:2d} [{status}] {name.replace('_', ' ')}"
        )
