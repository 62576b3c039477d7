import re

_CRITERION_RESULTS = {}


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    m = re.search(r"test_criterion_(\d+)", report.nodeid)
    if m:
        _CRITERION_RESULTS[int(m.group(1))] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _CRITERION_RESULTS:
        return
    lines = ["", "acceptance criteria:"]
    for num in sorted(_CRITERION_RESULTS):
        outcome = _CRITERION_RESULTS[num]
        tag = "PASS" if outcome == "passed" else outcome.upper()
        lines.append(f"  [{tag}] criterion {num}")
    for line in lines:
        terminalreporter.write_line(line)
