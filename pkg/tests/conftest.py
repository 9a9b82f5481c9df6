from __future__ import annotations

import re

_AC = re.compile(r"test_ac(\d+)_(\w+)")
_results: dict[int, tuple[str, str, float]] = {}


def pytest_runtest_logreport(report):
    m = _AC.search(report.nodeid)
    if not m or "test_acceptance" not in report.nodeid:
        return
    n = int(m.group(1))
    name = m.group(2).replace("_", " ")
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        outcome = "PASS" if report.outcome == "passed" else "FAIL"
        prev = _results.get(n)
        if prev is not None:  # parametrized criteria: any failing case fails the criterion
            outcome = "FAIL" if "FAIL" in (prev[1], outcome) else "PASS"
            _results[n] = (name, outcome, prev[2] + report.duration)
        else:
            _results[n] = (name, outcome, report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_results):
        name, outcome, secs = _results[n]
        terminalreporter.write_line(f"AC{n:<2} {outcome}  {name} ({secs:.2f}s)")
