"""Shared test hooks: per-criterion pass/fail lines for the acceptance suite."""

import re

_acceptance_results: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance" not in report.nodeid or report.when != "call":
        return
    m = re.search(r"test_criterion_(\d+)\w*", report.nodeid)
    if m:
        key = m.group(0).split("::")[-1]
        outcome = report.outcome.upper()
        # a single failing parametrization marks the whole criterion
        if _acceptance_results.get(key) != "FAILED":
            _acceptance_results[key] = outcome


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _acceptance_results:
        return
    terminalreporter.section("acceptance criteria")
    def crit_num(name):
        m = re.search(r"test_criterion_(\d+)", name)
        return int(m.group(1)) if m else 0
    for name in sorted(_acceptance_results, key=crit_num):
        outcome = _acceptance_results[name]
        word = "PASS" if outcome == "PASSED" else outcome
        terminalreporter.write_line(f"criterion {crit_num(name):2d}: {word}  ({name})")
