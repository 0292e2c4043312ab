import re

import pytest

CRITERIA = {
    1: "Desk-scale gap distributions",
    2: "Batch and One-Choice gap distributions",
    3: "Gap growth in g",
    4: "Lower-bound shadows",
    5: "Exact-oracle identity",
    6: "Drop-inequality certification",
    7: "Enumeration equivalence",
    8: "Special-case collapses",
    9: "Determinism",
    10: "Constants ledger",
}

_outcomes: dict[int, list[str]] = {}


def pytest_runtest_logreport(report):
    m = re.search(r"test_criterion_(\d+)_", report.nodeid)
    if not m:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _outcomes.setdefault(int(m.group(1)), []).append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(CRITERIA):
        if k not in _outcomes:
            continue
        results = _outcomes[k]
        status = "PASS" if all(r == "passed" for r in results) else "FAIL"
        terminalreporter.write_line(f"criterion {k:2d} {CRITERIA[k]}: {status}")


@pytest.fixture
def rng():
    import numpy as np

    return np.random.default_rng(12345)
