from __future__ import annotations

import re

import pytest

from qidkit.blackbox import TrueModel

TEST_D0 = (0.2, 0.0, 0.1)
TEST_CONTROLS = ((1.0, 0.9, 0.1), (0.2, 0.0, 0.9))
GRID = tuple(round(0.05 * k, 10) for k in range(1, 11))

_CRITERION = re.compile(r"test_criterion_(\d+[a-z]?)_")
_outcomes: dict[str, str] = {}


@pytest.fixture
def test_model() -> TrueModel:
    return TrueModel(TEST_D0, TEST_CONTROLS)


def pytest_runtest_logreport(report):
    m = _CRITERION.search(report.nodeid)
    if m is None or "test_acceptance" not in report.nodeid:
        return
    key = m.group(1)
    if report.when == "call" or report.outcome != "passed":
        prev = _outcomes.get(key, "PASS")
        ok = report.outcome == "passed" and prev == "PASS"
        _outcomes[key] = "PASS" if ok else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_outcomes, key=lambda k: (int(re.match(r"\d+", k).group()), k)):
        terminalreporter.write_line(f"criterion {key}: {_outcomes[key]}")
