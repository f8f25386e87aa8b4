"""Shared pytest hooks: the acceptance suite reports one verdict line per criterion."""

import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

CRITERIA = {
    1: "quadrature phase matches the closed-form split",
    2: "classical asymptotes converge at the predicted rates",
    3: "high-energy limit of the effective flow",
    4: "symbol-class bounds on the phase deviation",
    5: "phase-space reconstruction consistency",
    6: "wavefront shift law for the degree-one potential",
    7: "weighted smoothing for the degree-1.25 potential",
    8: "unitarity, energy and wave-map invariants",
    9: "degenerate and identity battery",
}

_verdicts: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion covered by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    n = int(marker.args[0])
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        _verdicts[n] = _verdicts.get(n, True) and rep.passed


def pytest_terminal_summary(terminalreporter):
    if not _verdicts:
        return
    tr = terminalreporter
    tr.write_sep("=", "acceptance criteria")
    for n in sorted(CRITERIA):
        if n not in _verdicts:
            continue
        tr.write_line(f"criterion {n}: {'PASS' if _verdicts[n] else 'FAIL'} ({CRITERIA[n]})")
