from __future__ import annotations

import time
from pathlib import Path

import pytest

from spaceutil import synthgen
from spaceutil.pipeline import run_e2e

ACCEPTANCE_TITLES = {
    1: "equation unit suite",
    2: "haar orthonormality and matrix oracle",
    3: "pca component selection",
    4: "cophenetic correlation",
    5: "calinski-harabasz selection",
    6: "chi-square and beta",
    7: "calibration efficacy",
    8: "rain detection",
    9: "end-to-end determinism",
    10: "ingest robustness",
    11: "heatmap conservation",
}

_outcomes: dict[int, list[bool]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    n = marker.args[0]
    if report.when == "call" or (report.when == "setup" and not report.passed):
        _outcomes.setdefault(n, []).append(report.passed)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n, title in ACCEPTANCE_TITLES.items():
        results = _outcomes.get(n)
        if not results:
            status = "NOT RUN"
        else:
            status = "PASS" if all(results) else "FAIL"
        terminalreporter.write_line(f"criterion {n:2d} {status:7s} {title}")


@pytest.fixture(scope="session")
def default_month(tmp_path_factory) -> tuple[Path, dict, float]:
    """One e2e run of the bundled default month: (run dir, report, wall seconds)."""
    out = tmp_path_factory.mktemp("default-month")
    t0 = time.perf_counter()
    report = run_e2e(synthgen.Scenario.from_dict({}), out)
    return out, report, time.perf_counter() - t0


@pytest.fixture
def small_scenario() -> dict:
    """Three nodes over two days; cheap enough for per-test generation."""
    return {"seed": 7, "days": 2, "nodes": 3, "start_date": "2016-08-01",
            "rain": {"events": [{"date": "2016-08-02", "start": "14:00", "duration_min": 60}]}}
