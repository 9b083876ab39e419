import time

import pytest

from dispfock.pipeline import DEFAULT_VOLTAGES, ExperimentPlan, run_pipeline

# (criterion id, passed, elapsed seconds, detail), filled by test_acceptance
ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def full_report():
    """The default 3 x 11 plan (n = 0, 1, 2 over 0..2 V), run once per session."""
    t0 = time.perf_counter()
    report = run_pipeline(ExperimentPlan(preparation_n=(0, 1, 2), v_k_list=DEFAULT_VOLTAGES))
    return report, time.perf_counter() - t0


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for cid, ok, elapsed, detail in sorted(ACCEPTANCE_LINES, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {cid:>2}: {'PASS' if ok else 'FAIL'} "
                                    f"({elapsed:.2f} s) {detail}")
