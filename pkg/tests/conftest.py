import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from evsim.core import Frame  # noqa: E402

# Outcome of each acceptance criterion, filled in as the tests run.
_CRITERIA: dict[int, tuple[str, str]] = {}
# Measured values reported next to each criterion verdict.
NOTES: dict[int, str] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


def pytest_runtest_logreport(report):
    marker = getattr(report, "criterion", None)
    if marker is None:
        return
    n, title = marker
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _CRITERIA[n] = (title, "PASS" if report.outcome == "passed" else "FAIL")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    m = item.get_closest_marker("criterion")
    if m is not None:
        report.criterion = (m.args[0], m.args[1])


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, verdict = _CRITERIA[n]
        note = f" [{NOTES[n]}]" if n in NOTES else ""
        terminalreporter.write_line(f"criterion {n}: {verdict}  {title}{note}")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_frame(rng, w=8, h=8, t=0):
    return Frame(rng.integers(0, 256, (h, w), dtype=np.uint8), t)
