import re

import numpy as np
import pytest

_CRITERION = re.compile(r"test_criterion_(\d+)_")
_results = {}


def pytest_runtest_logreport(report):
    m = _CRITERION.search(report.nodeid)
    if not m:
        return
    key = int(m.group(1))
    failed = report.failed or (report.when == "call" and report.skipped)
    if failed:
        _results[key] = False
    elif report.when == "call":
        _results.setdefault(key, True)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_results):
        terminalreporter.write_line(f"criterion {key}: {'PASS' if _results[key] else 'FAIL'}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
