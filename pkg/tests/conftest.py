import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

from voight.fixtures import HOLES, SHAPE, centered_mask, stripe_image  # noqa: E402
from voight.imageio import region_from_mask  # noqa: E402

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion")


def pytest_runtest_logreport(report):
    marker = getattr(report, "acceptance", None)
    if marker is None or (report.when != "call" and report.passed):
        return
    number, title = marker
    ok = report.passed and not hasattr(report, "wasxfail")
    if report.skipped and hasattr(report, "wasxfail"):
        ok = False
    prev = _ACCEPTANCE.get(number, (title, True))
    _ACCEPTANCE[number] = (title, prev[1] and ok)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("acceptance")
    if m is not None:
        rep.acceptance = (m.args[0], m.args[1])


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, ok = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {title}")


@pytest.fixture(scope="session")
def stripes():
    return stripe_image()


@pytest.fixture(scope="session")
def regions(stripes):
    return {name: region_from_mask(centered_mask(SHAPE, hole), stripes) for name, hole in HOLES.items()}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
