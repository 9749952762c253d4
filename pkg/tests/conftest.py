import numpy as np
import pytest

from sdg_gan.prng import Prng


@pytest.fixture
def rng():
    return Prng(12345)


@pytest.fixture
def np_rng():
    return np.random.default_rng(0)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")
    config._criteria = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    slot = item.config._criteria.setdefault(number, {"title": title, "ok": True, "notes": []})
    failed = report.failed or (report.when == "call" and report.skipped)
    if failed:
        slot["ok"] = False
    if report.when == "call":
        for key, value in item.user_properties:
            if key == "detail":
                slot["notes"].append(value)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    criteria = getattr(config, "_criteria", {})
    if not criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(criteria):
        slot = criteria[number]
        status = "PASS" if slot["ok"] else "FAIL"
        notes = "; ".join(slot["notes"])
        terminalreporter.write_line(f"{status} criterion {number}: {slot['title']}" + (f" ({notes})" if notes else ""))
