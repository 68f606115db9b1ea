import time

import pytest

from oectsim.config import load_config

# criterion label -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[str, tuple[bool, str]] = {}

PROPERTY_MODULES = (
    "test_device.py", "test_growth.py", "test_eis.py", "test_transient.py",
    "test_adapt.py", "test_cli.py", "test_config.py",
)
_session = {"start": None, "ran": 0, "failed": []}


@pytest.fixture(scope="session")
def cfg():
    return load_config()


@pytest.fixture(scope="session")
def device(cfg):
    return cfg.device


@pytest.fixture(scope="session")
def model(cfg):
    return cfg.growth


def pytest_sessionstart(session):
    _session["start"] = time.perf_counter()


def pytest_runtest_logreport(report):
    if not report.nodeid.split("::")[0].endswith(PROPERTY_MODULES):
        return
    if report.when == "call":
        _session["ran"] += 1
    if report.failed:
        _session["failed"].append(report.nodeid)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    lines = dict(ACCEPTANCE)
    # property suites are judged over the whole run, so they need every module collected
    if _session["ran"]:
        elapsed = time.perf_counter() - _session["start"]
        ok = not _session["failed"] and elapsed < 60.0
        lines["6 property suites"] = (
            ok,
            f"{_session['ran']} property tests, {len(_session['failed'])} failed, "
            f"session {elapsed:.1f} s (< 60 s)",
        )
    terminalreporter.section("acceptance criteria")
    for label in sorted(lines):
        ok, detail = lines[label]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {label}: {detail}")
