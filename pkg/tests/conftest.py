import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(autouse=True)
def _quiet_nonconvergence():
    from degenhom.solver import NonConvergence

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonConvergence)
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_REPORT = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_REPORT] = {}


@pytest.fixture(scope="session")
def acceptance_report(pytestconfig):
    """``report(label, ok, detail)`` records one acceptance line."""
    store = pytestconfig.stash[_REPORT]

    def report(label, ok, detail=""):
        store[label] = (bool(ok), detail)
        print(f"{label} {'PASS' if ok else 'FAIL'} {detail}")

    return report


def pytest_terminal_summary(terminalreporter, config):
    store = config.stash.get(_REPORT, {})
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(store, key=lambda s: int(s[2:])):
        ok, detail = store[label]
        terminalreporter.write_line(f"{label}: {'PASS' if ok else 'FAIL'}  {detail}")
