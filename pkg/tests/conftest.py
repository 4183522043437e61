import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("suite", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("suite")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_KEY = pytest.StashKey[dict]()


@pytest.fixture
def criterion(request):
    """Record a criterion verdict: ``criterion(n, passed, detail)``; prints one line per criterion.

    ``known`` names a documented shortfall. A failing criterion then still
    prints FAIL but is reported as xfail instead of an error.
    """
    store = request.config.stash.setdefault(ACCEPTANCE_KEY, {})

    def report(number: int, passed: bool, detail: str, known: str | None = None):
        line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        store[number] = line
        print(line)
        if not passed and known:
            pytest.xfail(f"{known}: {line}")
        assert passed, line

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(ACCEPTANCE_KEY, {})
    if store:
        terminalreporter.section("acceptance criteria")
        for n in sorted(store):
            terminalreporter.write_line(store[n])
