import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from resilient_formation.experiment import ScenarioConfig
from resilient_formation.formation import regular_polygon_spec
from resilient_formation.graph import build_complete

settings.register_profile("default", max_examples=100, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def k5():
    return build_complete(5)


@pytest.fixture
def pentagon():
    return regular_polygon_spec(5)


@pytest.fixture
def bench_cfg():
    return ScenarioConfig()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_log(request):
    """Collects ``(criterion, passed, detail)`` lines for the terminal summary."""
    return request.config.stash.setdefault(_ACCEPTANCE_KEY, [])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, ok, detail in sorted(lines):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {number:>2}. {name}: {detail}")
