import numpy as np
import pytest

from platoon_mpc.scenario_io import bundled_scenario
from platoon_mpc.sim import run_scenario
from platoon_mpc.validation import study_vehicles


@pytest.fixture(scope="session")
def study_scenario():
    return bundled_scenario("paper_study")


@pytest.fixture(scope="session")
def study_run(study_scenario):
    """Full 400 s closed-loop run and its wall time, shared by the slow tests."""
    import time

    t0 = time.perf_counter()
    tel = run_scenario(study_scenario)
    return tel, time.perf_counter() - t0


@pytest.fixture
def vehicles():
    return study_vehicles()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_REPORT_KEY = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_report(request):
    """Collects one ``criterion: PASS/FAIL`` line per acceptance criterion."""
    return request.config.stash.setdefault(_REPORT_KEY, [])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_REPORT_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
