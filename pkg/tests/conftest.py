import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ucmpc.design import design_l1
from ucmpc.scenarios import load_scenario

settings.register_profile("ci", max_examples=30, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")

_CACHE = {}


def designed(name, overrides=None):
    """(scenario, report) cached for the whole session."""
    key = (name, repr(sorted((overrides or {}).items())))
    if key not in _CACHE:
        sc = load_scenario(name, overrides)
        _CACHE[key] = (sc, design_l1(sc.plant, sc.Kx, sc.bounds, sc.X, sc.U, sc.X0, sc.l1))
    return _CACHE[key]


@pytest.fixture(scope="session")
def f16():
    return designed("f16")


@pytest.fixture(scope="session")
def scalar():
    return designed("scalar")


@pytest.fixture
def rng():
    return np.random.default_rng(0)


# one line per acceptance criterion, echoed at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
