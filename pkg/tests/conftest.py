import logging

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from vradmm.data import make_problem, make_synthetic

settings.register_profile(
    "default", max_examples=60, deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture(autouse=True)
def _quiet_orientation_warning(caplog):
    # graph-guided A is tall by construction; the sigma_A notice is expected
    logging.getLogger("vradmm.linalg").setLevel(logging.ERROR)
    yield


@pytest.fixture(scope="session")
def small_problem():
    """n=30, d=6 graph-guided sigmoid problem."""
    X, y = make_synthetic(30, 6, seed=3)
    return make_problem(X, y, 1e-3, 1e-2)


@pytest.fixture(scope="session")
def bench_problem():
    """The n=200, d=20 synthetic benchmark."""
    X, y = make_synthetic(200, 20, seed=0)
    return make_problem(X, y, 1e-4, 1.2e-4)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one PASS/FAIL line per acceptance criterion, repeated in the terminal summary
_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture
def criterion(request):
    lines = request.config.stash[_ACCEPTANCE]

    def report(label: str, ok: bool, detail: str) -> bool:
        line = f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}"
        lines.append(line)
        print(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash[_ACCEPTANCE]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
