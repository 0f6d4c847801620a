import sys

import numpy as np
import pytest

from qldev.families import EquatorialQubitFamily, GaussianFockFamily


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def eq05():
    return EquatorialQubitFamily(0.5)


@pytest.fixture(scope="session")
def eq08():
    return EquatorialQubitFamily(0.8)


@pytest.fixture(scope="session")
def gauss1():
    return GaussianFockFamily(1.0, trunc_dim=60, theta_max=1.5)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[k])
