import numpy as np
import pytest

from khop.exponents.eta import eta
from khop.schemes import HopNetworkSpec
from khop.sources import dsbs_chain

ACCEPTANCE_LINES = []


def record_criterion(line):
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def chain_spec():
    return HopNetworkSpec(dsbs_chain([0.1, 0.1]), (0.5, 0.5))


@pytest.fixture(scope="session")
def chain_channels(chain_spec):
    return [eta(chain_spec.pair(l), 0.48).channel for l in (1, 2)]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
