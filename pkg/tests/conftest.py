import numpy as np
import pytest

from sfcontact.graph_sampler import GraphSample


def graph_from(n, edges):
    return GraphSample.from_edges(n, edges)


@pytest.fixture
def k2():
    return graph_from(2, [(0, 1)])


@pytest.fixture
def p3():
    return graph_from(3, [(0, 1), (1, 2)])


@pytest.fixture
def star5():
    return graph_from(6, [(0, i) for i in range(1, 6)])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = []


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: long-running acceptance criteria")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
