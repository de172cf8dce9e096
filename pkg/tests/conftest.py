import numpy as np
import pytest

from critwalk import use_backend
from critwalk._accel import HAVE_NUMBA
from critwalk.graphgen import Component

BACKENDS = ["numpy"] + (["numba"] if HAVE_NUMBA else [])

ACCEPTANCE_LINES = []


@pytest.fixture(params=BACKENDS)
def backend(request):
    with use_backend(request.param):
        yield request.param


def make_component(edges, vertices=None):
    return Component.from_label_edges(np.asarray(edges).reshape(-1, 2), vertices=vertices)


@pytest.fixture
def triangle():
    return make_component([(1, 2), (2, 3), (1, 3)])


@pytest.fixture
def path3():
    return make_component([(1, 2), (2, 3)])


def star_component(leaves):
    return make_component([(1, i + 2) for i in range(leaves)])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
