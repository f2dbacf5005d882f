import numpy as np
import pytest

from gmdual import parse_instance, random_instance

# filled by the acceptance tests, printed after the run
CRITERIA_LINES = []


def pytest_terminal_summary(terminalreporter):
    if CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA_LINES):
            terminalreporter.write_line(line)


TINY = """p 2 2 4 1
a 0 0 0 1.0
a 1 0 1 2.0
a 2 1 0 3.0
a 3 1 1 4.0
e 0 3 -1.0
"""


@pytest.fixture
def tiny():
    return parse_instance(TINY)


@pytest.fixture
def tiny_text():
    return TINY


def make_random(seed, n=4, m=None, **kw):
    rng = np.random.default_rng(seed)
    return random_instance(rng, n, n if m is None else m, **kw)


def frustrated_triangle(weight=1.0):
    """Three nodes, disjoint binary label sets, cost ``weight`` whenever two
    neighbouring binary choices agree.  No labeling avoids every penalty, so
    the pairwise bound (0) is below the optimum (``weight``)."""
    from gmdual.instance import GraphMatchingInstance

    label_sets = [np.array([0, 1]), np.array([2, 3]), np.array([4, 5])]
    unary = [np.zeros(2) for _ in range(3)]
    eq = weight * np.eye(2)
    pairwise = {(0, 1): eq.copy(), (0, 2): eq.copy(), (1, 2): eq.copy()}
    return GraphMatchingInstance(label_sets, unary, pairwise, 6)
