import numpy as np
import pytest

from glad.core import Panel
from glad.graph import Graph


def make_panel(values, mask=None, labels=None, ids=None):
    values = np.asarray(values, dtype=float)
    values = np.atleast_2d(values)
    n, T = values.shape
    if mask is None:
        mask = ~np.isnan(values)
    ids = ids or [f"s{i}" for i in range(n)]
    return Panel(tuple(ids), np.arange(T), values, mask, labels)


def path_graph(n):
    return Graph(n, frozenset((i, i + 1) for i in range(n - 1)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_panel(rng):
    return make_panel(rng.normal(size=(4, 200)))


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(results):
        terminalreporter.write_line(results[k])
