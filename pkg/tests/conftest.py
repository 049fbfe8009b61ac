import sys

import numpy as np
import pytest

from ufgw import _kernels
from ufgw.graph import Graph


@pytest.fixture(params=sorted(_kernels.BACKENDS))
def backend(request, monkeypatch):
    """Run the test once per available Sinkhorn kernel backend."""
    monkeypatch.setattr(_kernels, "BACKEND", request.param)
    return request.param


def random_connected_graph(n, p, rng):
    """Erdos-Renyi graph plus a random spanning path, so no node is isolated."""
    order = rng.permutation(n)
    edges = [(int(a), int(b)) for a, b in zip(order[:-1], order[1:])]
    iu, ju = np.triu_indices(n, 1)
    keep = rng.random(iu.size) < p
    edges += list(zip(iu[keep].tolist(), ju[keep].tolist()))
    return Graph.from_edges(edges, n)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for k in sorted(results):
            terminalreporter.write_line(results[k])
