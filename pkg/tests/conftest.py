import numpy as np
import pytest

from swrw.graph import build_graph, from_arrays, is_connected


def random_connected_graph(rng, n, extra=None, weighted=False, loops=False):
    """Random spanning tree plus ``extra`` random edges; optional weights and self-loops."""
    edges = {(min(i, p), max(i, p)) for i, p in
             ((i, int(rng.integers(i))) for i in range(1, n))}
    extra = n if extra is None else extra
    extra = min(extra, n * (n - 1) // 2 - len(edges))
    while extra > 0:
        a, b = rng.integers(n, size=2)
        if a != b and (min(a, b), max(a, b)) not in edges:
            edges.add((int(min(a, b)), int(max(a, b))))
            extra -= 1
    if loops:
        edges |= {(v, v) for v in range(n)}
    ends = np.array(sorted(edges))
    w = rng.uniform(0.1, 5.0, len(ends)) if weighted else None
    g = from_arrays(ends, w, num_nodes=n)
    assert is_connected(g)
    return g


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def path3():
    return build_graph([(0, 1), (1, 2)])


@pytest.fixture
def triangle():
    return build_graph([(0, 1), (1, 2), (0, 2)])
