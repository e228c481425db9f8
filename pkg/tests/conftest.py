import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(0xC0FFEE)


def random_keys(rng, n, hi=1 << 62):
    return rng.integers(0, hi, n, dtype=np.uint64)


def random_single_path(rng, n):
    """Successor array of a random single path over ids 1..n."""
    order = rng.permutation(n) + 1
    succ = np.zeros(n, dtype=np.uint64)
    for i in range(n - 1):
        succ[order[i] - 1] = order[i + 1]
    return succ, order


def random_tree_edges(rng, n):
    """Both orientations of a random labeled tree on vertices 1..n."""
    parents = [int(rng.integers(0, i)) for i in range(1, n)]
    und = np.array([[p + 1, i + 2] for i, p in enumerate(parents)],
                   dtype=np.uint64)
    from oblifork import undirected_to_edgelist
    return undirected_to_edgelist(und)
