import numpy as np
import pytest

from swarmnet import build_swarm


@pytest.fixture(scope="session")
def swarm1():
    return build_swarm("swarm1")


@pytest.fixture(scope="session")
def swarm2():
    return build_swarm("swarm2")


def random_dag(rng: np.random.Generator, n: int, p: float = 0.5) -> np.ndarray:
    """Random simple directed graph; edges may form cycles (fine for layer math)."""
    adj = (rng.random((n, n)) < p).astype(np.int64)
    np.fill_diagonal(adj, 0)
    return adj
