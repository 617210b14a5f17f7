import numpy as np
import pytest

from flowcsma import ConflictGraph, TrafficProfile, enumerate_schedules


@pytest.fixture(scope="session")
def line3():
    graph = ConflictGraph(3, [(1, 2), (2, 3)])
    return graph, enumerate_schedules(graph)


@pytest.fixture(scope="session")
def single():
    graph = ConflictGraph(1)
    return graph, enumerate_schedules(graph)


def random_graph(rng: np.random.Generator, max_links: int = 8) -> ConflictGraph:
    k = int(rng.integers(1, max_links + 1))
    pairs = [(i, j) for i in range(1, k + 1) for j in range(i + 1, k + 1)]
    conflicts = [p for p in pairs if rng.random() < 0.4]
    rates = rng.uniform(0.5, 2.0, size=k)
    return ConflictGraph(k, conflicts, rates)


def random_traffic(rng: np.random.Generator, k: int) -> TrafficProfile:
    lam = rng.uniform(0.05, 1.0, size=k)
    sigma = rng.uniform(0.2, 2.0, size=k)
    return TrafficProfile(tuple(lam), tuple(sigma))
