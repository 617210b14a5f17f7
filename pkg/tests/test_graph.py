import itertools

import numpy as np
import pytest

from flowcsma import ConfigurationError, ConflictGraph, enumerate_schedules, is_feasible

from conftest import random_graph


def brute_force_masks(graph):
    """All independent sets by filtering every subset of links."""
    out = []
    for mask in range(1 << graph.num_links):
        subset = [k + 1 for k in range(graph.num_links) if mask >> k & 1]
        if is_feasible(graph, subset):
            out.append(mask)
    return out


def test_line3_has_five_schedules(line3):
    graph, schedules = line3
    assert len(schedules) == 5
    assert [schedules.links(i) for i in range(5)] == [(), (1,), (2,), (3,), (1, 3)]


def test_single_link_two_schedules(single):
    _, schedules = single
    assert schedules.masks == (0, 1)


def test_triangle_clique_only_singletons():
    graph = ConflictGraph(3, [(1, 2), (1, 3), (2, 3)])
    schedules = enumerate_schedules(graph)
    assert len(schedules) == 4
    assert all(bin(m).count("1") <= 1 for m in schedules.masks)


def test_matches_brute_force_on_random_graphs():
    rng = np.random.default_rng(42)
    for _ in range(60):
        graph = random_graph(rng, max_links=10)
        assert list(enumerate_schedules(graph).masks) == brute_force_masks(graph)


def test_enumeration_order_is_sorted(line3):
    _, schedules = line3
    assert list(schedules.masks) == sorted(schedules.masks)
    assert schedules.masks[0] == 0


def test_adding_conflicts_never_adds_schedules():
    rng = np.random.default_rng(3)
    for _ in range(30):
        graph = random_graph(rng, max_links=8)
        n_before = len(enumerate_schedules(graph))
        free = [
            (i, j)
            for i in range(1, graph.num_links + 1)
            for j in range(i + 1, graph.num_links + 1)
            if (i, j) not in graph.conflicts
        ]
        if not free:
            continue
        extra = free[int(rng.integers(len(free)))]
        denser = ConflictGraph(
            graph.num_links, set(graph.conflicts) | {extra}, graph.physical_rates
        )
        assert len(enumerate_schedules(denser)) <= n_before


def test_empty_and_singletons_always_present():
    rng = np.random.default_rng(7)
    for _ in range(20):
        graph = random_graph(rng)
        masks = set(enumerate_schedules(graph).masks)
        assert 0 in masks
        for k in range(graph.num_links):
            assert (1 << k) in masks


def test_is_feasible_examples(line3):
    graph, _ = line3
    assert is_feasible(graph, [1, 3])
    assert not is_feasible(graph, [1, 2])
    assert is_feasible(graph, [])


def test_is_feasible_rejects_unknown_link(line3):
    graph, _ = line3
    with pytest.raises(ValueError):
        is_feasible(graph, [4])


def test_graph_validation():
    with pytest.raises(ConfigurationError):
        ConflictGraph(33)  # beyond the bitmask bound
    with pytest.raises(ConfigurationError):
        ConflictGraph(0)
    with pytest.raises(ConfigurationError):
        ConflictGraph(2, [(1, 1)])
    with pytest.raises(ConfigurationError):
        ConflictGraph(2, [(1, 3)])
    with pytest.raises(ConfigurationError):
        ConflictGraph(2, physical_rates=(1.0, 0.0))
    with pytest.raises(ConfigurationError):
        ConflictGraph(2, physical_rates=(1.0,))


def test_conflicts_symmetric_normalized():
    graph = ConflictGraph(3, [(2, 1), (3, 2)])
    assert graph.conflicts == frozenset({(1, 2), (2, 3)})
    masks = graph.conflict_masks
    for k, l in itertools.combinations(range(3), 2):
        assert bool(masks[k] >> l & 1) == bool(masks[l] >> k & 1)
