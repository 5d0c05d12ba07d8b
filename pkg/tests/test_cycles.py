import numpy as np
import pytest

from conftest import random_channel
from fscbound.channel import ChannelSpec, prune
from fscbound.cycles import decompose_walk, enumerate_cycles, gamma_min, make_cycle
from fscbound.errors import CycleLimitError


def brute_force_cycles(adj: np.ndarray) -> set[tuple[int, ...]]:
    """Every simple cycle via DFS over simple paths, keyed by its node tuple
    rotated to start at the smallest index."""
    n = adj.shape[0]
    found = set()

    def dfs(start, path, seen):
        u = path[-1]
        for v in range(n):
            if not adj[u, v]:
                continue
            if v == start:
                k = path.index(min(path))
                found.add(tuple(path[k:] + path[:k]))
            elif v not in seen:
                dfs(start, path + [v], seen | {v})

    for s in range(n):
        dfs(s, [s], {s})
    return found


def ring_with_loops():
    states = ("a", "b", "c")
    tr = {("a", "f"): "b", ("b", "f"): "c", ("c", "f"): "a",
          ("a", "s"): "a", ("b", "s"): "b", ("c", "s"): "c"}
    return prune(ChannelSpec(states, ("f", "s"), ("0",), tr, {k: 1.0 for k in tr}, np.ones((3, 1)), "a"))


def test_two_state_cycles(chain_factory):
    cycles = enumerate_cycles(chain_factory(0.1))
    assert [c.states for c in cycles] == [("s1",), ("s1", "s2")]
    assert [c.length for c in cycles] == [1, 2]
    assert [c.avg_cost for c in cycles] == [2.0, 3.5]
    assert gamma_min(cycles) == 2.0


def test_single_self_loop():
    ch = ChannelSpec(("s",), ("x",), ("0",), {("s", "x"): "s"}, {("s", "x"): 1.0}, np.ones((1, 1)), "s")
    cycles = enumerate_cycles(prune(ch))
    assert len(cycles) == 1 and cycles[0].length == 1


def test_ring_with_self_loops():
    cycles = enumerate_cycles(ring_with_loops())
    assert sorted(c.length for c in cycles) == [1, 1, 1, 3]
    assert ("a", "b", "c") in [c.states for c in cycles]


def test_cycle_cap():
    with pytest.raises(CycleLimitError):
        enumerate_cycles(ring_with_loops(), max_cycles=3)


def test_canonical_rotation_and_order():
    chain = ring_with_loops()
    c = make_cycle(chain, [2, 0, 1])
    assert c.states == ("a", "b", "c")
    cycles = enumerate_cycles(chain)
    assert [c.states for c in cycles] == sorted(c.states for c in cycles)


def test_gamma_min_lists():
    from dataclasses import replace

    c = make_cycle(ring_with_loops(), [0])
    assert gamma_min([replace(c, avg_cost=v) for v in (5.0, 1.5, 3.0)]) == 1.5
    assert gamma_min([replace(c, avg_cost=2.5)] * 3) == 2.5


def test_matches_brute_force_on_random_graphs():
    rng = np.random.default_rng(5)
    for _ in range(100):
        chain = prune(random_channel(rng, int(rng.integers(1, 7))))
        cycles = enumerate_cycles(chain)
        oracle = brute_force_cycles(chain.adjacency)
        got = set()
        for c in cycles:
            k = c.indices.index(min(c.indices))
            got.add(c.indices[k:] + c.indices[:k])
        assert got == oracle
        assert len(cycles) == len(oracle)


def test_cycle_invariants():
    rng = np.random.default_rng(8)
    chain = prune(random_channel(rng, 5, edge_prob=0.6))
    for c in enumerate_cycles(chain):
        assert len(set(c.indices)) == c.length
        assert all(chain.adjacency[i, j] for i, j in c.edges)
        assert c.avg_cost == pytest.approx(sum(chain.cost[i, j] for i, j in c.edges) / c.length)


def test_decompose_example_walks(chain_factory):
    chain = chain_factory(0.1)
    cycles = enumerate_cycles(chain)
    d = decompose_walk(["s1", "s1", "s2", "s1", "s2"], cycles, chain)
    assert d.cycle_counts == {0: 1, 1: 1}
    assert d.residual_path == ("s1", "s2")
    d = decompose_walk(["s1", "s1", "s1", "s1", "s2", "s1"], cycles, chain)
    assert d.cycle_counts == {0: 3, 1: 1}
    assert d.residual_length == 0
    d = decompose_walk(["s1", "s1"], cycles, chain)
    assert d.cycle_counts == {0: 1} and d.residual_length == 0


def test_decompose_rejects_non_edge(chain_factory):
    chain = chain_factory(0.1)
    with pytest.raises(ValueError, match="not an edge"):
        decompose_walk(["s1", "s2", "s2"], enumerate_cycles(chain), chain)


def _random_walk(rng, chain, n):
    s = chain.initial_index
    walk = [s]
    for _ in range(n):
        s = int(rng.choice(np.nonzero(chain.adjacency[s])[0]))
        walk.append(s)
    return walk


def test_decomposition_reconstructs_length_and_cost():
    rng = np.random.default_rng(21)
    for _ in range(60):
        chain = prune(random_channel(rng, int(rng.integers(1, 6)), integer_costs=True))
        cycles = enumerate_cycles(chain)
        N = int(rng.integers(1, 2000))
        walk = _random_walk(rng, chain, N)
        d = decompose_walk(walk, cycles, chain)
        assert sum(n * cycles[i].length for i, n in d.cycle_counts.items()) + d.residual_length == N
        assert d.residual_length < chain.n_states
        walk_cost = sum(chain.cost[a, b] for a, b in zip(walk[:-1], walk[1:]))
        res = [chain.index(s) for s in d.residual_path]
        res_cost = sum(chain.cost[a, b] for a, b in zip(res[:-1], res[1:]))
        cyc_cost = sum(n * cycles[i].length * cycles[i].avg_cost for i, n in d.cycle_counts.items())
        assert cyc_cost + res_cost == walk_cost
