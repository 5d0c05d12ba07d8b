from pathlib import Path

import networkx as nx
import numpy as np
import pytest

from fscbound.channel import ChannelSpec, bsc_emission, load_channel, prune, with_emission

ROOT = Path(__file__).resolve().parents[1]
TWO_STATE = ROOT / "channels" / "two_state.yaml"
GOLDEN = float(np.log2((1 + 5**0.5) / 2))


@pytest.fixture(scope="session")
def two_state():
    return load_channel(TWO_STATE)


def two_state_chain(p: float):
    """Pruned two-state chain (costs 2, 3, 4) seen through a BSC(p)."""
    return prune(with_emission(load_channel(TWO_STATE), bsc_emission(p)))


@pytest.fixture
def chain_factory():
    return two_state_chain


def random_channel(rng: np.random.Generator, n_states: int, n_outputs: int = 2,
                   edge_prob: float = 0.5, integer_costs: bool = False) -> ChannelSpec:
    """Random strongly connected channel, one action per edge."""
    while True:
        adj = rng.random((n_states, n_states)) < edge_prob
        g = nx.DiGraph([(i, j) for i in range(n_states) for j in range(n_states) if adj[i, j]])
        g.add_nodes_from(range(n_states))
        if adj.any(axis=1).all() and nx.is_strongly_connected(g):
            break
    states = tuple(f"s{i}" for i in range(n_states))
    transition, cost = {}, {}
    for i in range(n_states):
        for j in range(n_states):
            if adj[i, j]:
                key = (states[i], f"a{j}")
                transition[key] = states[j]
                cost[key] = float(rng.integers(0, 10)) if integer_costs else float(rng.uniform(0, 5))
    em = rng.dirichlet(np.ones(n_outputs), size=n_states)
    em /= em.sum(axis=1, keepdims=True)
    return ChannelSpec(
        states=states,
        actions=tuple(f"a{j}" for j in range(n_states)),
        outputs=tuple(str(y) for y in range(n_outputs)),
        transition=transition,
        cost=cost,
        emission=em,
        initial_state=states[0],
    )


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
