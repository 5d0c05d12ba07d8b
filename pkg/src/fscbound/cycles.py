"""Elementary cycles of a pruned chain and cycle decomposition of walks."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import networkx as nx

from .channel import PrunedChain
from .errors import CycleLimitError

DEFAULT_MAX_CYCLES = 10**6


@dataclass(frozen=True)
class Cycle:
    """An elementary cycle ``s_0 -> s_1 -> ... -> s_{l-1} -> s_0``.

    ``states`` holds the ``l`` distinct states in canonical rotation; the
    closing edge back to ``states[0]`` is implicit.
    """

    states: tuple[str, ...]
    indices: tuple[int, ...]
    length: int
    avg_cost: float

    @property
    def edges(self) -> list[tuple[int, int]]:
        idx = self.indices
        return [(idx[k], idx[(k + 1) % self.length]) for k in range(self.length)]


@dataclass(frozen=True)
class WalkDecomposition:
    cycle_counts: dict[int, int]
    residual_path: tuple[str, ...]

    @property
    def residual_length(self) -> int:
        """Number of transitions on the residual path."""
        return max(len(self.residual_path) - 1, 0)


def _rotate(labels: Sequence[str]) -> int:
    return min(range(len(labels)), key=lambda k: labels[k])


def make_cycle(chain: PrunedChain, nodes: Sequence[int]) -> Cycle:
    labels = [chain.states[i] for i in nodes]
    r = _rotate(labels)
    nodes = tuple(nodes[r:]) + tuple(nodes[:r])
    total = sum(chain.cost[nodes[k], nodes[(k + 1) % len(nodes)]] for k in range(len(nodes)))
    return Cycle(
        states=tuple(chain.states[i] for i in nodes),
        indices=nodes,
        length=len(nodes),
        avg_cost=float(total) / len(nodes),
    )


def enumerate_cycles(chain: PrunedChain, max_cycles: int = DEFAULT_MAX_CYCLES) -> list[Cycle]:
    """All elementary cycles, canonically rotated and sorted by state labels.

    Uses Johnson's circuit enumeration; aborts once more than ``max_cycles``
    cycles have been found.
    """
    g = nx.DiGraph()
    g.add_nodes_from(range(chain.n_states))
    adj = chain.adjacency
    g.add_edges_from((i, j) for i in range(chain.n_states) for j in range(chain.n_states) if adj[i, j])
    found = []
    for nodes in nx.simple_cycles(g):
        found.append(make_cycle(chain, nodes))
        if len(found) > max_cycles:
            raise CycleLimitError(
                f"more than {max_cycles} elementary cycles; raise the cap to continue"
            )
    found.sort(key=lambda c: c.states)
    return found


def cycle_index(cycles: Sequence[Cycle]) -> dict[tuple[int, ...], int]:
    return {c.indices: i for i, c in enumerate(cycles)}


def decompose_walk(
    walk: Sequence[str | int],
    cycles: Sequence[Cycle],
    chain: PrunedChain,
) -> WalkDecomposition:
    """Split a walk into elementary-cycle visits plus a loop-free residual path.

    A stack of visited states is kept; when the walk returns to a state on the
    stack, the closed loop is popped and counted against the matching cycle.
    """
    idx = [chain.index(s) for s in walk]
    adj = chain.adjacency
    lookup = cycle_index(cycles)
    counts: Counter[int] = Counter()
    stack: list[int] = []
    pos: dict[int, int] = {}
    for n, s in enumerate(idx):
        if n > 0 and not adj[idx[n - 1], s]:
            raise ValueError(
                f"walk step {n} uses {chain.states[idx[n - 1]]}->{chain.states[s]}, which is not an edge"
            )
        if s in pos:
            start = pos[s]
            loop = stack[start:]
            labels = [chain.states[i] for i in loop]
            r = _rotate(labels)
            key = tuple(loop[r:] + loop[:r])
            if key not in lookup:
                raise ValueError(f"loop {labels} is not among the enumerated cycles")
            counts[lookup[key]] += 1
            for t in loop[1:]:
                del pos[t]
            del stack[start + 1 :]
        else:
            pos[s] = len(stack)
            stack.append(s)
    return WalkDecomposition(
        cycle_counts=dict(sorted(counts.items())),
        residual_path=tuple(chain.states[i] for i in stack),
    )


def gamma_min(cycles: Sequence[Cycle]) -> float:
    """Smallest average cycle cost; budgets below it are infeasible."""
    if not cycles:
        raise ValueError("empty cycle list")
    return min(c.avg_cost for c in cycles)
