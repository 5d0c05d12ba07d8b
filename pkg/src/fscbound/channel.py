"""Finite-state channel model: parsing, validation, pruning and chain statistics.

A channel is described by a deterministic state machine driven by the
transmitter's actions, per-action costs and a memoryless observation of the
state.  Everything downstream works on the *pruned* chain, where each ordered
pair of states keeps only its cheapest action.

Channel file format (YAML, JSON is accepted too since it is a YAML subset)::

    states: [s1, s2]
    actions: [x1, x2]
    outputs: ["0", "1"]
    initial_state: s1
    transitions:
      - {from: s1, action: x1, to: s1, cost: 2}
      - {from: s1, action: x2, to: s2, cost: 3}
      - {from: s2, action: x1, to: s1, cost: 4}
      - {from: s2, action: x2, to: s1, cost: 5}
    emission:
      s1: [0.9, 0.1]
      s2: [0.1, 0.9]

Labels are converted to strings.  Only listed (state, action) pairs are
available; an action need not be usable in every state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from types import MappingProxyType
from typing import Mapping, Sequence

import numpy as np
import yaml
from scipy.sparse.csgraph import connected_components

from .errors import ChannelSpecError

ROW_SUM_TOL = 1e-12


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


def _strongly_connected(adj: np.ndarray) -> bool:
    n_comp, _ = connected_components(adj.astype(np.int8), directed=True, connection="strong")
    return n_comp == 1


@dataclass(frozen=True)
class ChannelSpec:
    """A validated finite-state channel.

    ``transition`` maps ``(state, action)`` to the next state and ``cost`` maps
    the same pairs to the nonnegative action cost.  ``emission`` is a
    ``|S| x |Y|`` array whose rows follow ``states`` and columns ``outputs``.
    """

    states: tuple[str, ...]
    actions: tuple[str, ...]
    outputs: tuple[str, ...]
    transition: Mapping[tuple[str, str], str]
    cost: Mapping[tuple[str, str], float]
    emission: np.ndarray
    initial_state: str

    def __post_init__(self):
        object.__setattr__(self, "transition", MappingProxyType(dict(self.transition)))
        object.__setattr__(self, "cost", MappingProxyType(dict(self.cost)))
        object.__setattr__(self, "emission", _frozen(self.emission))
        _validate(self)

    def index(self, state: str) -> int:
        return self.states.index(state)


def _validate(ch: ChannelSpec) -> None:
    for name, labels in (("states", ch.states), ("actions", ch.actions), ("outputs", ch.outputs)):
        if not labels:
            raise ChannelSpecError(f"'{name}' must be a nonempty list")
        if len(set(labels)) != len(labels):
            raise ChannelSpecError(f"'{name}' contains duplicate labels")
    if ch.initial_state not in ch.states:
        raise ChannelSpecError(f"initial_state {ch.initial_state!r} is not a listed state")
    states = set(ch.states)
    for (s, x), t in ch.transition.items():
        if s not in states:
            raise ChannelSpecError(f"transition from unknown state {s!r}")
        if x not in ch.actions:
            raise ChannelSpecError(f"transition ({s}, {x}) uses unknown action {x!r}")
        if t not in states:
            raise ChannelSpecError(f"transition ({s}, {x}) leads to unknown state {t!r}")
        if (s, x) not in ch.cost:
            raise ChannelSpecError(f"transition ({s}, {x}) has no cost")
    for (s, x), k in ch.cost.items():
        if (s, x) not in ch.transition:
            raise ChannelSpecError(f"cost given for ({s}, {x}) which has no transition")
        if not math.isfinite(k) or k < 0:
            raise ChannelSpecError(f"cost of action {x!r} in state {s!r} must be finite and >= 0, got {k}")

    em = ch.emission
    if em.shape != (len(ch.states), len(ch.outputs)):
        raise ChannelSpecError(
            f"emission must be {len(ch.states)}x{len(ch.outputs)}, got shape {em.shape}"
        )
    for i, s in enumerate(ch.states):
        row = em[i]
        if not np.all(np.isfinite(row)) or np.any(row < 0) or np.any(row > 1):
            raise ChannelSpecError(f"emission row of state {s!r} has entries outside [0, 1]")
        if abs(row.sum() - 1.0) > ROW_SUM_TOL:
            raise ChannelSpecError(f"emission row of state {s!r} sums to {row.sum():.12g}, not 1")

    n = len(ch.states)
    adj = np.zeros((n, n), dtype=bool)
    for (s, _), t in ch.transition.items():
        adj[ch.index(s), ch.index(t)] = True
    for i, s in enumerate(ch.states):
        if not adj[i].any():
            raise ChannelSpecError(f"state {s!r} has no outgoing action")
    if not _strongly_connected(adj):
        raise ChannelSpecError("the state graph is not strongly connected (channel is not irreducible)")


def _labels(doc, key) -> tuple[str, ...]:
    val = doc.get(key)
    if not isinstance(val, list):
        raise ChannelSpecError(f"'{key}' must be a list")
    return tuple(str(v) for v in val)


def channel_from_dict(doc: Mapping) -> ChannelSpec:
    if not isinstance(doc, Mapping):
        raise ChannelSpecError("channel document must be a mapping")
    missing = {"states", "actions", "outputs", "initial_state", "transitions", "emission"} - set(doc)
    if missing:
        raise ChannelSpecError(f"missing keys: {', '.join(sorted(missing))}")
    states = _labels(doc, "states")
    actions = _labels(doc, "actions")
    outputs = _labels(doc, "outputs")

    transition: dict[tuple[str, str], str] = {}
    cost: dict[tuple[str, str], float] = {}
    recs = doc["transitions"]
    if not isinstance(recs, list):
        raise ChannelSpecError("'transitions' must be a list of records")
    for rec in recs:
        if not isinstance(rec, Mapping) or not {"from", "action", "to", "cost"} <= set(rec):
            raise ChannelSpecError(f"transition record needs from/action/to/cost: {rec!r}")
        key = (str(rec["from"]), str(rec["action"]))
        if key in transition:
            raise ChannelSpecError(
                f"nondeterministic transition: action {key[1]!r} in state {key[0]!r} is listed twice"
            )
        try:
            k = float(rec["cost"])
        except (TypeError, ValueError):
            raise ChannelSpecError(f"cost of action {key[1]!r} in state {key[0]!r} is not a number") from None
        transition[key] = str(rec["to"])
        cost[key] = k

    em_doc = doc["emission"]
    if not isinstance(em_doc, Mapping):
        raise ChannelSpecError("'emission' must map each state to a probability list")
    em_doc = {str(k): v for k, v in em_doc.items()}
    rows = []
    for s in states:
        if s not in em_doc:
            raise ChannelSpecError(f"no emission row for state {s!r}")
        row = em_doc[s]
        if not isinstance(row, list) or len(row) != len(outputs):
            raise ChannelSpecError(f"emission row of state {s!r} must list {len(outputs)} probabilities")
        try:
            rows.append([float(v) for v in row])
        except (TypeError, ValueError):
            raise ChannelSpecError(f"emission row of state {s!r} is not numeric") from None

    return ChannelSpec(
        states=states,
        actions=actions,
        outputs=outputs,
        transition=transition,
        cost=cost,
        emission=np.array(rows),
        initial_state=str(doc["initial_state"]),
    )


def parse_channel(text: str) -> ChannelSpec:
    """Parse and validate a channel document (YAML or JSON text)."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ChannelSpecError(f"malformed channel file: {exc}") from None
    return channel_from_dict(doc)


def load_channel(path: str | Path) -> ChannelSpec:
    return parse_channel(Path(path).read_text(encoding="utf-8"))


def channel_to_dict(ch: ChannelSpec) -> dict:
    return {
        "states": list(ch.states),
        "actions": list(ch.actions),
        "outputs": list(ch.outputs),
        "initial_state": ch.initial_state,
        "transitions": [
            {"from": s, "action": x, "to": t, "cost": ch.cost[(s, x)]}
            for (s, x), t in ch.transition.items()
        ],
        "emission": {s: [float(v) for v in ch.emission[i]] for i, s in enumerate(ch.states)},
    }


def with_emission(ch: ChannelSpec, emission, outputs: Sequence[str] | None = None) -> ChannelSpec:
    """Copy of ``ch`` with a different observation model."""
    return ChannelSpec(
        states=ch.states,
        actions=ch.actions,
        outputs=tuple(outputs) if outputs is not None else ch.outputs,
        transition=ch.transition,
        cost=ch.cost,
        emission=np.asarray(emission, dtype=float),
        initial_state=ch.initial_state,
    )


def bsc_emission(p: float) -> np.ndarray:
    return np.array([[1.0 - p, p], [p, 1.0 - p]])


@dataclass(frozen=True)
class PrunedChain:
    """State graph keeping only the cheapest action between each ordered pair.

    ``cost[i, j]`` is ``k(s_j | s_i)`` for edges and ``inf`` elsewhere;
    ``action[i][j]`` names the retained action (``None`` off the edge set).
    """

    states: tuple[str, ...]
    cost: np.ndarray
    emission: np.ndarray
    initial_state: str
    action: tuple[tuple[str | None, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "cost", _frozen(self.cost))
        object.__setattr__(self, "emission", _frozen(self.emission))

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def adjacency(self) -> np.ndarray:
        return np.isfinite(self.cost)

    @property
    def edges(self) -> dict[tuple[str, str], float]:
        return {
            (self.states[i], self.states[j]): float(self.cost[i, j])
            for i, j in zip(*np.nonzero(self.adjacency))
        }

    @property
    def initial_index(self) -> int:
        return self.states.index(self.initial_state)

    def index(self, state: str | int) -> int:
        if isinstance(state, (int, np.integer)):
            return int(state)
        return self.states.index(state)


def prune(channel: ChannelSpec) -> PrunedChain:
    """Collapse parallel actions, keeping the cheapest one per state pair.

    Ties go to the action listed first in ``channel.actions``.
    """
    n = len(channel.states)
    cost = np.full((n, n), np.inf)
    action: list[list[str | None]] = [[None] * n for _ in range(n)]
    for s in channel.states:
        i = channel.index(s)
        for x in channel.actions:
            if (s, x) not in channel.transition:
                continue
            j = channel.index(channel.transition[(s, x)])
            k = channel.cost[(s, x)]
            if k < cost[i, j]:
                cost[i, j] = k
                action[i][j] = x
    return PrunedChain(
        states=channel.states,
        cost=cost,
        emission=channel.emission,
        initial_state=channel.initial_state,
        action=tuple(tuple(r) for r in action),
    )


def _check_support(P: np.ndarray, chain: PrunedChain | None) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ValueError("transition matrix must be square")
    if np.any(P < 0) or np.any(np.abs(P.sum(axis=1) - 1.0) > 1e-9):
        raise ValueError("transition matrix must be row-stochastic")
    if chain is not None:
        if P.shape[0] != chain.n_states:
            raise ValueError("transition matrix does not match the chain size")
        if np.any((P > 0) & ~chain.adjacency):
            raise ValueError("transition matrix puts mass on a pair that is not a chain edge")
    return P


def stationary_distribution(P, chain: PrunedChain | None = None) -> np.ndarray:
    """Stationary law of a Markov chain with a single closed class.

    Transient states are allowed (they get zero mass); several closed classes
    make the stationary law non-unique and raise ``ValueError``.
    """
    P = _check_support(P, chain)
    n = P.shape[0]
    support = P > 0
    n_comp, labels = connected_components(support.astype(np.int8), directed=True, connection="strong")
    closed = []
    for c in range(n_comp):
        members = labels == c
        if not support[members][:, ~members].any():
            closed.append(c)
    if len(closed) != 1:
        raise ValueError(
            f"transition matrix has {len(closed)} closed classes; stationary distribution is not unique"
        )
    M = np.vstack([P.T - np.eye(n), np.ones((1, n))])
    rhs = np.zeros(n + 1)
    rhs[-1] = 1.0
    pi, *_ = np.linalg.lstsq(M, rhs, rcond=None)
    pi = np.clip(pi, 0.0, None)
    pi[labels != closed[0]] = 0.0
    return pi / pi.sum()


def average_cost(P, chain: PrunedChain) -> float:
    """Long-run expected cost per step, sum_s pi(s) sum_s' P(s'|s) k(s'|s)."""
    P = _check_support(P, chain)
    pi = stationary_distribution(P, chain)
    k = np.where(chain.adjacency, chain.cost, 0.0)
    return float(pi @ (P * k).sum(axis=1))


def noiseless_capacity(chain: PrunedChain, rtol: float = 1e-12, max_iter: int = 1_000_000) -> float:
    """log2 of the spectral radius of the 0/1 adjacency matrix.

    Power iteration runs on ``A + I``, which is primitive for an irreducible
    ``A`` and therefore converges even when the graph is periodic.
    """
    A = chain.adjacency.astype(float) + np.eye(chain.n_states)
    v = np.ones(chain.n_states)
    lam = 0.0
    for _ in range(max_iter):
        w = A @ v
        lam_new = w.max()
        w /= lam_new
        if abs(lam_new - lam) <= rtol * lam_new and np.max(np.abs(w - v)) <= rtol:
            lam = lam_new
            break
        v, lam = w, lam_new
    return float(np.log2(lam - 1.0))
