import numpy as np
import pytest
import yaml
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import TWO_STATE, GOLDEN, random_channel
from fscbound.channel import (
    ChannelSpec,
    average_cost,
    channel_to_dict,
    noiseless_capacity,
    parse_channel,
    prune,
    stationary_distribution,
)
from fscbound.errors import ChannelSpecError

ONE_STATE = """
states: [s]
actions: [x]
outputs: ["0", "1"]
initial_state: s
transitions: [{from: s, action: x, to: s, cost: 1}]
emission: {s: [1, 0]}
"""


def test_parse_two_state(two_state):
    assert len(two_state.states) == 2
    assert len(two_state.actions) == 2
    assert two_state.transition[("s2", "x2")] == "s1"
    assert two_state.cost[("s1", "x2")] == 3.0


def test_parse_single_state():
    ch = parse_channel(ONE_STATE)
    assert ch.states == ("s",)
    np.testing.assert_array_equal(ch.emission, [[1.0, 0.0]])


def test_json_is_accepted(two_state):
    import json

    again = parse_channel(json.dumps(channel_to_dict(two_state)))
    assert again.transition == two_state.transition
    np.testing.assert_array_equal(again.emission, two_state.emission)


def _doc():
    return yaml.safe_load(TWO_STATE.read_text())


@pytest.mark.parametrize(
    "mutate, match",
    [
        (lambda d: d["emission"].__setitem__("s1", [0.6, 0.3]), "s1.*sums to"),
        (lambda d: d["emission"].__setitem__("s2", [1.2, -0.2]), "s2.*outside"),
        (lambda d: d["transitions"].append({"from": "s1", "action": "x1", "to": "s2", "cost": 1}),
         "nondeterministic.*x1.*s1"),
        (lambda d: d["transitions"].__setitem__(2, {"from": "s2", "action": "x1", "to": "s2", "cost": 4})
         or d["transitions"].pop(3), "strongly connected"),
        (lambda d: d["transitions"][0].__setitem__("cost", -1), "cost"),
        (lambda d: d.pop("outputs"), "missing"),
        (lambda d: d.__setitem__("initial_state", "s9"), "initial_state"),
    ],
)
def test_parse_errors(mutate, match):
    doc = _doc()
    mutate(doc)
    with pytest.raises(ChannelSpecError, match=match):
        parse_channel(yaml.safe_dump(doc))


def test_malformed_text():
    with pytest.raises(ChannelSpecError):
        parse_channel("states: [a, b\n  - oops")


def test_prune_two_state(two_state):
    chain = prune(two_state)
    assert chain.edges == {("s1", "s1"): 2.0, ("s1", "s2"): 3.0, ("s2", "s1"): 4.0}
    assert chain.action[1][0] == "x1"


def test_prune_keeps_cheapest_self_loop():
    doc = yaml.safe_load(ONE_STATE)
    doc["actions"] = ["x", "y"]
    doc["transitions"] = [
        {"from": "s", "action": "x", "to": "s", "cost": 5},
        {"from": "s", "action": "y", "to": "s", "cost": 3},
    ]
    chain = prune(parse_channel(yaml.safe_dump(doc)))
    assert chain.edges == {("s", "s"): 3.0}
    assert chain.action[0][0] == "y"


def test_prune_tie_keeps_first_listed_action():
    doc = _doc()
    doc["transitions"][3]["cost"] = 4
    chain = prune(parse_channel(yaml.safe_dump(doc)))
    assert chain.action[1][0] == "x1"


def test_prune_identity_and_idempotent():
    rng = np.random.default_rng(3)
    for _ in range(20):
        ch = random_channel(rng, int(rng.integers(1, 6)))
        chain = prune(ch)
        expected = {(s, t): ch.cost[(s, x)] for (s, x), t in ch.transition.items()}
        assert chain.edges == expected


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_pruned_cost_is_minimum_over_parallel_actions(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 5))
    states = tuple(f"s{i}" for i in range(n))
    actions = tuple(f"x{k}" for k in range(3))
    transition, cost = {}, {}
    for i in range(n):
        transition[(states[i], "x0")] = states[(i + 1) % n]
        cost[(states[i], "x0")] = float(rng.uniform(0, 5))
        for x in actions[1:]:
            if rng.random() < 0.7:
                transition[(states[i], x)] = states[int(rng.integers(n))]
                cost[(states[i], x)] = float(rng.uniform(0, 5))
    ch = ChannelSpec(states, actions, ("0", "1"), transition, cost, np.full((n, 2), 0.5), states[0])
    chain = prune(ch)
    for (s, x), t in ch.transition.items():
        assert chain.cost[ch.index(s), ch.index(t)] <= ch.cost[(s, x)]
    for (s, t), k in chain.edges.items():
        assert any(ch.transition[(s, x)] == t and ch.cost[(s, x)] == k for x in actions if (s, x) in ch.transition)


def test_stationary_examples(two_state):
    chain = prune(two_state)
    np.testing.assert_allclose(stationary_distribution([[0.5, 0.5], [1.0, 0.0]], chain), [2 / 3, 1 / 3],
                               atol=1e-14)
    np.testing.assert_allclose(stationary_distribution([[1.0]]), [1.0])
    np.testing.assert_allclose(stationary_distribution([[0.3, 0.7], [0.7, 0.3]]), [0.5, 0.5], atol=1e-14)


def test_stationary_rejects_two_closed_classes():
    with pytest.raises(ValueError, match="closed classes"):
        stationary_distribution(np.eye(2))


def test_stationary_rejects_off_edge_mass(two_state):
    with pytest.raises(ValueError, match="not a chain edge"):
        stationary_distribution([[0.5, 0.5], [0.5, 0.5]], prune(two_state))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_stationary_balance(seed):
    rng = np.random.default_rng(seed)
    chain = prune(random_channel(rng, int(rng.integers(1, 6))))
    P = rng.random(chain.cost.shape) * chain.adjacency
    P /= P.sum(axis=1, keepdims=True)
    pi = stationary_distribution(P, chain)
    assert np.max(np.abs(pi @ P - pi)) <= 1e-10
    assert abs(pi.sum() - 1.0) <= 1e-12
    assert np.all(pi >= 0)


def test_average_cost_examples(two_state):
    chain = prune(two_state)
    assert average_cost([[1.0, 0.0], [1.0, 0.0]], chain) == pytest.approx(2.0, abs=1e-12)
    assert average_cost([[0.0, 1.0], [1.0, 0.0]], chain) == pytest.approx(3.5, abs=1e-12)


def test_average_cost_constant_costs():
    rng = np.random.default_rng(0)
    ch = random_channel(rng, 4)
    ch = ChannelSpec(ch.states, ch.actions, ch.outputs, ch.transition,
                     {k: 1.7 for k in ch.cost}, ch.emission, ch.initial_state)
    chain = prune(ch)
    P = rng.random(chain.cost.shape) * chain.adjacency
    P /= P.sum(axis=1, keepdims=True)
    assert average_cost(P, chain) == pytest.approx(1.7, abs=1e-12)


def test_noiseless_capacity_examples(two_state):
    assert noiseless_capacity(prune(two_state)) == pytest.approx(GOLDEN, abs=1e-12)
    assert GOLDEN == pytest.approx(0.694242, abs=1e-6)
    assert noiseless_capacity(prune(parse_channel(ONE_STATE))) == pytest.approx(0.0, abs=1e-12)
    m = 4
    states = tuple(f"s{i}" for i in range(m))
    tr = {(s, f"x{j}"): states[j] for s in states for j in range(m)}
    ch = ChannelSpec(states, tuple(f"x{j}" for j in range(m)), ("0",), tr, {k: 1.0 for k in tr},
                     np.ones((m, 1)), states[0])
    assert noiseless_capacity(prune(ch)) == pytest.approx(2.0, abs=1e-12)


def test_noiseless_capacity_periodic_ring():
    states = ("a", "b", "c")
    tr = {("a", "x"): "b", ("b", "x"): "c", ("c", "x"): "a"}
    ch = ChannelSpec(states, ("x",), ("0",), tr, {k: 1.0 for k in tr}, np.ones((3, 1)), "a")
    assert noiseless_capacity(prune(ch)) == pytest.approx(0.0, abs=1e-12)


def test_noiseless_capacity_matches_path_counting():
    # growth of the number of paths from s0 between N and 2N steps; the ratio
    # cancels the constant prefactor that biases (1/N) log2 #paths at N = 30
    rng = np.random.default_rng(11)
    N = 30
    for _ in range(100):
        chain = prune(random_channel(rng, int(rng.integers(1, 6))))
        A = chain.adjacency.astype(float)
        count = lambda n: float(np.linalg.matrix_power(A, n)[chain.initial_index].sum())
        estimate = np.log2(count(2 * N) / count(N)) / N
        assert abs(estimate - noiseless_capacity(chain)) <= 0.01
