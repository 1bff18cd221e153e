import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dnaware.inference import (ImpossibleEvidence, eu_over_actions, eu_table, expected_utility, lex_argmax,
                               marginal, optimal_action)
from dnaware.network import BUILTIN, DecisionNetwork, Kind, builtin
from dnaware.simulation import generate_random_dn
from oracles import oracle_eu, oracle_marginal

# Frozen from the enumeration oracle over the bundled crop network with
# Temperature summed out: 0.5 * 0.2 + 0.5 * 0.5.
FUNGUS_NO_FUNGICIDE_NO_GRAIN = 0.35


def random_query(dn, rng):
    ev = {a: int(rng.integers(2)) for a in dn.actions}
    for v in dn.chance:
        if rng.random() < 0.3:
            ev[v] = int(rng.integers(2))
    target = [v for v in dn.chance if v not in ev][int(rng.integers(len(dn.chance) - sum(v in ev for v in dn.chance)))]
    return target, ev


def test_fungus_marginal_frozen_oracle_value():
    dn = builtin("barley")
    acts = {a: 0 for a in dn.actions}
    assert oracle_marginal(dn, "Fungus", acts) == pytest.approx(FUNGUS_NO_FUNGICIDE_NO_GRAIN, abs=1e-12)
    p = marginal(dn, ["Fungus"], {"Fungicide": 0, "Grain": 0})
    assert p[1] == pytest.approx(FUNGUS_NO_FUNGICIDE_NO_GRAIN, abs=1e-12)


@pytest.mark.parametrize("name", BUILTIN)
def test_marginals_match_enumeration(name):
    dn = builtin(name)
    rng = np.random.default_rng(5)
    for _ in range(8):
        target, ev = random_query(dn, rng)
        try:
            got = marginal(dn, [target], ev)[1]
        except ImpossibleEvidence:
            continue
        assert got == pytest.approx(oracle_marginal(dn, target, ev), abs=1e-9)


@pytest.mark.parametrize("name", BUILTIN)
def test_expected_utility_matches_enumeration(name):
    dn = builtin(name)
    rng = np.random.default_rng(8)
    for _ in range(5):
        act = {a: int(rng.integers(2)) for a in dn.actions}
        ev = {b: int(rng.integers(2)) for b in dn.befores}
        assert expected_utility(dn, act, ev) == pytest.approx(oracle_eu(dn, act, ev), abs=1e-9)


def test_barley_optimal_action_matches_exhaustive_argmax():
    dn = builtin("barley")
    rng = np.random.default_rng(2)
    for _ in range(4):
        ev = {b: int(rng.integers(2)) for b in dn.befores}
        values = {}
        for bits in itertools.product((0, 1), repeat=len(dn.actions)):
            values[bits] = oracle_eu(dn, dict(zip(dn.actions, bits)), ev)
        top = max(values.values())
        best = min(k for k, v in values.items() if v >= top - 1e-12)
        act, eu = optimal_action(dn, ev)
        assert tuple(act[a] for a in dn.actions) == best
        assert eu == pytest.approx(top, abs=1e-9)


def test_eu_table_matches_per_context_queries():
    dn = builtin("barley")
    eu, p = eu_table(dn, dn.befores, dn.actions)
    assert p.sum() == pytest.approx(1.0)
    for j in (0, 7, 19, 31):
        ev = {b: (j >> k) & 1 for k, b in enumerate(dn.befores)}
        assert np.allclose(eu[j], eu_over_actions(dn, ev), atol=1e-9)


def test_target_in_evidence_is_point_mass():
    dn = builtin("barley")
    p = marginal(dn, ["SoilType"], {"SoilType": 1})
    assert list(p) == [0.0, 1.0]


def test_zero_reward_gives_zero_eu_and_all_zero_action():
    dn = builtin("barley")
    flat = dn.with_reward(dn.reward_domain, np.zeros(16))
    act, eu = optimal_action(flat, {})
    assert eu == 0.0 and all(v == 0 for v in act.values())


def test_single_action_argmax():
    dn = DecisionNetwork({"a": Kind.ACTION, "o": Kind.OUTCOME}, {"o": ("a",)}, {"o": [0.2, 0.7]}, ("o",), [0.0, 1.0])
    assert optimal_action(dn)[0] == {"a": 1}


def test_chain_network_query():
    dn = DecisionNetwork({"a": Kind.ACTION, "x": Kind.OUTCOME, "y": Kind.OUTCOME, "z": Kind.OUTCOME},
                         {"x": ("a",), "y": ("x",), "z": ("y",)},
                         {"x": [0.3, 0.8], "y": [0.1, 0.7], "z": [0.4, 0.95]}, ("z",), [0.0, 3.0])
    for a in (0, 1):
        for zv in (0, 1):
            got = marginal(dn, ["x"], {"a": a, "z": zv})[1]
            assert got == pytest.approx(oracle_marginal(dn, "x", {"a": a, "z": zv}), abs=1e-9)


def test_two_chance_variable_toy_eu():
    dn = DecisionNetwork({"a": Kind.ACTION, "b": Kind.BEFORE, "o": Kind.OUTCOME},
                         {"b": (), "o": ("a", "b")}, {"b": [0.4], "o": [0.1, 0.5, 0.6, 0.9]},
                         ("b", "o"), [1.0, 2.0, 3.0, 4.0])
    for a in (0, 1):
        # hand sum over the four (b, o) states
        want = sum((0.4 if b else 0.6) * (th if o else 1 - th) * dn.reward_table[b + 2 * o]
                   for b in (0, 1) for o in (0, 1)
                   for th in [dn.cpt["o"][a + 2 * b]])
        assert expected_utility(dn, {"a": a}) == pytest.approx(want, abs=1e-12)


def test_lex_argmax_prefers_leading_zeros():
    # indices 1 = (1,0) and 2 = (0,1) tie; (0,1) is lexicographically smaller
    assert lex_argmax(np.array([0.0, 5.0, 5.0, 1.0]), 2) == 2


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_random_small_networks_agree_with_enumeration(seed):
    dn = generate_random_dn(seed, 2, 3, 3, reward_vars=3)
    rng = np.random.default_rng(seed)
    target, ev = random_query(dn, rng)
    try:
        got = marginal(dn, [target], ev)
    except ImpossibleEvidence:
        return
    assert got.sum() == pytest.approx(1.0)
    assert got[1] == pytest.approx(oracle_marginal(dn, target, ev), abs=1e-9)
    act = {a: ev[a] for a in dn.actions}
    assert expected_utility(dn, act) == pytest.approx(oracle_eu(dn, act), abs=1e-9)

