import numpy as np
import pytest

from dnaware.network import (BUILTIN, DecisionNetwork, Kind, builtin, config_index, cpt_lookup, from_dict,
                             index_bits, reward_of, sample, to_dict, validate)

A, B, O = Kind.ACTION, Kind.BEFORE, Kind.OUTCOME


def tiny(**over):
    spec = dict(kinds={"a": A, "b": B, "o": O}, parents={"b": (), "o": ("a", "b")},
                cpt={"b": [0.3], "o": [0.1, 0.6, 0.5, 0.9]}, reward_domain=("o",), reward_table=[0.0, 1.0])
    spec.update(over)
    return DecisionNetwork(**spec)


@pytest.mark.parametrize("name", BUILTIN)
def test_bundled_networks_validate(name):
    assert validate(builtin(name)) == []


def test_random_sized_networks_have_21_variables():
    dn = builtin("dn_best")
    assert len(dn.variables) == 21
    assert (len(dn.actions), len(dn.befores), len(dn.outcomes)) == (7, 7, 7)


def test_canonical_index_first_is_least_significant():
    assert config_index([1, 0, 0]) == 1
    assert config_index([0, 0, 1]) == 4
    assert index_bits(6, 3) == (0, 1, 1)


def test_action_parent_of_before_is_flagged():
    dn = tiny(parents={"b": ("a",), "o": ("a", "b")}, cpt={"b": [0.3, 0.4], "o": [0.1, 0.6, 0.5, 0.9]})
    assert "Before descends from Action: b" in validate(dn)


def test_isolated_chance_node_is_flagged():
    dn = tiny(kinds={"a": A, "b": B, "c": B, "o": O}, parents={"b": (), "c": (), "o": ("a", "b")},
              cpt={"b": [0.3], "c": [0.5], "o": [0.1, 0.6, 0.5, 0.9]})
    assert "c not connected to utility" in validate(dn)


def test_cycle_and_bad_cpt_are_flagged():
    dn = tiny(kinds={"a": A, "o": O, "p": O}, parents={"o": ("a", "p"), "p": ("o",)},
              cpt={"o": [0.5] * 4, "p": [0.5, 0.5]}, reward_domain=("o",))
    assert validate(dn) == ["parent graph has a cycle"]
    assert any("outside" in m for m in validate(tiny(cpt={"b": [1.3], "o": [0.1, 0.6, 0.5, 0.9]})))


def test_barley_cpt_entries():
    dn = builtin("barley")
    assert cpt_lookup(dn, "Fungus", {"Temperature": 0, "Fungicide": 0, "Grain": 0}) == 0.2
    assert cpt_lookup(dn, "Infestation", {"InsectPrevalence": 1, "Pesticide": 0}) == 0.5
    assert cpt_lookup(dn, "SoilType", {}) == 0.5


def test_barley_rewards():
    dn = builtin("barley")
    assert reward_of(dn, {"Yield": 1, "Protein": 1, "Fungus": 0, "BadPress": 0}) == 20
    assert reward_of(dn, {"Yield": 0, "Protein": 0, "Fungus": 1, "BadPress": 1}) == -20
    for idx in range(16):
        y, p, f, bp = index_bits(idx, 4)
        assert dn.reward_table[idx] == 10 + 5 * y + 5 * p - 10 * f - 20 * bp


def test_degenerate_cpt_always_samples_one():
    dn = tiny(cpt={"b": [1.0], "o": [0.1, 0.6, 0.5, 0.9]})
    rng = np.random.default_rng(0)
    assert all(sample(dn, {"a": 0}, rng)[0]["b"] == 1 for _ in range(200))


def test_sampling_is_seeded():
    dn = builtin("barley")
    act = {a: 1 for a in dn.actions}
    first = [sample(dn, act, np.random.default_rng(7)) for _ in range(3)]
    again = [sample(dn, act, np.random.default_rng(7)) for _ in range(3)]
    assert first == again


def test_fungus_sampling_frequency():
    dn = builtin("barley")
    rng = np.random.default_rng(11)
    act = {a: 0 for a in dn.actions}
    hits = sum(sample(dn, act, rng, given={"Temperature": 0})[0]["Fungus"] for _ in range(100_000))
    assert abs(hits / 100_000 - 0.2) < 0.01


def test_given_values_are_kept():
    dn = builtin("barley")
    state, r = sample(dn, {a: 0 for a in dn.actions}, np.random.default_rng(1), given={"SoilType": 1})
    assert state["SoilType"] == 1
    assert r == reward_of(dn, state)


def test_round_trip():
    dn = builtin("barley")
    back = from_dict(to_dict(dn))
    assert back.kinds == dn.kinds and dict(back.parents) == dict(dn.parents)
    assert all(np.array_equal(back.cpt[v], dn.cpt[v]) for v in dn.chance)
    assert np.array_equal(back.reward_table, dn.reward_table)


def test_malformed_file_raises_value_error():
    with pytest.raises(ValueError):
        from_dict({"variables": [{"name": "a"}]})
