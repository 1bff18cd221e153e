"""Decision networks over Boolean variables.

A network holds typed variables (action, before, outcome), a parent DAG over
the chance variables, one CPT per chance variable and a reward table over a
subset of chance variables.

Tables are flat arrays in canonical order: the first-listed parent (or reward
variable) is the least significant bit, and 0 precedes 1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

Assignment = Mapping[str, int]


class Kind(str, Enum):
    ACTION = "action"
    BEFORE = "before"
    OUTCOME = "outcome"


KIND_RANK = {Kind.ACTION: 0, Kind.BEFORE: 1, Kind.OUTCOME: 2}


def config_index(values: Sequence[int]) -> int:
    """Canonical index of a bit vector (first entry least significant)."""
    idx = 0
    for k, v in enumerate(values):
        idx |= int(v) << k
    return idx


def index_bits(idx: int, n: int) -> tuple[int, ...]:
    return tuple((idx >> k) & 1 for k in range(n))


@dataclass(frozen=True, eq=False)
class DecisionNetwork:
    """Immutable decision network ``<C, A, Pi, theta, R>``.

    ``kinds`` fixes the variable order used for sampling output and for
    action bit-vectors.  ``parents`` and ``cpt`` are keyed by chance
    variables only.
    """

    kinds: Mapping[str, Kind]
    parents: Mapping[str, tuple[str, ...]]
    cpt: Mapping[str, np.ndarray]
    reward_domain: tuple[str, ...]
    reward_table: np.ndarray
    name: str = field(default="dn")

    def __post_init__(self):
        kinds = {str(v): Kind(k) for v, k in self.kinds.items()}
        parents = {v: tuple(ps) for v, ps in self.parents.items()}
        cpt = {}
        for v, table in self.cpt.items():
            arr = np.array(table, dtype=float).reshape(-1)
            arr.setflags(write=False)
            cpt[v] = arr
        reward = np.array(self.reward_table, dtype=float).reshape(-1)
        reward.setflags(write=False)
        object.__setattr__(self, "kinds", kinds)
        object.__setattr__(self, "parents", parents)
        object.__setattr__(self, "cpt", cpt)
        object.__setattr__(self, "reward_domain", tuple(self.reward_domain))
        object.__setattr__(self, "reward_table", reward)

    # -- vocabulary -------------------------------------------------------
    @cached_property
    def variables(self) -> tuple[str, ...]:
        return tuple(self.kinds)

    @cached_property
    def actions(self) -> tuple[str, ...]:
        return tuple(v for v, k in self.kinds.items() if k is Kind.ACTION)

    @cached_property
    def befores(self) -> tuple[str, ...]:
        return tuple(v for v, k in self.kinds.items() if k is Kind.BEFORE)

    @cached_property
    def outcomes(self) -> tuple[str, ...]:
        return tuple(v for v, k in self.kinds.items() if k is Kind.OUTCOME)

    @cached_property
    def chance(self) -> tuple[str, ...]:
        return tuple(v for v, k in self.kinds.items() if k is not Kind.ACTION)

    def parents_of(self, v: str) -> tuple[str, ...]:
        return self.parents.get(v, ())

    @cached_property
    def children(self) -> dict[str, tuple[str, ...]]:
        out: dict[str, list[str]] = {v: [] for v in self.variables}
        for v, ps in self.parents.items():
            for p in ps:
                out.setdefault(p, []).append(v)
        return {v: tuple(c) for v, c in out.items()}

    @cached_property
    def topological_order(self) -> tuple[str, ...]:
        """Chance variables in a parents-first order; raises on cycles."""
        indeg = {v: 0 for v in self.chance}
        for v in self.chance:
            for p in self.parents_of(v):
                if p in indeg:
                    indeg[v] += 1
        ready = [v for v in self.chance if indeg[v] == 0]
        order = []
        while ready:
            v = ready.pop(0)
            order.append(v)
            for c in self.children.get(v, ()):
                if c in indeg:
                    indeg[c] -= 1
                    if indeg[c] == 0:
                        ready.append(c)
        if len(order) != len(self.chance):
            raise ValueError("parent graph has a cycle")
        return tuple(order)

    def ancestors(self, targets) -> set[str]:
        """Targets plus all their ancestors."""
        seen = set()
        stack = list(targets)
        while stack:
            v = stack.pop()
            if v in seen:
                continue
            seen.add(v)
            stack.extend(self.parents_of(v))
        return seen

    def cpt_tensor(self, v: str) -> np.ndarray:
        """Factor over ``parents + (v,)`` with one axis per variable."""
        k = len(self.parents_of(v))
        theta = self.cpt[v].reshape([2] * k).transpose(tuple(reversed(range(k)))) if k else self.cpt[v].reshape(())
        return np.stack([1.0 - theta, theta], axis=-1)

    @cached_property
    def reward_tensor(self) -> np.ndarray:
        m = len(self.reward_domain)
        if m == 0:
            return self.reward_table.reshape(())
        return self.reward_table.reshape([2] * m).transpose(tuple(reversed(range(m))))

    def with_reward(self, domain: Sequence[str], table) -> "DecisionNetwork":
        return DecisionNetwork(self.kinds, self.parents, self.cpt, tuple(domain), table, self.name)


# -- validation ---------------------------------------------------------------

def validate(dn: DecisionNetwork) -> list[str]:
    """Return the list of violated network invariants (empty when valid)."""
    problems: list[str] = []
    known = set(dn.kinds)
    for v in dn.actions:
        if dn.parents_of(v):
            problems.append(f"action {v} has parents")
    for v, ps in dn.parents.items():
        if v not in known:
            problems.append(f"unknown variable {v} in parents")
        for p in ps:
            if p not in known:
                problems.append(f"unknown parent {p} of {v}")
        if len(set(ps)) != len(ps):
            problems.append(f"repeated parent of {v}")
    for v in dn.chance:
        table = dn.cpt.get(v)
        if table is None:
            problems.append(f"missing cpt for {v}")
            continue
        if table.size != 2 ** len(dn.parents_of(v)):
            problems.append(f"cpt of {v} has wrong length")
        if not np.all(np.isfinite(table)) or np.any(table < 0) or np.any(table > 1):
            problems.append(f"cpt of {v} outside [0,1]")
    if problems:
        return problems
    try:
        dn.topological_order
    except ValueError:
        return ["parent graph has a cycle"]
    for v in dn.befores:
        anc = dn.ancestors(dn.parents_of(v))
        if any(dn.kinds[a] is Kind.ACTION for a in anc):
            problems.append(f"Before descends from Action: {v}")
        elif any(dn.kinds[a] is Kind.OUTCOME for a in anc):
            problems.append(f"Before descends from Outcome: {v}")
    for v in dn.outcomes:
        anc = dn.ancestors(dn.parents_of(v))
        if not any(dn.kinds[a] is Kind.ACTION for a in anc):
            problems.append(f"Outcome without Action ancestor: {v}")
    for v in dn.reward_domain:
        if v not in known or dn.kinds[v] is Kind.ACTION:
            problems.append(f"reward domain variable {v} is not a chance variable")
    if len(set(dn.reward_domain)) != len(dn.reward_domain):
        problems.append("repeated reward domain variable")
    if dn.reward_table.size != 2 ** len(dn.reward_domain):
        problems.append("reward table has wrong length")
    elif not np.all(np.isfinite(dn.reward_table)):
        problems.append("reward table has non-finite entries")
    reaches = set(v for v in dn.reward_domain if v in known)
    stack = list(reaches)
    while stack:
        v = stack.pop()
        for p in dn.parents_of(v):
            if p not in reaches:
                reaches.add(p)
                stack.append(p)
    for v in dn.variables:
        if v not in reaches:
            problems.append(f"{v} not connected to utility")
    return problems


# -- table access ---------------------------------------------------------------

def cpt_lookup(dn: DecisionNetwork, v: str, parent_assignment: Assignment) -> float:
    if v not in dn.cpt:
        raise KeyError(f"unknown chance variable {v}")
    ps = dn.parents_of(v)
    missing = [p for p in ps if p not in parent_assignment]
    if missing:
        raise ValueError(f"parent assignment for {v} misses {missing}")
    return float(dn.cpt[v][config_index([parent_assignment[p] for p in ps])])


def reward_of(dn: DecisionNetwork, state: Assignment) -> float:
    missing = [v for v in dn.reward_domain if v not in state]
    if missing:
        raise ValueError(f"state misses reward domain variables {missing}")
    return float(dn.reward_table[config_index([state[v] for v in dn.reward_domain])])


def sample(dn: DecisionNetwork, action: Assignment, rng: np.random.Generator,
           given: Assignment | None = None) -> tuple[dict[str, int], float]:
    """Ancestral sample of every chance variable given a full action.

    Chance variables in ``given`` keep their values (use it only for
    variables whose ancestors are also given, e.g. before variables).
    """
    missing = [a for a in dn.actions if a not in action]
    if missing:
        raise ValueError(f"action misses {missing}")
    given = given or {}
    state = {a: int(action[a]) for a in dn.actions}
    u = rng.random(len(dn.topological_order))
    for k, v in enumerate(dn.topological_order):
        if v in given:
            state[v] = int(given[v])
            continue
        p = dn.cpt[v][config_index([state[q] for q in dn.parents_of(v)])]
        state[v] = int(u[k] < p)
    ordered = {v: state[v] for v in dn.variables}
    return ordered, reward_of(dn, ordered)


# -- file format ------------------------------------------------------------------

def to_dict(dn: DecisionNetwork) -> dict:
    return {
        "name": dn.name,
        "variables": [{"name": v, "kind": k.value} for v, k in dn.kinds.items()],
        "parents": {v: list(dn.parents_of(v)) for v in dn.chance},
        "cpt": {v: dn.cpt[v].tolist() for v in dn.chance},
        "reward_domain": list(dn.reward_domain),
        "reward_table": dn.reward_table.tolist(),
    }


def from_dict(data: dict) -> DecisionNetwork:
    try:
        kinds = {item["name"]: Kind(item["kind"]) for item in data["variables"]}
        parents = {v: () for v in kinds if kinds[v] is not Kind.ACTION}
        parents.update({v: tuple(ps) for v, ps in data["parents"].items()})
        cpt = {v: data["cpt"][v] for v in data["cpt"]}
        return DecisionNetwork(kinds, parents, cpt, tuple(data["reward_domain"]),
                               data["reward_table"], data.get("name", "dn"))
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed network description: {exc}") from exc


def load(path: str | Path) -> DecisionNetwork:
    with open(path) as fh:
        return from_dict(json.load(fh))


def save(dn: DecisionNetwork, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(to_dict(dn), fh, indent=1)
        fh.write("\n")


BUILTIN = ("barley", "dn_best", "dn_worst")


def builtin(name: str) -> DecisionNetwork:
    if name not in BUILTIN:
        raise KeyError(f"no bundled network named {name}")
    text = resources.files("dnaware").joinpath("data", f"{name}.json").read_text()
    return from_dict(json.loads(text))
