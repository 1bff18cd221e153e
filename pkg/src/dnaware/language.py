"""Formulas that partially describe a decision network, and their semantics.

A description is an append-only conjunction of two kinds of conjunct:
membership atoms (``X`` is a before/outcome/action variable, is in the
reward domain, or is a parent of ``Y``) and state constraints (some atomic
state extending the given literals has reward equal to, or above, ``r``).
Questions are separate message objects and never enter a description.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Iterator, Mapping

import numpy as np

from .network import DecisionNetwork, Kind


class SetKind(str, Enum):
    BEFORE = "B"
    OUTCOME = "O"
    ACTION = "A"
    REWARD = "R"
    PARENTS = "Pa"


KIND_SET = {Kind.BEFORE: SetKind.BEFORE, Kind.OUTCOME: SetKind.OUTCOME, Kind.ACTION: SetKind.ACTION}
SET_KIND = {v: k for k, v in KIND_SET.items()}


@dataclass(frozen=True)
class Membership:
    var: str
    set: SetKind
    of: str | None = None  # the child when ``set`` is PARENTS

    def __post_init__(self):
        if (self.set is SetKind.PARENTS) != (self.of is not None):
            raise ValueError("parent membership needs exactly one child variable")

    def variables(self) -> tuple[str, ...]:
        return (self.var,) if self.of is None else (self.var, self.of)

    def __str__(self):
        target = f"Pa({self.of})" if self.of is not None else self.set.value
        return f"(in {self.var} {target})"


@dataclass(frozen=True)
class Eq:
    value: float

    def holds(self, r) -> np.ndarray | bool:
        return np.isclose(r, self.value, rtol=0.0, atol=1e-9)

    def __str__(self):
        return f"(= R {self.value:g})"


@dataclass(frozen=True)
class Gt:
    value: float

    def holds(self, r) -> np.ndarray | bool:
        return np.asarray(r) > self.value

    def __str__(self):
        return f"(> R {self.value:g})"


@dataclass(frozen=True)
class StateExists:
    """Some atomic state extending ``literals`` has reward satisfying ``reward``."""

    literals: tuple[tuple[str, int], ...]
    reward: Eq | Gt

    def __post_init__(self):
        if not math.isfinite(self.reward.value):
            raise ValueError("reward values must be finite")
        object.__setattr__(self, "literals", tuple(sorted((str(k), int(v)) for k, v in self.literals)))

    @classmethod
    def of(cls, literals: Mapping[str, int], reward: Eq | Gt) -> "StateExists":
        return cls(tuple(literals.items()), reward)

    @property
    def assignment(self) -> dict[str, int]:
        return dict(self.literals)

    def variables(self) -> tuple[str, ...]:
        return tuple(k for k, _ in self.literals)

    def __str__(self):
        lits = " ".join(f"{k}={v}" for k, v in self.literals)
        return f"(exists ({lits}) {self.reward})"


Formula = Membership | StateExists


@dataclass(frozen=True)
class MissingB:
    """What differs about the state before acting at trial ``t`` and trial ``t - n``?"""

    t: int
    n: int

    def variables(self) -> tuple[str, ...]:
        return ()

    def __str__(self):
        return f"(? missing-before {self.t} {self.n})"


@dataclass(frozen=True)
class UnforeseenReward:
    """Which variables does the reward depend on, beyond ``known``?"""

    known: tuple[str, ...]

    def variables(self) -> tuple[str, ...]:
        return self.known

    def __str__(self):
        return f"(? reward-domain {' '.join(self.known)})"


@dataclass(frozen=True)
class WhichEffect:
    """What is an effect of ``var``?"""

    var: str

    def variables(self) -> tuple[str, ...]:
        return (self.var,)

    def __str__(self):
        return f"(? effect-of {self.var})"


Question = MissingB | UnforeseenReward | WhichEffect


class PartialDescription:
    """Append-only conjunction of formulas with indexes for entailment checks.

    Exact duplicates are not stored twice.  ``snapshot`` gives a read-only
    prefix view that later additions do not affect.
    """

    def __init__(self, conjuncts: Iterable[Formula] = ()):
        self._items: list[Formula] = []
        self._seen: set[Formula] = set()
        self._members: set[Membership] = set()
        self._kinds: dict[str, SetKind] = {}
        self._order: list[str] = []
        self._reward: list[str] = []
        self._parents: dict[str, list[str]] = {}
        for f in conjuncts:
            self.add(f)

    def add(self, f: Formula) -> bool:
        """Conjoin ``f``; returns False when it was already present."""
        if not isinstance(f, (Membership, StateExists)):
            raise TypeError(f"{f!r} cannot be conjoined to a description")
        if f in self._seen:
            return False
        self._seen.add(f)
        self._items.append(f)
        if isinstance(f, Membership):
            self._members.add(f)
            if f.set in SET_KIND and f.var not in self._kinds:
                self._kinds[f.var] = f.set
                self._order.append(f.var)
            elif f.set is SetKind.REWARD:
                self._reward.append(f.var)
            elif f.set is SetKind.PARENTS:
                self._parents.setdefault(f.of, []).append(f.var)
        return True

    def extend(self, fs: Iterable[Formula]) -> None:
        for f in fs:
            self.add(f)

    def __len__(self):
        return len(self._items)

    def __iter__(self) -> Iterator[Formula]:
        return iter(self._items)

    def __getitem__(self, i):
        return self._items[i]

    def snapshot(self) -> "PartialDescription":
        return PartialDescription(self._items)

    def entails(self, f: Membership) -> bool:
        return f in self._members

    def kind_of(self, var: str) -> Kind | None:
        s = self._kinds.get(var)
        return SET_KIND[s] if s is not None else None

    def declared(self) -> list[str]:
        """Variables with a declared kind, in declaration order."""
        return list(self._order)

    def reward_vars(self) -> list[str]:
        return list(self._reward)

    def required_parents(self, child: str) -> list[str]:
        return list(self._parents.get(child, ()))

    def parent_facts(self) -> dict[str, list[str]]:
        return {c: list(ps) for c, ps in self._parents.items()}

    def states(self) -> list[StateExists]:
        return [f for f in self._items if isinstance(f, StateExists)]

    def __str__(self):
        return "(and " + " ".join(str(f) for f in self._items) + ")"


def conjoin(delta: PartialDescription, f: Formula) -> PartialDescription:
    """Functional conjunction: a new description, ``delta`` left unchanged."""
    out = delta.snapshot()
    out.add(f)
    return out


def entails_membership(delta: PartialDescription, var: str, kind: SetKind, of: str | None = None) -> bool:
    return delta.entails(Membership(var, kind, of))


def trial_description(before: Mapping[str, int], action: Mapping[str, int],
                      outcome: Mapping[str, int], reward: float) -> StateExists:
    lits = {**before, **action, **outcome}
    return StateExists.of(lits, Eq(float(reward)))


def advice_content(better: Mapping[str, int], before: Mapping[str, int], reward: float,
                   known_actions: Iterable[str] | None = None) -> list[Formula]:
    """Monotonic content of "``better`` would have been better than what you did".

    Action variables of ``better`` not in ``known_actions`` are declared as
    actions; with ``known_actions`` omitted every mentioned action is.
    """
    out: list[Formula] = [StateExists.of({**better, **before}, Gt(float(reward)))]
    known = set(known_actions) if known_actions is not None else set()
    for a in better:
        if a not in known:
            out.append(Membership(a, SetKind.ACTION))
    return out


def holds_membership(dn: DecisionNetwork, f: Membership) -> bool:
    if f.var not in dn.kinds:
        return False
    if f.set in SET_KIND:
        return dn.kinds[f.var] is SET_KIND[f.set]
    if f.set is SetKind.REWARD:
        return f.var in dn.reward_domain
    return f.of in dn.kinds and f.var in dn.parents_of(f.of)


def has_witness(dn: DecisionNetwork, f: StateExists) -> bool:
    """Search for an atomic state extending the literals that meets the reward constraint.

    Only reward-domain variables not fixed by the literals are enumerated.
    """
    lits = f.assignment
    if any(v not in dn.kinds for v in lits):
        return False
    index = tuple(int(lits[v]) if v in lits else slice(None) for v in dn.reward_domain)
    rewards = dn.reward_tensor[index] if dn.reward_domain else dn.reward_tensor
    return bool(np.any(f.reward.holds(rewards)))


def satisfies(dn: DecisionNetwork, delta: Iterable[Formula]) -> bool:
    for f in delta:
        if isinstance(f, Membership):
            if not holds_membership(dn, f):
                return False
        elif not has_witness(dn, f):
            return False
    return True


def violations(dn: DecisionNetwork, delta: Iterable[Formula]) -> list[Formula]:
    return [f for f in delta
            if not (holds_membership(dn, f) if isinstance(f, Membership) else has_witness(dn, f))]
