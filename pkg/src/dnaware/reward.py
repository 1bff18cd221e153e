"""Vocabulary and reward-function estimation from a partial description.

Every state constraint says some atomic state extending its literals has a
reward equal to (or above) a value.  Only the projection of that state onto
the estimated reward domain matters, so each constraint becomes a choice of
one reward-domain configuration among the completions of its fixed
literals.  A backtracking search picks those witnesses so that no
configuration is given two different rewards and every strict lower bound
has a witness that can exceed it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .language import Eq, PartialDescription, StateExists
from .network import Kind

INDIFFERENCE = 0.1
_TOL = 1e-9


@dataclass(frozen=True)
class Vocabulary:
    befores: tuple[str, ...] = ()
    actions: tuple[str, ...] = ()
    outcomes: tuple[str, ...] = ()
    reward_domain: tuple[str, ...] = ()

    @property
    def chance(self) -> tuple[str, ...]:
        return self.befores + self.outcomes

    @property
    def variables(self) -> tuple[str, ...]:
        return self.actions + self.befores + self.outcomes

    def kind(self, v: str) -> Kind:
        if v in self.actions:
            return Kind.ACTION
        if v in self.befores:
            return Kind.BEFORE
        if v in self.outcomes:
            return Kind.OUTCOME
        raise KeyError(v)

    def kinds(self) -> dict[str, Kind]:
        return {v: self.kind(v) for v in self.variables}


def estimate_vocabulary(delta: PartialDescription) -> Vocabulary:
    """The smallest vocabulary mentioned by the description's membership atoms."""
    by_kind: dict[Kind, list[str]] = {k: [] for k in Kind}
    for v in delta.declared():
        by_kind[delta.kind_of(v)].append(v)
    return Vocabulary(tuple(by_kind[Kind.BEFORE]), tuple(by_kind[Kind.ACTION]),
                      tuple(by_kind[Kind.OUTCOME]), tuple(delta.reward_vars()))


@dataclass
class RewardSolution:
    domain: tuple[str, ...]
    equalities: dict[int, float]
    lower_bounds: dict[int, float]
    completed: np.ndarray = field(repr=False)


def _candidates(domain: Sequence[str], literals: dict[str, int]) -> tuple[int, ...]:
    """Canonical indices of all completions, lexicographically smallest first."""
    base = 0
    free_bits = []
    for k, v in enumerate(domain):
        if v in literals:
            base |= int(literals[v]) << k
        else:
            free_bits.append(k)
    nf = len(free_bits)
    out = []
    for m in range(2 ** nf):
        idx = base
        for pos, k in enumerate(free_bits):
            # first domain variable is the most significant in lexicographic order
            if (m >> (nf - 1 - pos)) & 1:
                idx |= 1 << k
        out.append(idx)
    return tuple(out)


class RewardSolver:
    """Incremental front end: remembers preprocessed constraints per domain."""

    def __init__(self, domain: Sequence[str] = ()):
        self.domain = tuple(domain)
        self._seen = 0
        self._eq: dict[tuple[int, ...], list[float]] = {}
        self._gt: dict[tuple[int, ...], float] = {}

    def _absorb(self, states: Sequence[StateExists]) -> None:
        for f in states:
            cands = _candidates(self.domain, f.assignment)
            r = float(f.reward.value)
            if isinstance(f.reward, Eq):
                vals = self._eq.setdefault(cands, [])
                if not any(abs(r - x) <= _TOL for x in vals):
                    vals.append(r)
            else:
                prev = self._gt.get(cands)
                if prev is None or r > prev:
                    self._gt[cands] = r

    def solve(self, delta: PartialDescription, domain: Sequence[str] | None = None) -> RewardSolution | None:
        domain = self.domain if domain is None else tuple(domain)
        if domain != self.domain:
            self.__init__(domain)
        states = delta.states()
        self._absorb(states[self._seen:])
        self._seen = len(states)
        return _search(self.domain, self._eq, self._gt)


def _search(domain, eq_cons, gt_cons) -> RewardSolution | None:
    eq_list = [(c, r) for c, rs in eq_cons.items() for r in rs]
    # fully determined constraints first, then the rest in arrival order
    eq_list.sort(key=lambda cr: len(cr[0]) != 1)
    gt_list = list(gt_cons.items())
    eq: dict[int, float] = {}

    def gt_ok() -> bool:
        for cands, r in gt_list:
            if not any((y not in eq) or eq[y] > r for y in cands):
                return False
        return True

    def alive(start: int) -> bool:
        for cands, r in eq_list[start:]:
            if not any((y not in eq) or abs(eq[y] - r) <= _TOL for y in cands):
                return False
        return gt_ok()

    def dfs(i: int) -> bool:
        while i < len(eq_list):
            cands, r = eq_list[i]
            if any(y in eq and abs(eq[y] - r) <= _TOL for y in cands):
                i += 1  # already witnessed; committing elsewhere cannot help
                continue
            for y in cands:
                if y in eq:
                    continue
                eq[y] = r
                if alive(i + 1) and dfs(i + 1):
                    return True
                del eq[y]
            return False
        return gt_ok()

    if not dfs(0):
        return None
    lower: dict[int, float] = {}
    for cands, r in gt_list:
        if any(y in eq and eq[y] > r for y in cands):
            continue
        y = next(y for y in cands if y not in eq)
        lower[y] = max(lower.get(y, r), r)
    return RewardSolution(domain, dict(eq), lower, _complete(len(domain), eq, lower))


def _complete(m: int, eq: dict[int, float], lower: dict[int, float], c: float = INDIFFERENCE) -> np.ndarray:
    table = np.zeros(2 ** m)
    for y, lb in lower.items():
        table[y] = lb + c
    for y, r in eq.items():
        table[y] = r
    return table


def solve_reward(delta: PartialDescription, vocab: Vocabulary,
                 domain: Sequence[str] | None = None) -> RewardSolution | None:
    """Consistent witnesses for every state constraint, or None if there are none."""
    return RewardSolver(vocab.reward_domain if domain is None else domain).solve(delta)


def complete_reward(sol: RewardSolution, c: float = INDIFFERENCE) -> np.ndarray:
    return _complete(len(sol.domain), sol.equalities, sol.lower_bounds, c)


def reward_update(delta: PartialDescription, vocab: Vocabulary) -> np.ndarray | None:
    """Completed reward table, or None when the learner must ask about the reward domain."""
    sol = solve_reward(delta, vocab)
    return None if sol is None else sol.completed

