"""Choosing one dependency structure from the per-variable parent beliefs.

A total order over the vocabulary fixes which edges are possible.  Given an
order, edge probabilities are sums of member-set probabilities, and a 0/1
program picks edges that agree with them while every non-reward variable
keeps a child and every outcome keeps an action or outcome parent.  A greedy
search over adjacent transpositions of the order keeps the structure whose
parent sets are jointly most probable.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .beliefs import BeliefSet
from .language import PartialDescription
from .network import KIND_RANK, Kind
from .reward import Vocabulary


@dataclass(frozen=True)
class Structure:
    parents: dict[str, tuple[str, ...]]
    order: tuple[str, ...]
    score: float = 0.0


@dataclass(frozen=True)
class Infeasible:
    variables: tuple[str, ...]


@dataclass(frozen=True)
class UnknownEffects:
    var: str


# -- order constraints -------------------------------------------------------------

def _closure(m: np.ndarray) -> np.ndarray:
    c = m.copy()
    for k in range(len(c)):
        c |= c[:, k:k + 1] & c[k:k + 1, :]
    return c


@dataclass
class OrderConstraints:
    names: tuple[str, ...]
    hard: np.ndarray      # transitive closure of kind ranks and declared parents
    must: np.ndarray      # hard plus the admissible reward-last preferences
    soft: np.ndarray      # admitted reward-last pairs


def order_constraints(vocab: Vocabulary, delta: PartialDescription) -> OrderConstraints:
    names = vocab.variables
    idx = {v: i for i, v in enumerate(names)}
    n = len(names)
    rank = np.array([KIND_RANK[vocab.kind(v)] for v in names])
    base = rank[:, None] < rank[None, :]
    for y in names:
        for x in delta.required_parents(y):
            if x in idx:
                base[idx[x], idx[y]] = True
    hard = _closure(base)
    must = hard.copy()
    soft = np.zeros((n, n), dtype=bool)
    reward = set(vocab.reward_domain)
    for x in names:
        if x in reward:
            continue
        for y in names:
            if y not in reward or rank[idx[x]] != rank[idx[y]]:
                continue
            i, j = idx[x], idx[y]
            if must[j, i]:
                continue  # declared parents force the reverse
            soft[i, j] = True
            if not must[i, j]:
                must |= (must[:, i] | (np.arange(n) == i))[:, None] & (must[j, :] | (np.arange(n) == j))[None, :]
    return OrderConstraints(names, hard, must, soft)


def check_order(order: Sequence[str], vocab: Vocabulary, delta: PartialDescription) -> str | None:
    """None when ``order`` meets every ordering condition, else the first violation."""
    if sorted(order) != sorted(vocab.variables):
        return "order does not cover the vocabulary"
    pos = {v: i for i, v in enumerate(order)}
    for y in order:
        for x in delta.required_parents(y):
            if x in pos and pos[x] > pos[y]:
                return f"(i) declared parent {x} after {y}"
    for a in vocab.actions:
        for x in order:
            if vocab.kind(x) is not Kind.ACTION and pos[x] < pos[a]:
                return f"(ii) {x} before action {a}"
    for o in vocab.outcomes:
        if not any(pos[a] < pos[o] for a in vocab.actions):
            return f"(iii) outcome {o} has no action before it"
    for b in vocab.befores:
        for o in vocab.outcomes:
            if pos[o] < pos[b]:
                return f"(iv) outcome {o} before {b}"
    cons = order_constraints(vocab, delta)
    for i, j in zip(*np.nonzero(cons.soft)):
        x, y = cons.names[i], cons.names[j]
        if pos[y] < pos[x]:
            return f"(v) reward variable {y} before {x}"
    return None


def random_order(cons: OrderConstraints, rng: np.random.Generator) -> list[int]:
    """A uniformly drawn ready variable at each step of a topological sort."""
    n = len(cons.names)
    must = cons.must
    placed = np.zeros(n, dtype=bool)
    order = []
    for _ in range(n):
        ready = [j for j in range(n) if not placed[j] and not np.any(must[:, j] & ~placed)]
        j = ready[int(rng.integers(len(ready)))]
        placed[j] = True
        order.append(j)
    return order


# -- edge probabilities and the 0/1 program ----------------------------------------

def raw_edge_probs(beliefs: BeliefSet, names: Sequence[str]) -> np.ndarray:
    """``E[x, y]``: probability that ``x`` is in the parent set of ``y``, ignoring order."""
    idx = {v: i for i, v in enumerate(names)}
    e = np.zeros((len(names), len(names)))
    for y, b in beliefs.beliefs.items():
        probs = b.probabilities()
        for m, p in zip(b.members, probs):
            if p > 0:
                for x in b.names(m):
                    e[idx[x], idx[y]] += p
    return np.clip(e, 0.0, 1.0)


def edge_probs(beliefs: BeliefSet, order: Sequence[str]) -> np.ndarray:
    """Edge probabilities over ``order``'s variables, zero unless the parent comes first."""
    names = list(order)
    e = raw_edge_probs(beliefs, names)
    return np.triu(e, 1)


def _argmax_lex(values: np.ndarray, allowed: np.ndarray, name_rank: np.ndarray) -> int:
    v = np.where(allowed, values, -np.inf)
    top = v.max()
    ties = np.flatnonzero(v == top)
    return int(ties[np.argmin(name_rank[ties])])


def relaxed_solution(e: np.ndarray, nonreward: np.ndarray, outcome: np.ndarray, cause: np.ndarray,
                     name_rank: np.ndarray) -> tuple[np.ndarray, list[int]]:
    """Optimum of the relaxed program, integral by construction, plus uncoverable variables."""
    allowed = e > 0
    pa = (e > 0.5).astype(float)
    bad = []
    for x in np.flatnonzero(nonreward):
        if pa[x].any():
            continue
        if not allowed[x].any():
            bad.append(int(x))
            continue
        pa[x, _argmax_lex(e[x], allowed[x], name_rank)] = 1.0
    for o in np.flatnonzero(outcome):
        if (pa[:, o] * cause).any():
            continue
        ok = allowed[:, o] & cause
        if not ok.any():
            bad.append(int(o))
            continue
        pa[_argmax_lex(e[:, o], ok, name_rank), o] = 1.0
    return pa, bad


def round_solution(pa_star: np.ndarray, e: np.ndarray, nonreward: np.ndarray, outcome: np.ndarray,
                   cause: np.ndarray, name_rank: np.ndarray) -> np.ndarray:
    """Two-phase rounding of a (possibly fractional) relaxed solution."""
    allowed = e > 0
    pa = (pa_star >= 0.5) & allowed
    for x in np.flatnonzero(nonreward):
        if allowed[x].any():
            pa[x, _argmax_lex(pa_star[x], allowed[x], name_rank)] = True
    for o in np.flatnonzero(outcome):
        if not (pa[:, o] & cause).any():
            ok = allowed[:, o] & cause
            if ok.any():
                pa[_argmax_lex(e[:, o], ok, name_rank), o] = True
    return pa


def objective(pa: np.ndarray, e: np.ndarray) -> float:
    return float(np.sum(e * pa + (1.0 - e) * (1.0 - pa)))


def solve_structure(e: np.ndarray, kinds: Sequence[Kind], in_reward: Sequence[bool],
                    names: Sequence[str] | None = None) -> np.ndarray | Infeasible:
    """Edge matrix maximising agreement with ``e`` under the covering constraints.

    ``e[x, y]`` must already be zero for pairs the order forbids.
    """
    n = len(kinds)
    names = list(names) if names is not None else [str(i) for i in range(n)]
    name_rank = np.argsort(np.argsort(names))
    kinds = list(kinds)
    nonreward = ~np.asarray(in_reward, dtype=bool)
    outcome = np.array([k is Kind.OUTCOME for k in kinds])
    cause = np.array([k in (Kind.ACTION, Kind.OUTCOME) for k in kinds])
    pa_star, bad = relaxed_solution(e, nonreward, outcome, cause, name_rank)
    if bad:
        return Infeasible(tuple(names[i] for i in sorted(set(bad))))
    return round_solution(pa_star, e, nonreward, outcome, cause, name_rank)


# -- search over orders ---------------------------------------------------------------

class _Evaluator:
    def __init__(self, beliefs: BeliefSet, vocab: Vocabulary):
        self.names = vocab.variables
        self.n = len(self.names)
        kinds = [vocab.kind(v) for v in self.names]
        self.kinds = kinds
        reward = set(vocab.reward_domain)
        self.nonreward = np.array([v not in reward for v in self.names])
        self.outcome = np.array([k is Kind.OUTCOME for k in kinds])
        self.cause = np.array([k in (Kind.ACTION, Kind.OUTCOME) for k in kinds])
        self.name_rank = np.argsort(np.argsort(self.names))
        self.raw = raw_edge_probs(beliefs, self.names)
        self.tables = {v: b.full_set_table() for v, b in beliefs.beliefs.items()}
        self.chance = [i for i, v in enumerate(self.names) if v in self.tables]

    def evaluate(self, order: Sequence[int]):
        pos = np.empty(self.n, dtype=np.int64)
        pos[list(order)] = np.arange(self.n)
        e = np.where(pos[:, None] < pos[None, :], self.raw, 0.0)
        pa_star, bad = relaxed_solution(e, self.nonreward, self.outcome, self.cause, self.name_rank)
        if bad:
            return (-len(set(bad)), -np.inf), None
        pa = round_solution(pa_star, e, self.nonreward, self.outcome, self.cause, self.name_rank)
        total = 0.0
        for y in self.chance:
            ps = frozenset(self.names[i] for i in np.flatnonzero(pa[:, y]))
            total += self.tables[self.names[y]].logp(ps)
        return (0, total), pa


def estimate_structure(beliefs: BeliefSet, vocab: Vocabulary, delta: PartialDescription,
                       rng: np.random.Generator, start: Sequence[str] | None = None
                       ) -> Structure | Infeasible | UnknownEffects:
    """Greedy adjacent-transposition search over valid orders.

    ``start`` warm-starts the search when it is still a valid order of the
    same vocabulary; otherwise the start is a random valid order.
    """
    reward = set(vocab.reward_domain)
    covered = beliefs.covered()
    for x in vocab.variables:
        if x not in reward and x not in covered:
            return UnknownEffects(x)
    cons = order_constraints(vocab, delta)
    idx = {v: i for i, v in enumerate(cons.names)}
    cur = None
    if start is not None and sorted(start) == sorted(cons.names):
        cand = [idx[v] for v in start]
        pos = np.empty(len(cand), dtype=np.int64)
        pos[cand] = np.arange(len(cand))
        if not np.any(cons.must & (pos[:, None] > pos[None, :])):
            cur = cand
    if cur is None:
        cur = random_order(cons, rng)
    ev = _Evaluator(beliefs, vocab)
    cur_score, cur_pa = ev.evaluate(cur)
    while True:
        best = None
        for i in range(len(cur) - 1):
            a, b = cur[i], cur[i + 1]
            if cons.must[a, b]:
                continue
            nb = cur[:i] + [b, a] + cur[i + 2:]
            s, pa = ev.evaluate(nb)
            if s > (best[0] if best else cur_score):
                best = (s, nb, pa)
        if best is None:
            break
        cur_score, cur, cur_pa = best
    if cur_pa is None:
        pos = np.empty(ev.n, dtype=np.int64)
        pos[cur] = np.arange(ev.n)
        e = np.where(pos[:, None] < pos[None, :], ev.raw, 0.0)
        _, bad = relaxed_solution(e, ev.nonreward, ev.outcome, ev.cause, ev.name_rank)
        return Infeasible(tuple(ev.names[i] for i in sorted(set(bad))))
    parents = {}
    for y in ev.chance:
        parents[ev.names[y]] = tuple(sorted(ev.names[i] for i in np.flatnonzero(cur_pa[:, y])))
    return Structure(parents, tuple(ev.names[i] for i in cur), float(cur_score[1]))
