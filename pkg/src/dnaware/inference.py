"""Exact inference on decision networks by variable elimination.

Factors are ``(scope, table)`` pairs where ``table`` has one length-2 axis
per scope variable.  Variables that are not ancestors of the query or the
evidence are pruned before elimination; the rest are eliminated in
min-degree order.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .network import Assignment, DecisionNetwork, Kind, config_index, index_bits


class ImpossibleEvidence(ValueError):
    """Raised when the evidence has probability zero."""


Factor = tuple[tuple[str, ...], np.ndarray]


def _expand(table: np.ndarray, scope: Sequence[str], target: Sequence[str]) -> np.ndarray:
    pos = {v: i for i, v in enumerate(target)}
    order = sorted(range(len(scope)), key=lambda i: pos[scope[i]])
    t = table.transpose(order) if order != list(range(len(scope))) else table
    shape = [1] * len(target)
    for i in order:
        shape[pos[scope[i]]] = 2
    return t.reshape(shape)


def multiply(factors: Sequence[Factor], order: Sequence[str] | None = None) -> Factor:
    scope: list[str] = []
    seen = set()
    for s, _ in factors:
        for v in s:
            if v not in seen:
                seen.add(v)
                scope.append(v)
    if order is not None:
        scope = [v for v in order if v in seen]
    out = np.ones([1] * len(scope))
    for s, t in factors:
        out = out * _expand(t, s, scope)
    return tuple(scope), np.broadcast_to(out, [2] * len(scope))


def _restrict(scope: tuple[str, ...], table: np.ndarray, evidence: Assignment) -> Factor:
    if not any(v in evidence for v in scope):
        return scope, table
    index = tuple(int(evidence[v]) if v in evidence else slice(None) for v in scope)
    return tuple(v for v in scope if v not in evidence), table[index]


def network_factors(dn: DecisionNetwork, relevant: Iterable[str], evidence: Assignment,
                    action_prior: float | None = None) -> list[Factor]:
    factors = []
    for v in relevant:
        if dn.kinds[v] is Kind.ACTION:
            if action_prior is not None and v not in evidence:
                factors.append(((v,), np.array([1.0 - action_prior, action_prior])))
            continue
        scope = dn.parents_of(v) + (v,)
        factors.append(_restrict(scope, dn.cpt_tensor(v), evidence))
    return factors


def eliminate(factors: list[Factor], keep: Sequence[str]) -> np.ndarray:
    """Sum out every variable not in ``keep``; axes of the result follow ``keep``."""
    keep_set = set(keep)
    factors = [f for f in factors]
    hidden = set()
    for s, _ in factors:
        hidden.update(v for v in s if v not in keep_set)
    rank = {}
    for s, _ in factors:
        for v in s:
            rank.setdefault(v, len(rank))
    while hidden:
        best, best_deg = None, None
        for v in hidden:
            nb = set()
            for s, _ in factors:
                if v in s:
                    nb.update(s)
            deg = len(nb) - 1
            if best is None or deg < best_deg or (deg == best_deg and rank[v] < rank[best]):
                best, best_deg = v, deg
        hidden.discard(best)
        bucket = [f for f in factors if best in f[0]]
        factors = [f for f in factors if best not in f[0]]
        scope, table = multiply(bucket)
        axis = scope.index(best)
        factors.append((scope[:axis] + scope[axis + 1:], table.sum(axis=axis)))
    scope, table = multiply(factors)
    missing = [v for v in keep if v not in scope]
    if missing:
        scope = scope + tuple(missing)
        table = table.reshape(table.shape + (1,) * len(missing))
    return np.ascontiguousarray(np.broadcast_to(_expand(table, scope, keep), [2] * len(keep)))


def joint(dn: DecisionNetwork, keep: Sequence[str], evidence: Assignment | None = None,
          action_prior: float | None = None) -> np.ndarray:
    """Unnormalised ``P(keep, evidence | actions)`` as a tensor over ``keep``.

    Actions that are ancestors of the query must be in ``keep`` or
    ``evidence`` unless ``action_prior`` gives them a Bernoulli prior.
    """
    evidence = dict(evidence or {})
    keep = list(keep)
    overlap = [v for v in keep if v in evidence]
    if overlap:
        raise ValueError(f"variables both kept and observed: {overlap}")
    relevant = dn.ancestors(list(keep) + list(evidence))
    if action_prior is None:
        free = [a for a in relevant if dn.kinds[a] is Kind.ACTION and a not in evidence and a not in keep]
        if free:
            raise ValueError(f"actions {sorted(free)} must be assigned")
    relevant = [v for v in dn.variables if v in relevant]
    return eliminate(network_factors(dn, relevant, evidence, action_prior), keep)


def marginal(dn: DecisionNetwork, targets: Sequence[str], evidence: Assignment | None = None) -> np.ndarray:
    """Posterior over ``targets`` (one axis per target, in the given order)."""
    evidence = dict(evidence or {})
    for v in list(targets) + list(evidence):
        if v not in dn.kinds:
            raise KeyError(f"unknown variable {v}")
    free = [v for v in targets if v not in evidence]
    table = joint(dn, free, evidence)
    z = table.sum()
    if not z > 0:
        raise ImpossibleEvidence("evidence has probability zero")
    table = table / z
    if len(free) == len(targets):
        return table
    out = np.zeros([2] * len(targets))
    index = tuple(int(evidence[v]) if v in evidence else slice(None) for v in targets)
    out[index] = np.reshape(table, np.shape(out[index]))
    return out


def _reward_tensor_for(dn: DecisionNetwork, scope: Sequence[str], evidence: Assignment) -> np.ndarray:
    fixed = {v: evidence[v] for v in dn.reward_domain if v in evidence}
    _, table = _restrict(dn.reward_domain, dn.reward_tensor, fixed)
    free = tuple(v for v in dn.reward_domain if v not in fixed)
    return _expand(table, free, scope) if free else table


def expected_utility(dn: DecisionNetwork, action: Assignment, evidence: Assignment | None = None) -> float:
    missing = [a for a in dn.actions if a not in action]
    if missing:
        raise ValueError(f"action misses {missing}")
    ev = dict(evidence or {})
    ev.update({a: int(action[a]) for a in dn.actions})
    free = [v for v in dn.reward_domain if v not in ev]
    table = joint(dn, free, ev)
    z = table.sum()
    if not z > 0:
        raise ImpossibleEvidence("evidence has probability zero")
    return float((table * _reward_tensor_for(dn, free, ev)).sum() / z)


def lex_argmax(eu: np.ndarray, n: int, atol: float = 1e-12) -> int:
    """Index (canonical) of the maximum; ties go to the lexicographically least bit-vector."""
    top = eu.max()
    ties = np.flatnonzero(eu >= top - atol * max(1.0, abs(top)))
    if len(ties) == 1:
        return int(ties[0])
    return min((int(i) for i in ties), key=lambda i: index_bits(i, n))


def eu_over_actions(dn: DecisionNetwork, evidence: Assignment | None = None,
                    actions: Sequence[str] | None = None) -> np.ndarray:
    """EU of every joint action, flat in canonical order over ``actions``."""
    acts = list(dn.actions if actions is None else actions)
    ev = {k: v for k, v in (evidence or {}).items() if k not in acts}
    free_r = [v for v in dn.reward_domain if v not in ev]
    keep = acts + free_r
    table = joint(dn, keep, ev)
    reward = _reward_tensor_for(dn, keep, ev)
    num = (table * reward).reshape((2,) * len(acts) + (-1,)).sum(axis=-1)
    den = table.reshape((2,) * len(acts) + (-1,)).sum(axis=-1)
    if np.any(den <= 0):
        raise ImpossibleEvidence("evidence has probability zero")
    eu = num / den
    return eu.transpose(tuple(reversed(range(len(acts))))).reshape(-1)


def optimal_action(dn: DecisionNetwork, evidence: Assignment | None = None) -> tuple[dict[str, int], float]:
    eu = eu_over_actions(dn, evidence)
    best = lex_argmax(eu, len(dn.actions))
    bits = index_bits(best, len(dn.actions))
    return dict(zip(dn.actions, bits)), float(eu[best])


def eu_table(dn: DecisionNetwork, context: Sequence[str], actions: Sequence[str] | None = None
             ) -> tuple[np.ndarray, np.ndarray]:
    """EU of every action for every context configuration.

    Returns ``(eu, p_context)`` where ``eu[j, k]`` is the EU of action
    configuration ``k`` given context configuration ``j`` (both canonical
    flat indices) and ``p_context[j]`` is the context probability.  Context
    variables must be non-descendants of the actions.
    """
    acts = list(dn.actions if actions is None else actions)
    ctx = list(context)
    extra = [v for v in dn.reward_domain if v not in ctx]
    keep = ctx + acts + extra
    table = joint(dn, keep, {})
    reward = _expand(dn.reward_tensor, dn.reward_domain, keep) if dn.reward_domain else dn.reward_tensor
    shape = (2,) * (len(ctx) + len(acts)) + (-1,)
    num = (table * reward).reshape(shape).sum(axis=-1)
    den = table.reshape(shape).sum(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        eu = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    nc, na = len(ctx), len(acts)
    # canonical flattening: first variable least significant on each side
    perm = tuple(reversed(range(nc))) + tuple(nc + i for i in reversed(range(na)))
    eu = eu.transpose(perm).reshape(2 ** nc, 2 ** na)
    p_ctx = den.transpose(perm).reshape(2 ** nc, 2 ** na)[:, 0] if na else den.reshape(-1)
    return eu, p_ctx


def policy_table(dn: DecisionNetwork, context: Sequence[str]) -> np.ndarray:
    """Optimal action index (canonical over ``dn.actions``) per context configuration."""
    eu, _ = eu_table(dn, context)
    return np.array([lex_argmax(row, len(dn.actions)) for row in eu], dtype=np.int64)

