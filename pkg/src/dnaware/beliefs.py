"""Beliefs over the parent set of each chance variable.

Each belief keeps a lattice of explored candidate parent sets, scored by
prior times Dirichlet marginal likelihood of the current epoch's trials.
Members are the alive nodes and their explored subsets; their probabilities
are kept conditional on membership.  Between lattice rebuilds a trial
updates every member's weight by one multiplicative factor.

Sets are stored as bitmasks over the belief's candidate list (sorted by
name), so "add one variable in lexicographic order" is "add the next bit".
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

from .inference import joint
from .language import PartialDescription
from .network import DecisionNetwork, Kind
from .reward import Vocabulary


class BudgetExceeded(RuntimeError):
    """The lattice grew past the configured node budget."""


@dataclass(frozen=True)
class HyperParams:
    rho: float = 0.1
    threshold: float = 0.001
    repack_scale: float = 20.0
    unexplored: float = 0.05
    alpha0: float = 0.5
    conservative: bool = True
    max_nodes: int | None = None

    def __post_init__(self):
        if not 0 < self.rho < 1:
            raise ValueError("rho must lie in (0, 1)")
        if self.threshold < 0 or self.repack_scale <= 0 or self.alpha0 <= 0:
            raise ValueError("threshold must be >= 0, scale and alpha0 > 0")
        if not 0 <= self.unexplored < 1:
            raise ValueError("unexplored mass must lie in [0, 1)")


# -- data -------------------------------------------------------------------------

class EpochData:
    """Trials seen since the last vocabulary change, one column per variable."""

    def __init__(self, names: Sequence[str]):
        self.names = tuple(names)
        self.col = {v: i for i, v in enumerate(self.names)}
        self._rows = np.zeros((64, len(self.names)), dtype=np.int64)
        self.n = 0

    def row(self, assignment: Mapping[str, int]) -> np.ndarray:
        return np.array([int(assignment[v]) for v in self.names], dtype=np.int64)

    def append(self, row: np.ndarray) -> None:
        if self.n == len(self._rows):
            self._rows = np.concatenate([self._rows, np.zeros_like(self._rows)])
        self._rows[self.n] = row
        self.n += 1

    @property
    def rows(self) -> np.ndarray:
        return self._rows[: self.n]

    def counts(self, v: str, parents: Sequence[str]) -> np.ndarray:
        """``n[j, i]``: trials with parent configuration ``j`` and ``v = i``."""
        k = len(parents)
        if self.n == 0:
            return np.zeros((2 ** k, 2))
        rows = self.rows
        j = rows[:, [self.col[p] for p in parents]] @ (1 << np.arange(k)) if k else 0
        flat = np.bincount(2 * j + rows[:, self.col[v]], minlength=2 ** (k + 1))
        return flat.reshape(2 ** k, 2).astype(float)


def log_marginal_likelihood(counts: np.ndarray, alpha: np.ndarray) -> float:
    """Dirichlet-multinomial evidence of a CPT, summed over parent configurations."""
    a_dot = alpha.sum(axis=1)
    n_dot = counts.sum(axis=1)
    return float(np.sum(gammaln(a_dot) - gammaln(n_dot + a_dot))
                 + np.sum(gammaln(counts + alpha) - gammaln(alpha)))


# -- pseudo-counts --------------------------------------------------------------

class UniformAlpha:
    def __init__(self, alpha0: float = 0.5):
        self.alpha0 = alpha0

    def __call__(self, v: str, parents: tuple[str, ...]) -> np.ndarray:
        return np.full((2 ** len(parents), 2), self.alpha0)


class RepackedAlpha:
    """Pseudo-counts ``K * P_prev(V=i, parents=j)`` from the previous network.

    Any table touching a variable the previous network lacks gets ``K / 2``
    per cell.  Actions are given a uniform prior for the joint.
    """

    def __init__(self, prev: DecisionNetwork, scale: float, new_vars: Iterable[str]):
        self.prev = prev
        self.scale = scale
        self.new = frozenset(new_vars)
        self._cache: dict[tuple[str, tuple[str, ...]], np.ndarray] = {}

    def __call__(self, v: str, parents: tuple[str, ...]) -> np.ndarray:
        key = (v, parents)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        k = len(parents)
        if v in self.new or any(p in self.new for p in parents) or v not in self.prev.kinds:
            out = np.full((2 ** k, 2), self.scale * 0.5)
        else:
            table = joint(self.prev, (v,) + parents, {}, action_prior=0.5)
            # axes (v, p0, ..., pk-1) -> rows in canonical parent order
            out = self.scale * table.transpose((0,) + tuple(reversed(range(1, k + 1)))).reshape(2, -1).T
            out = np.maximum(out, 1e-300)
        self._cache[key] = out
        return out


# -- priors over parent sets ------------------------------------------------------

class ProductPrior:
    """Each candidate is a parent independently with probability ``rho``."""

    def __init__(self, rho: float):
        self.log_in = math.log(rho)
        self.log_out = math.log1p(-rho)

    def logp(self, chosen: frozenset[str], candidates: Sequence[str]) -> float:
        k = len(chosen)
        return k * self.log_in + (len(candidates) - k) * self.log_out


@dataclass(frozen=True)
class FullSetTable:
    """Frozen full-powerset probabilities of one belief at some moment."""

    members: Mapping[frozenset, float]   # log of (1 - p) * conditional probability
    log_rest: float                      # log of each unexplored set's share

    def logp(self, s: frozenset) -> float:
        return self.members.get(s, self.log_rest)


class ExpandedPrior:
    """Old full-set probabilities extended by new variables (each in with ``rho``)."""

    def __init__(self, old: FullSetTable, new_vars: Iterable[str], rho: float):
        self.old = old
        self.new = frozenset(new_vars)
        self.log_in = math.log(rho)
        self.log_out = math.log1p(-rho)

    def logp(self, chosen: frozenset[str], candidates: Sequence[str]) -> float:
        news = [z for z in self.new if z in candidates]
        k = sum(1 for z in news if z in chosen)
        return k * self.log_in + (len(news) - k) * self.log_out + self.old.logp(chosen - self.new)


# -- one variable's belief ----------------------------------------------------------

def candidate_pool(v: str, kind: Kind, vocab: Vocabulary) -> tuple[str, ...]:
    """Type-legal parents: other before variables for a before variable, every other variable for an outcome."""
    if kind is Kind.BEFORE:
        pool = vocab.befores
    elif kind is Kind.OUTCOME:
        pool = vocab.actions + vocab.befores + vocab.outcomes
    else:
        return ()
    return tuple(sorted(x for x in pool if x != v))


class ParentBelief:
    def __init__(self, var: str, kind: Kind, candidates: Sequence[str], prior, alphas,
                 data: EpochData, hyper: HyperParams, effect_candidates: Iterable[str] = ()):
        self.var = var
        self.kind = kind
        self.candidates = tuple(candidates)
        self.bit = {x: i for i, x in enumerate(self.candidates)}
        self.prior = prior
        self.alphas = alphas
        self.data = data
        self.hyper = hyper
        self.required: frozenset[str] = frozenset()
        # outcomes need at least one action/outcome parent
        self.cause_mask = self.mask(x for x in effect_candidates if x in self.bit)
        self.nodes: dict[int, float] = {}
        self._stamp: dict[int, int] = {}
        self.members: list[int] = []
        self.logw = np.zeros(0)
        self.alive = np.zeros(0, dtype=bool)

    # sets <-> masks
    def mask(self, names: Iterable[str]) -> int:
        m = 0
        for x in names:
            m |= 1 << self.bit[x]
        return m

    def names(self, mask: int) -> tuple[str, ...]:
        return tuple(x for i, x in enumerate(self.candidates) if mask >> i & 1)

    @property
    def required_mask(self) -> int | None:
        if any(x not in self.bit for x in self.required):
            return None
        return self.mask(self.required)

    # scores
    def alpha(self, parents: tuple[str, ...]) -> np.ndarray:
        return self.alphas(self.var, parents)

    def log_score(self, mask: int) -> float:
        names = self.names(mask)
        lp = self.prior.logp(frozenset(names), self.candidates)
        if self.data.n == 0:
            return lp
        return lp + log_marginal_likelihood(self.data.counts(self.var, names), self.alpha(names))

    def _score(self, mask: int) -> float:
        if self._stamp.get(mask) != self.data.n:
            self.nodes[mask] = self.log_score(mask)
            self._stamp[mask] = self.data.n
        return self.nodes[mask]

    def roots(self) -> list[int]:
        req = self.required_mask
        if req is None:
            return []
        if self.kind is not Kind.OUTCOME or req & self.cause_mask:
            return [req]
        return [req | (1 << i) for i in range(len(self.candidates)) if self.cause_mask >> i & 1]

    # lattice construction
    def structural_update(self, threshold: float | None = None) -> None:
        c = self.hyper.threshold if threshold is None else threshold
        log_c = math.log(c) if c > 0 else -math.inf
        for m, w in zip(self.members, self.logw):
            if np.isfinite(w):
                self.nodes[m] = float(w)
                self._stamp[m] = self.data.n
        roots = self.roots()
        best = -math.inf
        for m in roots:
            best = max(best, self._score(m))
        created = set(roots)
        queue = deque(roots)
        expanded: set[int] = set()
        cap = self.hyper.max_nodes
        while queue:
            m = queue.popleft()
            if m in expanded or self._score(m) < log_c + best:
                continue
            expanded.add(m)
            for i in range(len(self.candidates)):
                child = m | (1 << i)
                if child == m or child in created:
                    continue
                created.add(child)
                s = self._score(child)
                if s > best:
                    best = s
                queue.append(child)
                if cap is not None and len(created) > cap:
                    raise BudgetExceeded(f"lattice of {self.var} exceeds {cap} nodes")
        alive = [m for m in created if self.nodes[m] >= log_c + best]
        members = set(alive)
        for m in created:
            if m not in members and any(m & a == m for a in alive):
                members.add(m)
        self.members = sorted(members, key=lambda m: (bin(m).count("1"), self._lex_key(m)))
        self.logw = np.array([self.nodes[m] for m in self.members])
        alive_set = set(alive)
        self.alive = np.array([m in alive_set for m in self.members], dtype=bool)
        self.lattice_size = len(created)
        self._pack()

    def _lex_key(self, mask: int) -> tuple[int, ...]:
        return tuple(i for i in range(len(self.candidates)) if mask >> i & 1)

    def _pack(self) -> None:
        cols = self.data.col
        n = len(self.members)
        self._w = np.zeros((n, len(self.data.names)), dtype=np.int64)
        offsets = np.zeros(n, dtype=np.int64)
        counts, alphas = [], []
        off = 0
        for r, m in enumerate(self.members):
            names = self.names(m)
            for k, x in enumerate(names):
                self._w[r, cols[x]] = 1 << k
            offsets[r] = off
            counts.append(self.data.counts(self.var, names).reshape(-1))
            alphas.append(self.alpha(names).reshape(-1))
            off += 2 ** (len(names) + 1)
        self._off = offsets
        self._counts = np.concatenate(counts) if counts else np.zeros(0)
        self._alpha = np.concatenate(alphas) if alphas else np.zeros(0)
        self._vcol = cols[self.var]

    # incremental updates
    def update_trial(self, row: np.ndarray) -> None:
        """Fold one trial (already appended to the epoch data) into every member."""
        if not self.members:
            return
        base = self._off + 2 * (self._w @ row)
        idx = base + row[self._vcol]
        self._counts[idx] += 1.0
        a = self._alpha
        num = self._counts[idx] + a[idx] - 1.0
        den = self._counts[base] + self._counts[base + 1] + a[base] + a[base + 1] - 1.0
        self.logw = self.logw + np.log(num) - np.log(den)

    def apply_required(self, required: Iterable[str]) -> bool:
        """Zero the members lacking a required parent; True when none survive."""
        self.required = frozenset(required) | self.required
        req = self.required_mask
        if req is None:
            self.logw = np.full_like(self.logw, -np.inf)
        else:
            keep = np.array([m & req == req for m in self.members], dtype=bool)
            self.logw = np.where(keep, self.logw, -np.inf)
        return not np.any(np.isfinite(self.logw))

    # queries
    def probabilities(self) -> np.ndarray:
        if not len(self.logw) or not np.any(np.isfinite(self.logw)):
            return np.zeros(len(self.logw))
        return np.exp(self.logw - logsumexp(self.logw))

    def distribution(self) -> dict[frozenset, float]:
        return {frozenset(self.names(m)): float(p) for m, p in zip(self.members, self.probabilities())}

    def full_set_table(self) -> FullSetTable:
        p = self.hyper.unexplored
        rest = 2 ** len(self.candidates) - len(self.members)
        with np.errstate(divide="ignore"):
            logs = np.log1p(-p) + np.log(self.probabilities())
        members = {frozenset(self.names(m)): float(w) for m, w in zip(self.members, logs)}
        log_rest = math.log(p / rest) if rest > 0 and p > 0 else -math.inf
        return FullSetTable(members, log_rest)

    def full_set_probability(self, parents: Iterable[str]) -> float:
        s = frozenset(parents)
        if not s <= set(self.candidates):
            return 0.0
        return math.exp(self.full_set_table().logp(s))

    def theta(self, parents: Sequence[str]) -> np.ndarray:
        parents = tuple(parents)
        n = self.data.counts(self.var, parents)
        a = self.alpha(parents)
        return (n[:, 1] + a[:, 1]) / (n.sum(axis=1) + a.sum(axis=1))

    def dump(self) -> str:
        lines = [f"{self.var}: {len(self.members)} members / {getattr(self, 'lattice_size', 0)} explored"]
        for m, p, al in zip(self.members, self.probabilities(), self.alive):
            lines.append(f"  {{{', '.join(self.names(m))}}} {p:.4g}{'' if al else ' (asleep)'}")
        return "\n".join(lines)


# -- the whole set of beliefs ----------------------------------------------------------

class BeliefSet:
    """Beliefs for every chance variable of one vocabulary epoch."""

    def __init__(self, vocab: Vocabulary, hyper: HyperParams, alphas=None,
                 priors: Mapping[str, object] | None = None):
        self.vocab = vocab
        self.hyper = hyper
        self.data = EpochData(vocab.variables)
        self.alphas = alphas if alphas is not None else UniformAlpha(hyper.alpha0)
        priors = dict(priors or {})
        causes = vocab.actions + vocab.outcomes
        self.beliefs: dict[str, ParentBelief] = {}
        for v in vocab.chance:
            kind = vocab.kind(v)
            self.beliefs[v] = ParentBelief(v, kind, candidate_pool(v, kind, vocab),
                                           priors.get(v) or ProductPrior(hyper.rho), self.alphas,
                                           self.data, hyper, causes)

    def __getitem__(self, v: str) -> ParentBelief:
        return self.beliefs[v]

    def __iter__(self):
        return iter(self.beliefs.values())

    def set_required(self, delta: PartialDescription) -> list[str]:
        """Apply declared parents; returns variables whose members all vanished."""
        emptied = []
        for v, b in self.beliefs.items():
            req = frozenset(delta.required_parents(v))
            if req - b.required:
                if b.apply_required(req):
                    emptied.append(v)
        return emptied

    def add_trial(self, assignment: Mapping[str, int]) -> None:
        row = self.data.row(assignment)
        self.data.append(row)
        for b in self.beliefs.values():
            b.update_trial(row)

    def structural_update(self, variables: Iterable[str] | None = None, threshold: float | None = None) -> None:
        for v in (self.beliefs if variables is None else variables):
            self.beliefs[v].structural_update(threshold)

    def node_count(self) -> int:
        return sum(len(b.members) for b in self.beliefs.values())

    def covered(self) -> set[str]:
        """Variables that appear in some member set with positive probability."""
        out: set[str] = set()
        for b in self.beliefs.values():
            for m, w in zip(b.members, b.logw):
                if np.isfinite(w):
                    out.update(b.names(m))
        return out

    def expand(self, vocab: Vocabulary, delta: PartialDescription, prev: DecisionNetwork) -> "BeliefSet":
        """Beliefs for an enlarged vocabulary; the current epoch's data is dropped."""
        new_vars = set(vocab.variables) - set(self.vocab.variables)
        h = self.hyper
        if h.conservative:
            self.structural_update()
            alphas = RepackedAlpha(prev, h.repack_scale, new_vars)
            priors = {v: ExpandedPrior(b.full_set_table(), new_vars, h.rho) for v, b in self.beliefs.items()}
        else:
            alphas, priors = UniformAlpha(h.alpha0), {}
        out = BeliefSet(vocab, h, alphas, priors)
        for v, b in out.beliefs.items():
            b.required = frozenset(delta.required_parents(v))
        out.structural_update()
        return out


def init_beliefs(vocab: Vocabulary, delta: PartialDescription, hyper: HyperParams) -> BeliefSet:
    out = BeliefSet(vocab, hyper)
    for v, b in out.beliefs.items():
        b.required = frozenset(delta.required_parents(v))
    out.structural_update()
    return out


def estimate_theta(beliefs: BeliefSet, structure: Mapping[str, Sequence[str]]) -> dict[str, np.ndarray]:
    return {v: beliefs[v].theta(structure[v]) for v in beliefs.beliefs}
