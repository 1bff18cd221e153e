"""Learning runs against a true network with a simulated expert.

Each step is one event: a domain trial, or an expert message (advice about
the previous trial, or the answer to the learner's pending question).
Messages cost the learner the trial it would otherwise have had.
"""

from __future__ import annotations

import csv
import io
import time
import weakref
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence, TextIO

import numpy as np

from .agent import AgentConfig, initial_model, make_learner
from .beliefs import BudgetExceeded
from .dialogue import Expert, Utterance
from .inference import eu_table, lex_argmax
from .network import BUILTIN, DecisionNetwork, Kind, builtin, load, sample, validate

COLUMNS = ("run", "step", "event", "reward", "cum_reward", "policy_error", "n_vars", "n_lattice_nodes", "ms")


# -- random problems -----------------------------------------------------------------

def generate_random_dn(seed: int, n_actions: int = 7, n_before: int = 7, n_outcomes: int = 7,
                       reward_vars: int = 5, reward_range: tuple[float, float] = (0.0, 50.0),
                       max_parents: int = 4) -> DecisionNetwork:
    """A random valid decision network.

    Edges respecting the kind order appear independently with probability
    ``2 / (n - 1)``; the result is then repaired so that every outcome has an
    action or outcome parent and every variable reaches the reward domain.
    The reward domain always contains the last outcome.
    """
    if min(n_actions, n_before, n_outcomes) < 1:
        raise ValueError("need at least one variable of each kind")
    if not 1 <= reward_vars <= n_before + n_outcomes:
        raise ValueError("reward domain size out of range")
    rng = np.random.default_rng(seed)
    acts = [f"A{i + 1}" for i in range(n_actions)]
    befs = [f"B{i + 1}" for i in range(n_before)]
    outs = [f"O{i + 1}" for i in range(n_outcomes)]
    order = acts + befs + outs
    n = len(order)
    q = min(1.0, 2.0 / (n - 1))
    kind = {**{a: Kind.ACTION for a in acts}, **{b: Kind.BEFORE for b in befs}, **{o: Kind.OUTCOME for o in outs}}
    pos = {v: i for i, v in enumerate(order)}

    def eligible(x: str, y: str) -> bool:
        if pos[x] >= pos[y] or kind[y] is Kind.ACTION:
            return False
        return kind[y] is Kind.OUTCOME or kind[x] is Kind.BEFORE

    parents: dict[str, list[str]] = {v: [] for v in befs + outs}
    for y in befs + outs:
        for x in order[: pos[y]]:
            if eligible(x, y) and len(parents[y]) < max_parents and rng.random() < q:
                parents[y].append(x)
    for o in outs:
        if not any(kind[p] is not Kind.BEFORE for p in parents[o]):
            causes = [x for x in order[: pos[o]] if kind[x] is not Kind.BEFORE]
            parents[o].append(causes[int(rng.integers(len(causes)))])
    others = [v for v in befs + outs[:-1]]
    reward = [outs[-1]] + [others[i] for i in rng.choice(len(others), size=reward_vars - 1, replace=False)]
    reward.sort(key=lambda v: pos[v])
    connected = set(reward)
    for x in reversed(order):
        if x in connected:
            continue
        kids = [y for y in order if y in parents and x in parents[y]]
        if any(k in connected for k in kids):
            connected.add(x)
            continue
        targets = [y for y in order if y in connected and eligible(x, y)]
        y = targets[int(rng.integers(len(targets)))]
        parents[y].append(x)
        connected.add(x)
    parents = {y: sorted(ps, key=lambda v: pos[v]) for y, ps in parents.items()}
    cpt = {y: rng.uniform(0.0, 1.0, size=2 ** len(ps)).round(3) for y, ps in parents.items()}
    lo, hi = reward_range
    table = rng.uniform(lo, hi, size=2 ** len(reward)).round(2)
    dn = DecisionNetwork(kind, parents, cpt, tuple(reward), table, f"random-{seed}")
    problems = validate(dn)
    if problems:
        raise AssertionError(f"generator produced an invalid network: {problems}")
    return dn


def resolve_dn(source: str, seed: int = 0) -> DecisionNetwork:
    if source == "random":
        return generate_random_dn(seed)
    if source in BUILTIN:
        return builtin(source)
    return load(source)


# -- policy error --------------------------------------------------------------------

_TRUE_TABLES: "weakref.WeakKeyDictionary[DecisionNetwork, tuple]" = weakref.WeakKeyDictionary()


def _true_tables(dn: DecisionNetwork):
    hit = _TRUE_TABLES.get(dn)
    if hit is None:
        eu, p = eu_table(dn, dn.befores, dn.actions)
        hit = (eu, p / p.sum(), eu.max(axis=1))
        _TRUE_TABLES[dn] = hit
    return hit


def agent_policy(agent: DecisionNetwork) -> np.ndarray:
    """The agent's optimal action index for each configuration of its before variables."""
    eu, _ = eu_table(agent, agent.befores, agent.actions)
    return np.array([lex_argmax(row, len(agent.actions)) for row in eu], dtype=np.int64)


def policy_error(true: DecisionNetwork, agent: DecisionNetwork) -> float:
    """Expected reward lost by following the agent's policy instead of the optimal one."""
    eu, p, best = _true_tables(true)
    tb, ta = true.befores, true.actions
    missing = [b for b in agent.befores if b not in tb] + [a for a in agent.actions if a not in ta]
    if missing:
        raise ValueError(f"agent variables unknown to the true network: {missing}")
    pol = agent_policy(agent)
    bplus = np.arange(2 ** len(tb))
    ctx = np.zeros_like(bplus)
    for k, b in enumerate(agent.befores):
        ctx |= ((bplus >> tb.index(b)) & 1) << k
    chosen = pol[ctx]
    full = np.zeros_like(chosen)
    for k, a in enumerate(agent.actions):
        full |= ((chosen >> k) & 1) << ta.index(a)
    return float(np.sum(p * (best - eu[bplus, full])))


# -- runs ------------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    dn: str = "barley"
    steps: int = 3000
    runs: int = 1
    seed: int = 0
    beta: float = 0.9
    gamma: int = 50
    pe_period: int = 50
    su_period: int = 100
    max_seconds: float | None = None
    check_validity: bool = False
    timing: bool = True

    def __post_init__(self):
        if self.steps <= 0 or self.runs <= 0 or self.pe_period <= 0 or self.su_period <= 0:
            raise ValueError("steps, runs and periods must be positive")
        if not 0 <= self.beta <= 1 or self.gamma < 0:
            raise ValueError("expert tolerance out of range")


@dataclass
class MetricsRow:
    run: int
    step: int
    event: str
    reward: float | None
    cum_reward: float
    policy_error: float | None
    n_vars: int
    n_lattice_nodes: int
    ms: float | None


@dataclass
class RunResult:
    rows: list[MetricsRow]
    transcript: list[str] = field(default_factory=list)
    violations: list[str] = field(default_factory=list)
    truncated: bool = False
    questions: int = 0
    learner: object = None


def run_once(true: DecisionNetwork, agent: AgentConfig, exp: ExperimentConfig, run: int) -> RunResult:
    env_rng, agent_rng, expert_rng = (np.random.default_rng(s)
                                      for s in np.random.SeedSequence([exp.seed, run]).spawn(3))
    if agent.su_period != exp.su_period:
        agent = replace(agent, su_period=exp.su_period)
    learner = make_learner(initial_model(true, agent.full_vocab), agent, agent_rng)
    learner.check_validity = exp.check_validity
    expert = Expert(true, exp.beta, exp.gamma, expert_rng)
    result = RunResult([], learner=learner)
    pending_q = None
    pending_advice = None
    cum = 0.0
    zeros = {a: 0 for a in true.actions}
    started = time.perf_counter()
    step = 0
    try:
        for step in range(1, exp.steps + 1):
            t0 = time.perf_counter()
            reward = None
            if pending_q is not None:
                ask = Utterance("learner", pending_q, step)
                expert.hear(ask)
                ans = expert.answer(pending_q, step)
                result.transcript += [str(ask), str(ans)]
                pending_q = learner.hear(ans.signal)
                event = "utterance"
            elif pending_advice is not None:
                utt = expert.advise(*pending_advice)
                result.transcript.append(str(utt))
                pending_advice = None
                pending_q = learner.hear(utt.signal)
                event = "utterance"
            else:
                pre, _ = sample(true, zeros, env_rng)
                before = {b: pre[b] for b in true.befores}
                chosen = learner.act(before, step)
                action = {a: int(chosen.get(a, 0)) for a in true.actions}
                state, reward = sample(true, action, env_rng, given=before)
                cum += reward
                pending_q = learner.observe(step, state, reward)
                expert.observe_trial(step, state, reward)
                witness = expert.should_advise(step)
                if witness is not None:
                    pending_advice = (step, witness)
                event = "trial"
            pe = policy_error(true, learner.dn) if step % exp.pe_period == 0 else None
            ms = (time.perf_counter() - t0) * 1000.0 if exp.timing else None
            result.rows.append(MetricsRow(run, step, event, reward, cum, pe, len(learner.vocab.variables),
                                          learner.node_count(), ms))
            if exp.max_seconds is not None and time.perf_counter() - started > exp.max_seconds:
                raise BudgetExceeded(f"run {run} exceeded {exp.max_seconds} s")
    except BudgetExceeded:
        result.truncated = True
        pe = policy_error(true, learner.dn)
        for s in range(step + 1, exp.steps + 1):
            if s % exp.pe_period == 0 or s == step + 1:
                result.rows.append(MetricsRow(run, s, "truncated", None, cum, pe, len(learner.vocab.variables),
                                              learner.node_count(), None))
    result.violations = list(learner.violations)
    result.questions = learner.questions
    return result


def run_simulation(exp: ExperimentConfig, agent: AgentConfig, true: DecisionNetwork | None = None
                   ) -> list[MetricsRow]:
    true = true if true is not None else resolve_dn(exp.dn, exp.seed)
    rows: list[MetricsRow] = []
    for run in range(exp.runs):
        rows.extend(run_once(true, agent, exp, run).rows)
    return rows


# -- output ------------------------------------------------------------------------------

def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.10g}"
    return str(x)


def emit_metrics(rows: Iterable[MetricsRow], out: TextIO | None = None) -> str | None:
    """Write the CSV header and one line per row; returns the text when ``out`` is None."""
    buf = io.StringIO() if out is None else out
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        w.writerow([_fmt(getattr(r, c)) for c in COLUMNS])
    return buf.getvalue() if out is None else None


def final_policy_errors(rows: Sequence[MetricsRow], at: int | None = None) -> dict[int, float]:
    """Policy error per run at step ``at`` (default: the last evaluated step)."""
    out: dict[int, float] = {}
    for r in rows:
        if r.policy_error is None:
            continue
        if at is None or r.step == at:
            out[r.run] = r.policy_error
    return out
