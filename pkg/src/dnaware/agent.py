"""Learning agents.

``Learner`` revises its whole network after every piece of evidence:
vocabulary and reward from the description, parent beliefs from trials and
declared parents, one structure from the beliefs, then CPTs from counts.
``BaselineLearner`` keeps its initial structure and vocabulary and only
re-estimates CPTs and average rewards.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from .beliefs import BeliefSet, HyperParams, init_beliefs
from .dialogue import AdviceSignal, Answer, Interpretation, detect_misunderstanding, interpret_advice, signal_content
from .inference import optimal_action
from .language import (Formula, Membership, MissingB, PartialDescription, Question, SetKind, UnforeseenReward,
                       WhichEffect, satisfies, trial_description, violations)
from .network import DecisionNetwork, Kind, config_index, validate
from .reward import RewardSolver, Vocabulary, estimate_vocabulary
from .structure import Infeasible, Structure, UnknownEffects, estimate_structure

PRESETS = ("default", "baseline", "full-vocab", "slightly-min", "maximal", "non-con", "decay")


@dataclass(frozen=True)
class AgentConfig:
    name: str = "default"
    full_vocab: bool = False
    maximal: bool = False
    baseline: bool = False
    hyper: HyperParams = field(default_factory=HyperParams)
    epsilon: float = 0.3
    decay: float = 1.0
    su_period: int = 100
    max_threshold_cuts: int = 4

    @classmethod
    def preset(cls, name: str) -> "AgentConfig":
        if name == "default":
            return cls(name)
        if name == "baseline":
            return cls(name, baseline=True)
        if name == "full-vocab":
            return cls(name, full_vocab=True)
        if name == "slightly-min":
            return cls(name, hyper=HyperParams(rho=0.5))
        if name == "maximal":
            return cls(name, maximal=True, hyper=HyperParams(rho=0.5, threshold=0.0, max_nodes=200_000))
        if name == "non-con":
            return cls(name, hyper=HyperParams(conservative=False))
        if name == "decay":
            return cls(name, decay=0.999)
        raise ValueError(f"unknown agent variant {name!r}; choose from {', '.join(PRESETS)}")


@dataclass(frozen=True)
class InitialModel:
    """Starting knowledge: the conjuncts the learner begins with and, for the baseline, its network."""

    conjuncts: tuple[Formula, ...]
    dn: DecisionNetwork | None = None


def _declarations(kinds: Mapping[str, Kind], reward: tuple[str, ...]) -> tuple[Formula, ...]:
    sk = {Kind.ACTION: SetKind.ACTION, Kind.BEFORE: SetKind.BEFORE, Kind.OUTCOME: SetKind.OUTCOME}
    out: list[Formula] = [Membership(v, sk[k]) for v, k in kinds.items()]
    out += [Membership(v, SetKind.REWARD) for v in reward]
    return tuple(out)


BARLEY_START = {
    "kinds": {"Grain": Kind.ACTION, "Fertiliser": Kind.ACTION, "SoilType": Kind.BEFORE,
              "Precipitation": Kind.BEFORE, "Nitrogen": Kind.OUTCOME, "GrossCrops": Kind.OUTCOME,
              "Yield": Kind.OUTCOME, "Protein": Kind.OUTCOME},
    "parents": {"SoilType": (), "Precipitation": (), "Nitrogen": ("SoilType", "Precipitation", "Fertiliser"),
                "GrossCrops": ("Nitrogen",), "Yield": ("GrossCrops",), "Protein": ("Nitrogen", "Grain")},
    "reward": ("Yield", "Protein"),
}


def initial_model(true_dn: DecisionNetwork, full_vocab: bool = False) -> InitialModel:
    """The starting point for learning ``true_dn``.

    The bundled crop network starts from a fixed partial model.  Other
    networks start from one reward outcome and one action that affects it.
    A full vocabulary start declares every variable of ``true_dn`` but keeps
    the small reward domain.
    """
    if true_dn.name == "barley" and all(v in true_dn.kinds for v in BARLEY_START["kinds"]):
        kinds, parents, reward = BARLEY_START["kinds"], BARLEY_START["parents"], BARLEY_START["reward"]
    else:
        o = next(v for v in true_dn.reward_domain if true_dn.kinds[v] is Kind.OUTCOME)
        anc = true_dn.ancestors([o])
        a = next(v for v in true_dn.actions if v in anc)
        kinds, parents, reward = {a: Kind.ACTION, o: Kind.OUTCOME}, {o: (a,)}, (o,)
    cpt = {v: np.full(2 ** len(ps), 0.5) for v, ps in parents.items()}
    dn0 = DecisionNetwork(kinds, parents, cpt, reward, np.zeros(2 ** len(reward)), "start")
    if full_vocab:
        kinds = dict(true_dn.kinds)
        return InitialModel(_declarations(kinds, reward), None)
    return InitialModel(_declarations(dn0.kinds, reward), dn0)


@dataclass
class TrialRecord:
    before: dict[str, int]
    action: dict[str, int]
    outcome: dict[str, int]
    reward: float


class Learner:
    def __init__(self, start: InitialModel, config: AgentConfig, rng: np.random.Generator):
        self.config = config
        self.rng = rng
        self.delta = PartialDescription(start.conjuncts)
        self.vocab = self._vocabulary()
        self.beliefs: BeliefSet = init_beliefs(self.vocab, self.delta, config.hyper)
        self.reward_solver = RewardSolver(self.vocab.reward_domain)
        self.reward_table = np.zeros(2 ** len(self.vocab.reward_domain))
        self.order: tuple[str, ...] | None = None
        self.trials: dict[int, TrialRecord] = {}
        self.history: list[Interpretation] = []
        self.trials_since_su = 0
        self.violations: list[str] = []
        self.check_validity = False
        self.questions = 0
        self.dn: DecisionNetwork | None = None
        q = self._update(structural=True)
        if q is not None or self.dn is None:
            raise RuntimeError("initial model admits no valid network")

    # -- vocabulary ---------------------------------------------------------------
    def _vocabulary(self) -> Vocabulary:
        v = estimate_vocabulary(self.delta)
        if self.config.maximal:
            v = replace(v, reward_domain=v.chance)
        return v

    @property
    def known(self) -> set[str]:
        return set(self.vocab.variables)

    # -- acting -------------------------------------------------------------------
    def act(self, before: Mapping[str, int], step: int) -> dict[str, int]:
        eps = self.config.epsilon * self.config.decay ** step
        acts = self.dn.actions
        if self.rng.random() < eps:
            bits = self.rng.integers(0, 2, size=len(acts))
            return dict(zip(acts, (int(b) for b in bits)))
        action, _ = optimal_action(self.dn, {b: before[b] for b in self.dn.befores})
        return action

    # -- evidence -----------------------------------------------------------------
    def observe(self, t: int, state: Mapping[str, int], reward: float) -> Question | None:
        """A trial: ``state`` holds at least the learner's own variables."""
        v = self.vocab
        rec = TrialRecord({b: int(state[b]) for b in v.befores}, {a: int(state[a]) for a in v.actions},
                          {o: int(state[o]) for o in v.outcomes}, float(reward))
        self.trials[t] = rec
        self.delta.add(trial_description(rec.before, rec.action, rec.outcome, rec.reward))
        self.beliefs.add_trial({**rec.before, **rec.action, **rec.outcome})
        self.trials_since_su += 1
        return self._update()

    def hear(self, signal: AdviceSignal | Answer) -> Question | None:
        if isinstance(signal, AdviceSignal):
            rec = self.trials[signal.time]
            formulas, _ = signal_content(signal, self.known, rec.before, rec.reward, self.vocab.actions)
            reading = interpret_advice(signal, rec.before)
            clash = detect_misunderstanding(self.history, reading)
            self.history.append(reading)
            self.delta.extend(formulas)
            if clash is not None:
                self.questions += 1
                return MissingB(*clash)
            return self._update()
        formulas, _ = signal_content(signal, self.known)
        self.delta.extend(formulas)
        if isinstance(signal.question, MissingB) and not formulas:
            # nothing distinguishes the two situations; stop comparing those readings
            self.history = [h for h in self.history if h.time != signal.question.t - signal.question.n]
        return self._update()

    # -- the update pipeline ------------------------------------------------------------
    def _ask(self, q: Question) -> Question:
        self.questions += 1
        return q

    def _update(self, structural: bool = False) -> Question | None:
        vocab = self._vocabulary()
        new_vars = set(vocab.variables) - self.known
        if new_vars:
            if any(vocab.kind(v) is Kind.BEFORE for v in new_vars):
                self.history = []
            self.beliefs = self.beliefs.expand(vocab, self.delta, self.dn)
            self.trials_since_su = 0
            structural = True
            self.order = None
        self.vocab = vocab
        sol = self.reward_solver.solve(self.delta, vocab.reward_domain)
        if sol is None:
            return self._ask(UnforeseenReward(vocab.reward_domain))
        self.reward_table = sol.completed
        emptied = self.beliefs.set_required(self.delta)
        if self.trials_since_su >= self.config.su_period:
            structural = True
        if structural:
            self.beliefs.structural_update()
            self.trials_since_su = 0
        elif emptied:
            self.beliefs.structural_update(emptied)
        result = self._estimate(structural)
        if isinstance(result, UnknownEffects):
            return self._ask(WhichEffect(result.var))
        if not isinstance(result, Structure):
            return None
        self.order = result.order
        self.dn = self._network(result)
        if self.check_validity:
            self._check()
        return None

    def _estimate(self, structural: bool):
        start = None if structural else self.order
        result = estimate_structure(self.beliefs, self.vocab, self.delta, self.rng, start)
        if isinstance(result, Infeasible) and not structural:
            self.beliefs.structural_update()
            self.trials_since_su = 0
            result = estimate_structure(self.beliefs, self.vocab, self.delta, self.rng)
        c = self.config.hyper.threshold
        cuts = 0
        while isinstance(result, Infeasible) and cuts < self.config.max_threshold_cuts and c > 0:
            c *= 0.1
            cuts += 1
            self.beliefs.structural_update(threshold=c)
            result = estimate_structure(self.beliefs, self.vocab, self.delta, self.rng)
        if isinstance(result, Infeasible):
            # every order strands these variables: ask what they affect
            return UnknownEffects(result.variables[0])
        return result

    def _network(self, s: Structure) -> DecisionNetwork:
        cpt = {v: self.beliefs[v].theta(ps) for v, ps in s.parents.items()}
        return DecisionNetwork(self.vocab.kinds(), s.parents, cpt, self.vocab.reward_domain,
                               self.reward_table, "learned")

    def _check(self) -> None:
        problems = validate(self.dn)
        if problems:
            self.violations.extend(problems)
        if not satisfies(self.dn, self.delta):
            self.violations.extend(str(f) for f in violations(self.dn, self.delta))

    def node_count(self) -> int:
        return self.beliefs.node_count()


class BaselineLearner:
    """Fixed structure and vocabulary; CPTs from counts and rewards from averages."""

    def __init__(self, start: InitialModel, config: AgentConfig, rng: np.random.Generator):
        if start.dn is None:
            raise ValueError("the baseline needs an initial network")
        self.config = config
        self.rng = rng
        self.base = start.dn
        self.dn = start.dn
        self.vocab = Vocabulary(start.dn.befores, start.dn.actions, start.dn.outcomes, start.dn.reward_domain)
        m = len(start.dn.reward_domain)
        self.reward_sum = np.zeros(2 ** m)
        self.reward_n = np.zeros(2 ** m)
        self.n1 = {v: np.zeros(2 ** len(start.dn.parents_of(v))) for v in start.dn.chance}
        self.n = {v: np.zeros(2 ** len(start.dn.parents_of(v))) for v in start.dn.chance}
        self.violations: list[str] = []
        self.check_validity = False
        self.questions = 0

    act = Learner.act

    def observe(self, t: int, state: Mapping[str, int], reward: float) -> None:
        dn = self.base
        y = config_index([state[v] for v in dn.reward_domain])
        self.reward_sum[y] += reward
        self.reward_n[y] += 1
        a0 = self.config.hyper.alpha0
        cpt = {}
        for v in dn.chance:
            j = config_index([state[p] for p in dn.parents_of(v)])
            self.n[v][j] += 1
            self.n1[v][j] += state[v]
            cpt[v] = (self.n1[v] + a0) / (self.n[v] + 2 * a0)
        table = np.divide(self.reward_sum, self.reward_n, out=np.zeros_like(self.reward_sum), where=self.reward_n > 0)
        self.dn = DecisionNetwork(dn.kinds, dn.parents, cpt, dn.reward_domain, table, "baseline")
        return None

    def hear(self, signal) -> None:
        return None

    def node_count(self) -> int:
        return 0


def make_learner(start: InitialModel, config: AgentConfig, rng: np.random.Generator):
    return BaselineLearner(start, config, rng) if config.baseline else Learner(start, config, rng)
