"""The simulated expert and the learner's handling of what it says.

The expert knows the true network, watches every trial, and tracks which
variables the learner must be aware of: those mentioned in any message and
actions the learner has performed with value 1.  Every expert message names
at most one variable outside that set, and declares its kind.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .inference import eu_table
from .language import (KIND_SET, Formula, Membership, MissingB, Question, SetKind, UnforeseenReward,
                       WhichEffect, advice_content)
from .network import DecisionNetwork, Kind, config_index

_EPS = 1e-9


class ProtocolError(RuntimeError):
    """A message broke the dialogue protocol."""


@dataclass(frozen=True)
class AdviceSignal:
    """"``better`` would have been better than ``worse`` in the situation of trial ``time``"."""

    better: tuple[tuple[str, int], ...]
    worse: tuple[tuple[str, int], ...]
    time: int
    declarations: tuple[Membership, ...] = ()

    def __post_init__(self):
        if dict(self.better) == dict(self.worse):
            raise ValueError("advice must compare different actions")

    def variables(self) -> tuple[str, ...]:
        return tuple(dict(self.better)) + tuple(m.var for m in self.declarations)

    def __str__(self):
        b = " ".join(f"{k}={v}" for k, v in self.better)
        w = " ".join(f"{k}={v}" for k, v in self.worse)
        extra = "".join(" " + str(d) for d in self.declarations)
        return f"(better-than ({b}) ({w}) @{self.time}{extra})"


@dataclass(frozen=True)
class Answer:
    question: Question
    formulas: tuple[Formula, ...]

    def variables(self) -> tuple[str, ...]:
        out = []
        for f in self.formulas:
            out.extend(f.variables())
        return tuple(dict.fromkeys(out))

    def __str__(self):
        return "(answer " + " ".join(str(f) for f in self.formulas) + ")"


Signal = AdviceSignal | Answer | MissingB | UnforeseenReward | WhichEffect


@dataclass(frozen=True)
class Interpretation:
    """The learner's reading of one piece of advice: in ``context``, better beats worse."""

    context: tuple[tuple[str, int], ...]
    better: tuple[tuple[str, int], ...]
    worse: tuple[tuple[str, int], ...]
    time: int


@dataclass(frozen=True)
class Utterance:
    speaker: str
    signal: Signal
    time: int
    interpretation: Interpretation | None = None

    def __str__(self):
        return f"{self.time}\t{self.speaker}\t{self.signal}"


def _sorted_items(a: Mapping[str, int]) -> tuple[tuple[str, int], ...]:
    return tuple(sorted((k, int(v)) for k, v in a.items()))


# -- expert -----------------------------------------------------------------------

class Expert:
    def __init__(self, dn: DecisionNetwork, beta: float = 0.9, gamma: int = 50,
                 rng: np.random.Generator | None = None):
        self.dn = dn
        self.beta = beta
        self.gamma = gamma
        self.rng = rng if rng is not None else np.random.default_rng()
        self.befores = dn.befores
        self.actions = dn.actions
        self.eu, self.p_before = eu_table(dn, self.befores, self.actions)
        self.best_eu = self.eu.max(axis=1)
        self.samples: dict[int, dict[str, int]] = {}
        self.rewards: dict[int, float] = {}
        self.log: list[Utterance] = []
        self.aware_chance: set[str] = set()
        self.aware_actions: set[str] = set()
        self.last_advice = 0
        self._trials = 0
        self._suboptimal = 0

    # awareness
    def _mention(self, names) -> None:
        for v in names:
            if v not in self.dn.kinds:
                continue
            if self.dn.kinds[v] is Kind.ACTION:
                self.aware_actions.add(v)
            else:
                self.aware_chance.add(v)

    def hear(self, utt: Utterance) -> None:
        self.log.append(utt)
        self._mention(utt.signal.variables())

    def aware(self) -> set[str]:
        return self.aware_chance | self.aware_actions

    def _b_index(self, state: Mapping[str, int]) -> int:
        return config_index([state[b] for b in self.befores])

    def _a_index(self, state: Mapping[str, int]) -> int:
        return config_index([state[a] for a in self.actions])

    def observe_trial(self, t: int, state: Mapping[str, int], reward: float) -> None:
        self.samples[t] = dict(state)
        self.rewards[t] = float(reward)
        self.aware_actions.update(a for a in self.actions if state[a] == 1)
        b = self._b_index(state)
        self._trials += 1
        if self.eu[b, self._a_index(state)] < self.best_eu[b] - _EPS:
            self._suboptimal += 1

    # advice
    def should_advise(self, t: int) -> tuple[str | None, dict[str, int]] | None:
        """Witnesses ``(new action or None, better action)`` when advice is due after trial ``t``."""
        if abs(t - self.last_advice) <= self.gamma:
            return None
        if self._trials == 0 or self._suboptimal / self._trials <= self.beta:
            return None
        state = self.samples[t]
        b = self._b_index(state)
        cur = self.eu[b, self._a_index(state)]
        if cur < self.rewards[t]:
            return None
        base = {a: state[a] for a in self.actions}
        known = [a for a in self.actions if a in self.aware_actions]
        best = None
        for new in [None] + [a for a in self.actions if a not in self.aware_actions]:
            scope = known + ([new] if new is not None else [])
            free = known
            for m in range(2 ** len(free)):
                bits = [(m >> (len(free) - 1 - k)) & 1 for k in range(len(free))]
                cand = dict(base)
                cand.update(zip(free, bits))
                if new is not None:
                    cand[new] = 1
                val = self.eu[b, self._a_index(cand)]
                if val > cur + _EPS and (best is None or val > best[0] + _EPS):
                    best = (val, new, {a: cand[a] for a in scope})
        if best is None:
            return None
        return best[1], best[2]

    def advise(self, t: int, witness: tuple[str | None, dict[str, int]]) -> Utterance:
        new, better = witness
        state = self.samples[t]
        worse = {a: state[a] for a in better}
        decl = (Membership(new, SetKind.ACTION),) if new is not None else ()
        signal = AdviceSignal(_sorted_items(better), _sorted_items(worse), t, decl)
        self._check_1n(signal)
        self.last_advice = t
        self._trials = 0
        self._suboptimal = 0
        utt = Utterance("expert", signal, t)
        self.hear(utt)
        return utt

    def _check_1n(self, signal) -> None:
        unknown = [v for v in signal.variables() if v not in self.aware()]
        if len(set(unknown)) > 1:
            raise ProtocolError(f"expert signal names several unfamiliar variables: {sorted(set(unknown))}")

    # answers
    def _declare(self, v: str) -> Membership:
        return Membership(v, KIND_SET[self.dn.kinds[v]])

    def answer(self, q: Question, t: int) -> Utterance:
        if isinstance(q, MissingB):
            formulas = self._answer_missing_b(q)
        elif isinstance(q, UnforeseenReward):
            formulas = self._answer_reward(q)
        elif isinstance(q, WhichEffect):
            formulas = self._answer_effect(q)
        else:
            raise ProtocolError(f"unknown question {q!r}")
        signal = Answer(q, tuple(formulas))
        self._check_1n(signal)
        utt = Utterance("expert", signal, t)
        self.hear(utt)
        return utt

    def _choice(self, options: Sequence[str]) -> str:
        return options[int(self.rng.integers(len(options)))]

    def _answer_missing_b(self, q: MissingB) -> list[Formula]:
        s1, s0 = self.samples.get(q.t), self.samples.get(q.t - q.n)
        if s1 is None or s0 is None:
            return []
        diff = [b for b in self.befores if s1[b] != s0[b]]
        if not diff:
            return []
        return [Membership(self._choice(diff), SetKind.BEFORE)]

    def _answer_reward(self, q: UnforeseenReward) -> list[Formula]:
        known = set(q.known)
        domain = self.dn.reward_domain
        out: list[Formula] = [Membership(y, SetKind.REWARD) for y in domain
                              if y in self.aware_chance and y not in known]
        fresh = [y for y in domain if y not in self.aware_chance and y not in known]
        if fresh:
            latest = max(self.samples) if self.samples else None
            priority = []
            if latest is not None:
                cur = self.samples[latest]
                for s, st in self.samples.items():
                    if s == latest or abs(self.rewards[s] - self.rewards[latest]) <= _EPS:
                        continue
                    if all(st[k] == cur[k] for k in q.known if k in st):
                        priority.extend(y for y in fresh if st[y] != cur[y] and y not in priority)
            pick = self._choice([y for y in fresh if y in priority] or fresh)
            out += [Membership(pick, SetKind.REWARD), self._declare(pick)]
        return out

    def _answer_effect(self, q: WhichEffect) -> list[Formula]:
        x = q.var
        children = list(self.dn.children.get(x, ()))
        if not children:
            if x in self.dn.reward_domain:
                return [Membership(x, SetKind.REWARD)]
            return []
        unaware = [y for y in children if y not in self.aware()]
        y = self._choice(unaware or children)
        out: list[Formula] = [Membership(x, SetKind.PARENTS, y)]
        if y not in self.aware():
            out.append(self._declare(y))
        return out


# -- learner side ---------------------------------------------------------------------

def interpret_advice(signal: AdviceSignal, context: Mapping[str, int]) -> Interpretation:
    return Interpretation(_sorted_items(context), signal.better, signal.worse, signal.time)


def detect_misunderstanding(history: Sequence[Interpretation], new: Interpretation) -> tuple[int, int] | None:
    """``(t, n)`` when ``new`` reverses an earlier reading made in the same context."""
    for old in reversed(history):
        if old.context == new.context and old.better == new.worse and old.worse == new.better:
            return new.time, new.time - old.time
    return None


def signal_content(signal: AdviceSignal | Answer, known: set[str], context: Mapping[str, int] | None = None,
                   reward: float | None = None, known_actions: Sequence[str] = ()) -> tuple[list[Formula], list[tuple[str, Kind]]]:
    """Monotonic conjuncts of an expert signal plus its neologisms with their declared kinds.

    Raises ProtocolError when the signal names two unknown variables or an
    unknown variable without declaring its kind.
    """
    if isinstance(signal, AdviceSignal):
        if context is None or reward is None:
            raise ValueError("advice needs the learner's context and reward for its trial")
        formulas = advice_content(dict(signal.better), context, reward, known_actions)
        formulas += [d for d in signal.declarations if d not in formulas]
    else:
        formulas = list(signal.formulas)
    mentioned = []
    for f in formulas:
        mentioned.extend(f.variables())
    unknown = sorted(set(v for v in mentioned if v not in known))
    if len(unknown) > 1:
        raise ProtocolError(f"signal names several unknown variables: {unknown}")
    neologisms = []
    for v in unknown:
        kinds = [f.set for f in formulas if isinstance(f, Membership) and f.var == v
                 and f.set in (SetKind.ACTION, SetKind.BEFORE, SetKind.OUTCOME)]
        if not kinds:
            raise ProtocolError(f"unknown variable {v} without a kind declaration")
        neologisms.append((v, {SetKind.ACTION: Kind.ACTION, SetKind.BEFORE: Kind.BEFORE,
                               SetKind.OUTCOME: Kind.OUTCOME}[kinds[0]]))
    return formulas, neologisms

