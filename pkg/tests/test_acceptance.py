"""Acceptance criteria, each run at its stated scale and tolerance.

Every test records one PASS/FAIL line (shown in the terminal summary) and
then asserts the same verdict.
"""

import time

import numpy as np
import pytest
from scipy.stats import mannwhitneyu

from _report import record
from dnaware.agent import AgentConfig
from dnaware.beliefs import BeliefSet, HyperParams
from dnaware.inference import ImpossibleEvidence, expected_utility, marginal
from dnaware.language import Eq, Gt, Membership, PartialDescription, SetKind, StateExists
from dnaware.network import BUILTIN, Kind, builtin, sample
from dnaware.reward import Vocabulary, estimate_vocabulary, reward_update
from dnaware.simulation import ExperimentConfig, emit_metrics, generate_random_dn, run_once
from dnaware.structure import Infeasible, objective, solve_structure
from oracles import brute_force_ilp, oracle_eu, oracle_marginal, powerset_posterior, reward_satisfiable


def vocab_of(dn):
    return Vocabulary(dn.befores, dn.actions, dn.outcomes, dn.reward_domain)


def oracle_beliefs(bs, rows, names):
    col = {v: i for i, v in enumerate(names)}
    causes = set(bs.vocab.actions) | set(bs.vocab.outcomes)
    out = {}
    for v, b in bs.beliefs.items():
        need = [x for x in b.candidates if x in causes] if b.kind is Kind.OUTCOME else ()
        out[v] = powerset_posterior(list(b.candidates), rows, col, v, bs.hyper.rho, bs.hyper.alpha0, need_one_of=need)
    return out


def max_gap(bs, want):
    gap = 0.0
    for v, dist in want.items():
        got = bs[v].distribution()
        if set(got) != set(dist):
            return float("inf")
        gap = max(gap, max(abs(got[s] - p) for s, p in dist.items()))
    return gap


def test_dirichlet_incremental_matches_batch():
    start = time.perf_counter()
    worst = 0.0
    checks = 0
    for seed in range(50):
        dn = generate_random_dn(seed, 1, 1, 2, reward_vars=1)
        vocab = vocab_of(dn)
        bs = BeliefSet(vocab, HyperParams(threshold=0.0))
        bs.structural_update()
        rng = np.random.default_rng(seed)
        rows = []
        for t in range(1, 201):
            s, _ = sample(dn, {a: int(rng.integers(2)) for a in dn.actions}, rng)
            bs.add_trial(s)
            rows.append([s[v] for v in vocab.variables])
            if t % 25 == 0 or t == 1:
                worst = max(worst, max_gap(bs, oracle_beliefs(bs, np.array(rows), vocab.variables)))
                checks += 1
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-9 and elapsed < 10
    record("Dirichlet incremental/batch equivalence", ok,
           f"max |sequential - batch| = {worst:.2e} over {checks} checkpoints, {elapsed:.1f} s")
    assert ok


def test_lattice_exactness():
    start = time.perf_counter()
    worst = 0.0
    for seed in range(20):
        dn = generate_random_dn(100 + seed, 1, 2, 2, reward_vars=2)
        vocab = vocab_of(dn)
        rng = np.random.default_rng(seed)
        bs = BeliefSet(vocab, HyperParams(threshold=0.0))
        rows = []
        for _ in range(int(rng.integers(10, 300))):
            s, _ = sample(dn, {a: int(rng.integers(2)) for a in dn.actions}, rng)
            bs.data.append(bs.data.row(s))
            rows.append([s[v] for v in vocab.variables])
        bs.structural_update()
        worst = max(worst, max_gap(bs, oracle_beliefs(bs, np.array(rows), vocab.variables)))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-9 and elapsed < 30
    record("Lattice exactness (C=0)", ok, f"max |lattice - powerset| = {worst:.2e} on 20 datasets, {elapsed:.1f} s")
    assert ok


def _random_edge_instance(rng, n=6):
    order = [Kind.ACTION, Kind.BEFORE, Kind.OUTCOME]
    kinds = sorted((order[int(rng.integers(3))] for _ in range(n)), key=order.index)
    kinds[0], kinds[-1] = Kind.ACTION, Kind.OUTCOME
    in_reward = [k is not Kind.ACTION and rng.random() < 0.4 for k in kinds]
    in_reward[-1] = True
    e = np.zeros((n, n))
    for x in range(n):
        for y in range(x + 1, n):
            legal = kinds[y] is Kind.OUTCOME or (kinds[y] is Kind.BEFORE and kinds[x] is Kind.BEFORE)
            if legal and rng.random() < 0.75:
                e[x, y] = rng.random()
    return e, kinds, in_reward


def _legal(pa, e, kinds, in_reward):
    n = len(kinds)
    if np.any(pa & (e <= 0)) or np.any(np.tril(pa)):
        return False
    for x in range(n):
        for y in range(n):
            if pa[x, y] and (kinds[y] is Kind.ACTION or (kinds[y] is Kind.BEFORE and kinds[x] is not Kind.BEFORE)):
                return False
        if not in_reward[x] and not pa[x].any():
            return False
        if kinds[x] is Kind.OUTCOME and not any(pa[p, x] for p in range(n) if kinds[p] is not Kind.BEFORE):
            return False
    return True


def test_structure_solver_soundness_and_near_optimality():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst_ratio, unsound, feasible = 1.0, 0, 0
    for _ in range(200):
        e, kinds, in_reward = _random_edge_instance(rng)
        pa = solve_structure(e, kinds, in_reward)
        best = brute_force_ilp(e, [k.value for k in kinds], in_reward)
        if best is None or isinstance(pa, Infeasible):
            unsound += (best is None) != isinstance(pa, Infeasible)
            continue
        feasible += 1
        unsound += not _legal(pa, e, kinds, in_reward)
        worst_ratio = min(worst_ratio, objective(pa, e) / best)
    elapsed = time.perf_counter() - start
    ok = unsound == 0 and worst_ratio >= 0.9 and elapsed < 60
    record("Structure solver soundness + near-optimality", ok,
           f"{feasible} feasible instances, {unsound} unsound, worst ratio {worst_ratio:.4f}, {elapsed:.1f} s")
    assert ok


def test_fact2_runtime_invariant():
    start = time.perf_counter()
    dn = builtin("barley")
    total = []
    for seed in range(10):
        exp = ExperimentConfig(steps=500, seed=seed, pe_period=500, check_validity=True, timing=False)
        res = run_once(dn, AgentConfig.preset("default"), exp, 0)
        total += res.violations
    elapsed = time.perf_counter() - start
    ok = not total and elapsed < 300
    record("Fact 2 runtime invariant", ok, f"{len(total)} violations in 10 Barley runs x 500 steps, {elapsed:.1f} s")
    assert ok, total[:5]


def _random_system(rng):
    m = int(rng.integers(1, 5))
    cons = []
    for _ in range(int(rng.integers(1, 21))):
        lits = {k: int(rng.integers(2)) for k in range(m) if rng.random() < 0.6}
        op = "eq" if rng.random() < 0.65 else "gt"
        cons.append((lits, op, float(rng.choice([0.0, 10.0, 20.0, 30.0]))))
    return m, cons


def _describe(m, cons):
    dom = [f"V{k}" for k in range(m)]
    d = PartialDescription([Membership(v, SetKind.OUTCOME) for v in dom] + [Membership(v, SetKind.REWARD) for v in dom])
    for lits, op, r in cons:
        extra = {"Z": int(r) % 2}  # a literal outside the reward domain
        d.add(StateExists.of({dom[k]: v for k, v in lits.items()} | extra, Eq(r) if op == "eq" else Gt(r)))
    return d


def test_reward_solver_soundness():
    elapsed = 0.0  # solver time only; the exhaustive oracle is far slower
    rng = np.random.default_rng(77)
    disagree, broken, solved = 0, 0, 0
    for _ in range(500):
        m, cons = _random_system(rng)
        d = _describe(m, cons)
        t0 = time.perf_counter()
        table = reward_update(d, estimate_vocabulary(d))
        elapsed += time.perf_counter() - t0
        truth = reward_satisfiable(m, cons)
        disagree += (table is not None) != truth
        if table is not None:
            solved += 1
            for lits, op, r in cons:
                ys = [y for y in range(2 ** m) if all((y >> k) & 1 == v for k, v in lits.items())]
                if not any(abs(table[y] - r) < 1e-9 if op == "eq" else table[y] > r for y in ys):
                    broken += 1
                    break
    ok = disagree == 0 and broken == 0 and elapsed < 30
    record("Reward solver soundness", ok,
           f"500 systems ({solved} solved): {disagree} verdict disagreements, {broken} bad completions, solver time {elapsed:.2f} s")
    assert ok


def _pe_at(rows, step):
    return next(r.policy_error for r in rows if r.step == step)


@pytest.mark.slow
def test_barley_qualitative_reproduction():
    start = time.perf_counter()
    dn = builtin("barley")
    pe = {"default": [], "baseline": []}
    early, late1000 = [], []
    for run in range(20):
        exp = ExperimentConfig(steps=3000, seed=11, pe_period=100, timing=False)
        d = run_once(dn, AgentConfig.preset("default"), exp, run).rows
        b = run_once(dn, AgentConfig.preset("baseline"), exp, run).rows
        pe["default"].append((_pe_at(d, 300), _pe_at(d, 3000)))
        pe["baseline"].append(_pe_at(b, 3000))
        late1000.append(_pe_at(b, 1000))
    elapsed = time.perf_counter() - start
    final_default = np.mean([x[1] for x in pe["default"]])
    final_base = np.mean(pe["baseline"])
    improved = np.mean([x[1] < x[0] for x in pe["default"]])
    base_1000 = np.mean(late1000)
    drift = abs(base_1000 - final_base) / final_base if final_base else float("inf")
    parts = [final_default < 0.5 * final_base, improved >= 0.9, drift < 0.1, elapsed < 3600]
    ok = all(parts)
    record("Barley qualitative reproduction", ok,
           f"mean final PE default {final_default:.4f} vs baseline {final_base:.4f}; "
           f"PE(3000)<PE(300) in {improved:.0%} of runs; baseline drift 1000->3000 {drift:.1%}; {elapsed:.0f} s")
    assert ok


@pytest.mark.slow
def test_random_dn_ordering():
    start = time.perf_counter()
    agents = ("full-vocab", "default", "baseline")
    final = {a: [] for a in agents}
    per_dn = []
    for seed in (7001, 7002, 7003):
        dn = generate_random_dn(seed, 5, 5, 5)
        means = {}
        for a in agents:
            vals = []
            for run in range(10):
                exp = ExperimentConfig(steps=1500, seed=seed, pe_period=1500, timing=False)
                vals.append(_pe_at(run_once(dn, AgentConfig.preset(a), exp, run).rows, 1500))
            final[a] += vals
            means[a] = np.mean(vals)
        per_dn.append(means)
    elapsed = time.perf_counter() - start
    m = {a: float(np.mean(v)) for a, v in final.items()}
    p_fd = mannwhitneyu(final["full-vocab"], final["default"], alternative="less").pvalue
    p_db = mannwhitneyu(final["default"], final["baseline"], alternative="less").pvalue
    ok = m["full-vocab"] <= m["default"] < m["baseline"] and p_fd < 0.05 and p_db < 0.05 and elapsed < 7200
    detail = (f"mean final PE full-vocab {m['full-vocab']:.3f}, default {m['default']:.3f}, baseline {m['baseline']:.3f}; "
              f"one-sided Mann-Whitney p = {p_fd:.3g} (full-vocab<default), {p_db:.3g} (default<baseline); "
              f"per network: " + "; ".join(", ".join(f"{k} {v:.2f}" for k, v in d.items()) for d in per_dn)
              + f"; {elapsed:.0f} s")
    record("Random-DN ordering", ok, detail)
    assert ok


def test_inference_correctness():
    rng = np.random.default_rng(31)
    worst = 0.0
    queries = 0
    for name in BUILTIN:
        dn = builtin(name)
        for _ in range(10):
            ev = {a: int(rng.integers(2)) for a in dn.actions}
            ev.update({v: int(rng.integers(2)) for v in dn.chance if rng.random() < 0.25})
            free = [v for v in dn.chance if v not in ev]
            target = free[int(rng.integers(len(free)))]
            try:
                got = marginal(dn, [target], ev)[1]
            except ImpossibleEvidence:
                continue
            worst = max(worst, abs(got - oracle_marginal(dn, target, ev)))
            act = {a: ev[a] for a in dn.actions}
            bev = {b: int(rng.integers(2)) for b in dn.befores}
            worst = max(worst, abs(expected_utility(dn, act, bev) - oracle_eu(dn, act, bev)))
            queries += 1
    barley = builtin("barley")
    stated = 0.25
    vp = float(marginal(barley, ["Fungus"], {"Fungicide": 0, "Grain": 0})[1])
    oracle = oracle_marginal(barley, "Fungus", {a: 0 for a in barley.actions})
    ok = worst <= 1e-9 and abs(vp - oracle) <= 1e-9 and abs(oracle - stated) <= 1e-9
    record("Inference correctness", ok,
           f"{queries} random queries, max error {worst:.2e}; P(Fungus=1 | Fungicide=0, Grain=0): "
           f"inference {vp:.6f}, oracle {oracle:.6f}, stated {stated}")
    assert ok


def test_determinism():
    dn = builtin("barley")
    exp = ExperimentConfig(steps=400, runs=1, seed=5, pe_period=50, timing=False)
    texts = [emit_metrics(run_once(dn, AgentConfig.preset("default"), exp, 0).rows).encode() for _ in range(2)]
    timed = ExperimentConfig(steps=400, runs=1, seed=5, pe_period=50, timing=True)
    stripped = []
    for _ in range(2):
        rows = run_once(dn, AgentConfig.preset("default"), timed, 0).rows
        stripped.append([(r.step, r.event, r.reward, r.cum_reward, r.policy_error, r.n_vars, r.n_lattice_nodes)
                         for r in rows])
    ok = texts[0] == texts[1] and stripped[0] == stripped[1]
    record("Determinism", ok, f"byte-identical CSV ({len(texts[0])} bytes, timing column off): {texts[0] == texts[1]}; "
                              f"all non-timing columns identical with timing on: {stripped[0] == stripped[1]}")
    assert ok
