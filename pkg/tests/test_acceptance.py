"""Exit criteria, each at its stated tolerance and runtime budget.

Every test prints a ``criterion N: PASS|FAIL ...`` line; the lines are
repeated in the pytest terminal summary.
"""
import itertools
import re
import time

import numpy as np
import pytest

import oracles
from helpers import random_machine, random_mdp, random_path
from nmfair.automata import (PAIRED, MachineFairness, dfa_run, dfa_to_memory, interleaved_to_paired, memory_run,
                             memory_to_dfa, saturating_difference_machine)
from nmfair.envs import DoughnutSpec, build_doughnut, count_bookkeeping_machine, unbounded_memory_witness
from nmfair.fairness import (AllocationImbalance, BalanceRatio, NashWelfare, RawlsianWelfare, TimeInFirstPlace,
                             tie_tolerance)
from nmfair.learn import (LearnerConfig, combined_reward, fair_optimal_objective, q_learning, rho_return,
                          value_iteration)
from nmfair.model import MarkovPolicy, MultiStakeholderMDP, rollout, sequence_policy, spawn_generators
from nmfair.product import build_product, check_product, markov_fairness_eval, project_trace
from nmfair.regex import derivative, model_regex_dfa, nullable, symbol_classes, to_term, turn_taking_regex
from nmfair.verify import (Anytime, Bounded, ExactPeriodic, Periodic, Verdict, check_trace, estimate_limit,
                           find_t1, verify_policy_exhaustive, verify_policy_monte_carlo)

pytestmark = pytest.mark.acceptance


def with_init(m: MultiStakeholderMDP, init: int) -> MultiStakeholderMDP:
    return MultiStakeholderMDP(m.state_labels, m.action_labels, m.stakeholder_labels, init, m.transitions,
                               m.rewards, m.gamma)


# --- 1 -------------------------------------------------------------------------


def test_criterion_1_unbounded_memory_witness(criterion):
    start = time.perf_counter()
    r = unbounded_memory_witness(10)
    elapsed = time.perf_counter() - start
    criterion(1, f"(distinct={r.distinct}, markov bound={r.markov_bound}, {elapsed:.3f}s)")
    assert r.traces == 2**10
    assert r.distinct == 6 and r.values == [0, 2, 4, 6, 8, 10]
    assert r.markov_bound == 2 and r.distinct > r.markov_bound
    assert elapsed < 1.0


# --- 2 -------------------------------------------------------------------------


def binary_machines():
    """(name, model, machine) pairs with |M| <= 8, |A| <= 3, |S| <= 2."""
    rng = np.random.default_rng(2024)
    out = []
    doughnut, _ = build_doughnut()
    for bound in (1, 2, 3):
        out.append((f"saturating B={bound}", doughnut, saturating_difference_machine([[0], [1]], 1, 2, bound)))
    for n in (2, 3):
        m, _ = build_doughnut(DoughnutSpec(n, 1))
        d = interleaved_to_paired(model_regex_dfa(turn_taking_regex(n), m, [[i] for i in range(n)]), 0, 1, n)
        out.append((f"turn-taking n={n}", m, dfa_to_memory(d, 1, n)))
    m3, _ = build_doughnut(DoughnutSpec(3, 1))
    out.append(("count bookkeeping n=3 B=1", m3, count_bookkeeping_machine([(0,), (1,), (2,)], 3, 1)))
    for k in range(24):
        nS, nA, M = int(rng.integers(1, 3)), int(rng.integers(1, 4)), int(rng.integers(1, 9))
        m = random_mdp(rng, nS, nA)
        out.append((f"random {k}", with_init(m, int(rng.integers(nS))), random_machine(rng, M, nS, nA)))
    for M in (7, 8):
        m = random_mdp(rng, 2, 3)
        out.append((f"random max M={M}", m, random_machine(rng, M, 2, 3)))
    return out


def exhaustive_biconditional(m, mm, max_len):
    """Every paired-encoded trace of length 1..max_len from m.init, evaluated level by level."""
    d = memory_to_dfa(mm, m)
    accepting = np.zeros(d.n_states, dtype=bool)
    accepting[list(d.accepting)] = True
    syms = d.alphabet
    sym_a = np.array([a for a, _ in syms])
    sym_s = np.array([s for _, s in syms])
    K = len(syms)
    q = np.array([d.q0])
    mem = np.array([mm.init])
    checked = 0
    for _ in range(max_len):
        q = d.delta[np.repeat(q, K), np.tile(np.arange(K), len(q))]
        a, s2 = np.tile(sym_a, len(mem)), np.tile(sym_s, len(mem))
        mem = mm.update[np.repeat(mem, K), a, s2]
        final_signal = mm.output[s2, mem]
        if not np.array_equal(accepting[q], final_signal == 1.0):
            return False, checked
        checked += len(q)
    return True, checked


def test_criterion_2_dfa_memory_biconditional(criterion):
    start = time.perf_counter()
    machines = binary_machines()
    total = 0
    failures = []
    rng = np.random.default_rng(7)
    for name, m, mm in machines:
        assert mm.is_binary and mm.n_memory <= 8 and m.n_actions <= 3 and m.n_states <= 2
        ok, n = exhaustive_biconditional(m, mm, 8)
        total += n
        if not ok:
            failures.append(name)
        # spot check through the public per-trace entry points
        d = memory_to_dfa(mm, m)
        for _ in range(50):
            tau = random_path(rng, m, int(rng.integers(1, 9)))
            if dfa_run(d, tau, PAIRED)[1] != (memory_run(mm, tau)[-1] == 1.0):
                failures.append(name + " (spot)")
    elapsed = time.perf_counter() - start
    criterion(2, f"({len(machines)} machines, {total} traces, {elapsed:.1f}s)")
    assert not failures, failures
    assert elapsed < 60


# --- 3 -------------------------------------------------------------------------


def test_criterion_3_product_equivalence(criterion):
    start = time.perf_counter()
    rng = np.random.default_rng(3)
    traces = mismatches = 0
    for k in range(50):
        nS, nA, M = int(rng.integers(1, 6)), int(rng.integers(1, 4)), int(rng.integers(1, 7))
        m = random_mdp(rng, nS, nA, gamma=float(rng.choice([1.0, 0.9])))
        mm = random_machine(rng, M, nS, nA, binary=bool(k % 2))
        p = build_product(m, mm)
        assert check_product(p) == []
        pi = MarkovPolicy.uniform(p.n_states, nA)
        for g in spawn_generators(k, 1000):
            # sample on the product itself, then compare against the machine run on the projection
            tau = rollout(p.mdp, pi, int(g.integers(1, 21)), g)
            if not np.array_equal(markov_fairness_eval(p, tau), memory_run(mm, project_trace(p, tau))):
                mismatches += 1
            traces += 1
    elapsed = time.perf_counter() - start
    criterion(3, f"({traces} traces, {mismatches} mismatches, {elapsed:.1f}s)")
    assert traces == 50_000 and mismatches == 0
    assert elapsed < 60


# --- 4 -------------------------------------------------------------------------


def python_re_pattern(n):
    # written independently of the package: states are 's', action i is the digit i
    rounds = "".join(f"s{i}" for i in range(n))
    partials = "|".join("".join(f"s{i}" for i in range(j)) for j in range(1, n + 1))
    return re.compile(f"(?:{rounds})*(?:{partials})s")


def to_chars(symbols):
    return "".join("s" if kind == "s" else str(x) for kind, x in symbols)


def all_strings_agree(n, max_len):
    """DFA verdict vs derivative matcher on every string over the model alphabet, length 0..max_len."""
    m, _ = build_doughnut(DoughnutSpec(n, 1))
    part = [[i] for i in range(n)]
    r = turn_taking_regex(n)
    d = model_regex_dfa(r, m, part)
    alphabet = d.alphabet
    K = len(alphabet)
    accepting = np.zeros(d.n_states, dtype=bool)
    accepting[list(d.accepting)] = True
    # derivative terms are interned on demand; rows[t][k] memoizes derivative(term t, symbol k)
    terms = [to_term(r, symbol_classes(m, part))]
    ids = {terms[0]: 0}
    rows: list[list[int]] = []

    def intern(term):
        if term not in ids:
            ids[term] = len(terms)
            terms.append(term)
        return ids[term]

    def table():
        while len(rows) < len(terms):
            cur = terms[len(rows)]
            rows.append([intern(derivative(cur, sym)) for sym in alphabet])
        return np.array(rows, dtype=np.int32)

    q = np.array([d.q0], dtype=np.int16)
    t = np.array([0], dtype=np.int32)
    count = 1
    if accepting[q[0]] != nullable(terms[0]):
        return False, count
    for _ in range(max_len):
        sym = np.tile(np.arange(K, dtype=np.int16), len(q))
        q = d.delta[np.repeat(q, K), sym].astype(np.int16)
        t = table()[np.repeat(t, K), sym]
        null = np.array([nullable(x) for x in terms])
        if not np.array_equal(accepting[q], null[t]):
            return False, count
        count += len(q)
    return True, count


def test_criterion_4_turn_taking_regex(criterion):
    start = time.perf_counter()
    results = {}
    for n in (2, 3):
        ok, count = all_strings_agree(n, 12)
        results[n] = (ok, count)
    # third oracle: Python's re module on a hand-written pattern
    re_checked = 0
    re_failures = 0
    rng = np.random.default_rng(4)
    for n, exhaustive_len in ((2, 10), (3, 7)):
        m, _ = build_doughnut(DoughnutSpec(n, 1))
        d = model_regex_dfa(turn_taking_regex(n), m, [[i] for i in range(n)])
        pat = python_re_pattern(n)
        alphabet = d.alphabet
        samples = itertools.chain.from_iterable(
            itertools.product(alphabet, repeat=L) for L in range(exhaustive_len + 1))
        extra = (tuple(alphabet[i] for i in rng.integers(len(alphabet), size=rng.integers(9, 13)))
                 for _ in range(20000))
        for w in itertools.chain(samples, extra):
            re_checked += 1
            if d.accepts(w) != bool(pat.fullmatch(to_chars(w))):
                re_failures += 1
    elapsed = time.perf_counter() - start
    criterion(4, f"(n=2: {results[2][1]} strings, n=3: {results[3][1]} strings, "
                 f"{re_checked} re cross-checks, {elapsed:.1f}s)")
    assert results[2] == (True, sum(3**L for L in range(13)))
    assert results[3] == (True, sum(4**L for L in range(13)))
    assert re_failures == 0


# --- 5 -------------------------------------------------------------------------


def test_criterion_5_limit_and_t1(criterion):
    m, _ = build_doughnut()
    f = BalanceRatio([[0], [1]])
    alt = sequence_policy([0, 1])
    r = estimate_limit(m, alt, f, [10, 100, 1000], delta=0.1)
    t1 = find_t1(m, alt, f, 0.1, 1000)
    criterion(5, f"(estimate_limit={r.verdict.value}, t1={t1})")
    assert r.verdict is Verdict.PASS
    assert t1 == 10


# --- 6 -------------------------------------------------------------------------


def test_criterion_6_rho_return_equals_objective(criterion):
    rng = np.random.default_rng(6)
    worst = 0.0
    count = 0
    for k in range(10):
        nS, nA, n = int(rng.integers(1, 5)), int(rng.integers(1, 4)), int(rng.integers(1, 4))
        m = random_mdp(rng, nS, nA, n, gamma=float(rng.uniform(0.5, 1.0)), integer=False)
        mm = random_machine(rng, int(rng.integers(1, 6)), nS, nA, binary=bool(k % 2))
        p = build_product(m, mm)
        cfg = LearnerConfig(alpha1=float(rng.uniform(0, 2)), alpha2=float(rng.uniform(0, 2)),
                            weights=tuple(rng.uniform(0, 2, size=n)))
        rho = combined_reward(p, cfg)
        f = MachineFairness(mm)
        pi = MarkovPolicy.uniform(p.n_states, nA)
        for g in spawn_generators(100 + k, 100):
            tau = rollout(p.mdp, pi, int(g.integers(1, 31)), g)
            diff = abs(rho_return(p, rho, tau) - fair_optimal_objective(project_trace(p, tau), m, f, cfg))
            worst = max(worst, diff)
            count += 1
    criterion(6, f"({count} traces, max |diff| = {worst:.2e})")
    assert count == 1000
    assert worst <= 1e-9


# --- 7 -------------------------------------------------------------------------


def test_criterion_7_learning_end_to_end(criterion):
    start = time.perf_counter()
    m, spec = build_doughnut(DoughnutSpec(2, 1, bound=3, gamma=0.9))
    p = build_product(m, spec.machine)
    cfg = LearnerConfig(alpha1=0.0, alpha2=1.0)
    vi = value_iteration(p, cfg)
    tau = rollout(m, vi.on_base(p), 100, np.random.default_rng(0))
    periodic = check_trace(Periodic(2), spec.trace, tau, m).verdict
    exact = check_trace(ExactPeriodic(2), spec.trace, tau, m).verdict
    seeds = [0, 1, 2, 3, 4]
    agree = []
    for seed in seeds:
        ql = q_learning(p, LearnerConfig(alpha1=0.0, alpha2=1.0, seed=seed))
        agree.append(ql.unvisited == [] and ql.actions.tolist() == vi.actions.tolist())
    elapsed = time.perf_counter() - start
    criterion(7, f"(VI periodic={periodic.value}, exact-periodic={exact.value}, "
                 f"Q-learning agrees for seeds {[s for s, a in zip(seeds, agree) if a]}, {elapsed:.1f}s)")
    assert periodic is Verdict.PASS and exact is Verdict.PASS
    assert all(agree)
    assert elapsed < 30


# --- 8 -------------------------------------------------------------------------


def deterministic_cases():
    rng = np.random.default_rng(8)
    m, spec = build_doughnut()
    cases = []
    for seq in ([0, 1], [0], [0, 0, 1, 1], [1, 0, 0, 1], [0, 1, 1, 0, 1, 0]):
        cases.append((m, sequence_policy(seq), spec.trace, frozenset({0})))
        cases.append((m, sequence_policy(seq), BalanceRatio([[0], [1]]), frozenset({0})))
    for _ in range(12):
        nS, nA = int(rng.integers(2, 5)), int(rng.integers(2, 4))
        dm = random_mdp(rng, nS, nA, deterministic=True)
        pi = MarkovPolicy.deterministic(rng.integers(nA, size=nS).tolist(), nA)
        mm = random_machine(rng, int(rng.integers(1, 5)), nS, nA)
        checkpoint = frozenset(np.flatnonzero(rng.random(nS) < 0.4).tolist())
        cases.append((dm, pi, MachineFairness(mm), checkpoint))
    return cases


def test_criterion_8_verifier_agreement(criterion):
    notions = [Anytime(0.4), Anytime(0.6, 3, 12), Periodic(2), Periodic(3), ExactPeriodic(2), ExactPeriodic(3)]
    cases = deterministic_cases()
    comparisons = disagreements = 0
    seen = set()
    for m, pi, f, checkpoint in cases:
        for notion in [*notions, Bounded(checkpoint)]:
            exact = verify_policy_exhaustive(m, pi, notion, f, 12)
            assert exact.traces == 1  # deterministic model and policy: a single trace
            for seed in range(10):
                mc = verify_policy_monte_carlo(m, pi, notion, f, 12, rollouts=5, seed=seed)
                comparisons += 1
                seen.add(exact.verdict)
                if mc.verdict is not exact.verdict or mc.counterexample_step != exact.counterexample_step:
                    disagreements += 1
    criterion(8, f"({len(cases)} models, {comparisons} comparisons, verdicts seen "
                 f"{sorted(v.value for v in seen)}, {disagreements} disagreements)")
    assert disagreements == 0
    assert seen >= {Verdict.PASS, Verdict.FAIL}


# --- 9 -------------------------------------------------------------------------


def test_criterion_9_fairness_oracles(criterion):
    rng = np.random.default_rng(9)
    exact_checked = approx_checked = 0
    worst = 0.0
    for k in range(1000):
        integer = k % 2 == 0
        nS, nA, n = int(rng.integers(1, 4)), int(rng.integers(2, 4)), int(rng.integers(2, 4))
        m = random_mdp(rng, nS, nA, n, gamma=1.0 if integer else float(rng.uniform(0.5, 0.99)),
                       integer=integer)
        tau = random_path(rng, m, int(rng.integers(1, 13)))
        S, A = tau.states, tau.actions
        split = int(rng.integers(1, nA))
        partition = [list(range(split)), list(range(split, nA))]
        pairs = [
            (NashWelfare().signal(tau, m), oracles.nash(m, S, A)),
            (RawlsianWelfare().signal(tau, m), oracles.rawlsian(m, S, A)),
            (TimeInFirstPlace().signal(tau, m), oracles.first_place(m, S, A, tie_tolerance(m))),
            (AllocationImbalance(partition).signal(tau, m), oracles.imbalance(A, partition)),
        ]
        for got, want in pairs:
            got, want = np.asarray(got, dtype=float), np.asarray(want, dtype=float)
            if integer:
                assert got.tolist() == want.tolist()
                exact_checked += 1
            else:
                worst = max(worst, float(np.abs(got - want).max()))
                approx_checked += 1
    criterion(9, f"({exact_checked} exact, {approx_checked} within tolerance, max |diff| = {worst:.2e})")
    assert worst <= 1e-9
