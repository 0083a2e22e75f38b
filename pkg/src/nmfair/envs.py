"""Doughnut allocation benchmarks and the unbounded-memory witness."""
from __future__ import annotations

import itertools
import time
from collections import deque
from dataclasses import dataclass
from math import comb

import numpy as np

from .automata import MemoryMachine, saturating_difference_machine
from .fairness import NONNEGATIVE, AllocationImbalance, Reciprocal, TraceFairness, normalize
from .fairspec import FairnessSpec
from .model import BoundedTrace, MultiStakeholderMDP, validate_mdp


@dataclass(frozen=True)
class DoughnutSpec:
    n: int = 2
    m: int = 1
    bound: int = 3
    gamma: float = 1.0

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("need at least two stakeholders")
        if not 1 <= self.m < self.n:
            raise ValueError(f"doughnuts per step must satisfy 1 <= m < n, got m={self.m}, n={self.n}")
        if self.bound < 1:
            raise ValueError("memory bound must be >= 1")


def _stakeholder_names(n: int) -> list[str]:
    return ["X", "Y"] if n == 2 else [f"P{i + 1}" for i in range(n)]


class RecipientSpread(TraceFairness):
    """``max - min`` of doughnuts received per stakeholder (extension for n > 2)."""

    codomain = NONNEGATIVE
    name = "recipient_spread"

    def __init__(self, allocations):
        self.allocations = [tuple(x) for x in allocations]
        self.n = 1 + max(i for alloc in self.allocations for i in alloc)

    def signal(self, tau, m=None):
        counts = [0] * self.n
        out = []
        for a in tau.actions:
            for i in self.allocations[a]:
                counts[i] += 1
            out.append(max(counts) - min(counts))
        return np.array(out, dtype=float)

    def __call__(self, tau, m=None):
        counts = [0] * self.n
        for a in tau.actions:
            for i in self.allocations[a]:
                counts[i] += 1
        return float(max(counts) - min(counts))


def count_bookkeeping_machine(allocations, n: int, bound: int, n_states: int = 1) -> MemoryMachine:
    """Per-stakeholder lead over the least-served stakeholder, each clipped at ``bound``.

    Memory is a tuple with minimum 0; output is 1 iff everyone has received the
    same number of doughnuts (as far as the clipped counts can tell).
    """
    zero = (0,) * n
    index = {zero: 0}
    order = [zero]
    rows: dict[int, list[int]] = {}
    queue = deque([zero])
    while queue:
        c = queue.popleft()
        row = []
        for alloc in allocations:
            raw = [c[i] + (1 if i in alloc else 0) for i in range(n)]
            low = min(raw)
            nxt = tuple(min(x - low, bound) for x in raw)
            if nxt not in index:
                index[nxt] = len(order)
                order.append(nxt)
                queue.append(nxt)
            row.append(index[nxt])
        rows[index[c]] = row
    M = len(order)
    update = np.empty((M, len(allocations), n_states), dtype=int)
    for k in range(M):
        update[k] = np.array(rows[k])[:, None]
    output = np.zeros((n_states, M))
    output[:, 0] = 1.0
    return MemoryMachine(tuple("".join(map(str, c)) for c in order), 0, update, output)


def build_doughnut(spec: DoughnutSpec | None = None, **kwargs) -> tuple[MultiStakeholderMDP, FairnessSpec]:
    """Single-state allocation model; each action hands the ``m`` doughnuts to a size-``m`` subset."""
    spec = spec or DoughnutSpec(**kwargs)
    names = _stakeholder_names(spec.n)
    allocations = list(itertools.combinations(range(spec.n), spec.m))
    labels = ["to" + "".join(names[i] for i in alloc) for alloc in allocations]
    nA = len(allocations)
    P = np.ones((1, nA, 1))
    R = np.zeros((spec.n, 1, nA, 1))
    for a, alloc in enumerate(allocations):
        for i in alloc:
            R[i, 0, a, 0] = 1.0
    mdp = MultiStakeholderMDP(("s_init",), tuple(labels), tuple(names), 0, P, R, spec.gamma)
    if spec.n == 2:
        partition = [[0], [1]]
        raw: TraceFairness = AllocationImbalance(partition)
        machine = saturating_difference_machine(partition, 1, nA, spec.bound)
        params = {"partition": [[labels[0]], [labels[1]]], "bound": spec.bound}
        kind = "imbalance"
    else:
        raw = RecipientSpread(allocations)
        machine = count_bookkeeping_machine(allocations, spec.n, spec.bound)
        params = {"bound": spec.bound, "extension": "max-min recipient counts"}
        kind = "recipient_spread"
    fair = FairnessSpec(kind, normalize(raw, Reciprocal()), machine=machine, params=params,
                        normalization="reciprocal")
    assert validate_mdp(mdp).ok
    return mdp, fair


def doughnut_action_count(n: int, m: int) -> int:
    return comb(n, m)


@dataclass
class WitnessReport:
    horizon: int
    traces: int
    values: list[int]
    markov_bound: int
    elapsed: float

    @property
    def distinct(self) -> int:
        return len(self.values)

    @property
    def exceeds_markov_bound(self) -> bool:
        return self.distinct > self.markov_bound

    def to_dict(self) -> dict:
        return {
            "horizon": self.horizon,
            "traces_enumerated": self.traces,
            "distinct_imbalance_values": self.distinct,
            "values": self.values,
            "markov_output_bound": self.markov_bound,
            "exceeds_markov_bound": self.exceeds_markov_bound,
            "elapsed_seconds": self.elapsed,
        }


def unbounded_memory_witness(T: int, budget: int = 2**22) -> WitnessReport:
    """Enumerate every two-stakeholder doughnut trace of length ``T`` and collect final imbalances.

    A Markovian fairness function on this one-state, two-action model can take
    at most ``|S|^2 |A| = 2`` values; the imbalance takes ``floor(T/2) + 1``.
    """
    if T < 1:
        raise ValueError("horizon must be >= 1")
    if 2**T > budget:
        raise ValueError(f"2^{T} traces exceed the enumeration budget {budget}")
    start = time.perf_counter()
    mdp, _ = build_doughnut(DoughnutSpec(2, 1))
    imbalance = AllocationImbalance([[0], [1]])
    values = set()
    count = 0
    for actions in itertools.product((0, 1), repeat=T):
        values.add(int(imbalance(BoundedTrace((0,) * (T + 1), actions))))
        count += 1
    bound = mdp.n_states**2 * mdp.n_actions
    return WitnessReport(T, count, sorted(values), bound, time.perf_counter() - start)
