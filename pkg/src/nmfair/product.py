"""Compile a memory-machine fairness spec into a Markovian product model.

The product state is ``<s, m>``. Only states reachable from
``<s_init, m_init>`` through positive-probability transitions are built.
``markov_fairness[i, a, j]`` depends only on the target ``j`` but is stored
per transition, matching the ``F(s, a, s')`` signature of a Markovian
fairness function.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .automata import MemoryMachine, memory_path
from .model import BoundedTrace, MarkovPolicy, MultiStakeholderMDP, Policy, TraceError


@dataclass(frozen=True, eq=False)
class ProductMDP:
    mdp: MultiStakeholderMDP
    markov_fairness: np.ndarray
    product_states: tuple[tuple[int, int], ...]
    base: MultiStakeholderMDP
    machine: MemoryMachine

    @cached_property
    def index(self) -> dict[tuple[int, int], int]:
        return {ps: i for i, ps in enumerate(self.product_states)}

    @property
    def n_states(self) -> int:
        return len(self.product_states)

    def state_of(self, s: int, mem: int) -> int:
        try:
            return self.index[(s, mem)]
        except KeyError:
            raise TraceError(f"product state <{s},{mem}> was not materialized (unreachable)") from None


def build_product(m: MultiStakeholderMDP, mm: MemoryMachine) -> ProductMDP:
    if not mm.fits(m):
        raise ValueError(
            f"machine covers |A|={mm.n_actions}, |S|={mm.n_states}; model has |A|={m.n_actions}, |S|={m.n_states}"
        )
    P, g = m.transitions, mm.update
    start = (m.init, mm.init)
    states = [start]
    index = {start: 0}
    edges = []  # (i, a, j, p)
    queue = deque([start])
    while queue:
        s, mem = queue.popleft()
        i = index[(s, mem)]
        for a in range(m.n_actions):
            for s2 in np.flatnonzero(P[s, a] > 0).tolist():
                nxt = (s2, int(g[mem, a, s2]))
                if nxt not in index:
                    index[nxt] = len(states)
                    states.append(nxt)
                    queue.append(nxt)
                edges.append((i, a, index[nxt], P[s, a, s2]))
    n = len(states)
    P2 = np.zeros((n, m.n_actions, n))
    for i, a, j, p in edges:
        P2[i, a, j] += p
    base_idx = np.array([s for s, _ in states])
    mem_idx = np.array([k for _, k in states])
    R2 = m.rewards[:, base_idx][:, :, :, base_idx]
    target_fair = mm.output[base_idx, mem_idx]
    F2 = np.broadcast_to(target_fair, (n, m.n_actions, n)).copy()
    labels = tuple(f"{m.state_labels[s]}|{mm.memory_labels[k]}" for s, k in states)
    mdp = MultiStakeholderMDP(labels, m.action_labels, m.stakeholder_labels, 0, P2, R2, m.gamma)
    F2.setflags(write=False)
    return ProductMDP(mdp, F2, tuple(states), m, mm)


def check_product(p: ProductMDP) -> list[str]:
    """Entry-wise check of the product transition, reward and fairness tables."""
    problems = []
    m, mm = p.base, p.machine
    for i, (s, mem) in enumerate(p.product_states):
        for a in range(m.n_actions):
            row = p.mdp.transitions[i, a]
            if abs(row.sum() - 1.0) > 1e-9:
                problems.append(f"row (<{s},{mem}>, a={a}) sums to {row.sum()}")
            for j, (s2, mem2) in enumerate(p.product_states):
                expected = m.transitions[s, a, s2] if mem2 == mm.update[mem, a, s2] else 0.0
                if row[j] != expected:
                    problems.append(f"P'(<{s2},{mem2}> | <{s},{mem}>, {a}) = {row[j]}, expected {expected}")
                if p.markov_fairness[i, a, j] != mm.output[s2, mem2]:
                    problems.append(f"F' mismatch at ({i},{a},{j})")
                if np.any(p.mdp.rewards[:, i, a, j] != m.rewards[:, s, a, s2]):
                    problems.append(f"reward mismatch at ({i},{a},{j})")
    return problems


def lift_trace(p: ProductMDP, tau: BoundedTrace) -> BoundedTrace:
    """Attach the deterministic memory path to every state of a base trace."""
    path = memory_path(p.machine, tau)
    return BoundedTrace(tuple(p.state_of(s, k) for s, k in zip(tau.states, path)), tau.actions, tau.start_time)


def project_trace(p: ProductMDP, tau: BoundedTrace) -> BoundedTrace:
    return BoundedTrace(tuple(p.product_states[i][0] for i in tau.states), tau.actions, tau.start_time)


def markov_fairness_eval(p: ProductMDP, tau: BoundedTrace) -> np.ndarray:
    F = p.markov_fairness
    return np.array([F[i, a, j] for i, a, j in zip(tau.states, tau.actions, tau.states[1:])], dtype=float)


def lift_policy(p: ProductMDP, pi: MarkovPolicy) -> MarkovPolicy:
    """Base Markov policy applied pointwise on product states."""
    return MarkovPolicy(np.array([pi.table[s] for s, _ in p.product_states]))


class ProductPolicy(Policy):
    """Policy over product states, run on the base model by replaying the memory along the history."""

    def __init__(self, p: ProductMDP, table):
        self.product = p
        self.inner = MarkovPolicy(table)

    def distribution(self, states, actions, n_actions):
        g = self.product.machine.update
        mem = self.product.machine.init
        for a, s2 in zip(actions, states[1:]):
            mem = int(g[mem, a, s2])
        return self.inner.table[self.product.state_of(states[-1], mem)]
