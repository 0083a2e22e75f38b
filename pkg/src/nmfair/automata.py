"""Finite-memory fairness machines and deterministic automata.

Two trace encodings are supported. The interleaved encoding spells a trace
as ``s_1 a_1 s_2 ... a_T s_{T+1}`` over the symbols ``("s", i)`` and
``("a", j)``. The paired encoding drops the initial state and spells
``<a_1, s_2> ... <a_T, s_{T+1}>`` over ``(a, s)`` tuples.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from functools import cached_property
from typing import Hashable, Iterable, Sequence

import numpy as np

from .fairness import REAL, UNIT, TraceFairness
from .model import BoundedTrace, MultiStakeholderMDP

INTERLEAVED = "interleaved"
PAIRED = "paired"


class EncodingError(ValueError):
    def __init__(self, position: int, symbol):
        super().__init__(f"symbol {symbol!r} at position {position} is not in the alphabet")
        self.position = position
        self.symbol = symbol


class NonBinaryMachineError(ValueError):
    pass


# --- memory machines --------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MemoryMachine:
    """Memory ``M`` with update ``update[m, a, s'] -> m'`` and output ``output[s, m]``."""

    memory_labels: tuple[str, ...]
    init: int
    update: np.ndarray
    output: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "memory_labels", tuple(str(x) for x in self.memory_labels))
        upd = np.array(self.update, dtype=np.int64)
        out = np.array(self.output, dtype=float)
        upd.setflags(write=False)
        out.setflags(write=False)
        object.__setattr__(self, "update", upd)
        object.__setattr__(self, "output", out)
        M = len(self.memory_labels)
        if upd.ndim != 3 or upd.shape[0] != M:
            raise ValueError(f"update table must have shape (|M|, |A|, |S|), got {upd.shape}")
        if out.shape != (upd.shape[2], M):
            raise ValueError(f"output table must have shape (|S|, |M|) = {(upd.shape[2], M)}, got {out.shape}")
        if upd.size and (upd.min() < 0 or upd.max() >= M):
            bad = np.argwhere((upd < 0) | (upd >= M))[0].tolist()
            raise ValueError(f"update entry at (m,a,s')={tuple(bad)} leaves the memory set")
        if not 0 <= self.init < M:
            raise ValueError(f"initial memory {self.init} out of range")

    @property
    def n_memory(self) -> int:
        return len(self.memory_labels)

    @property
    def n_actions(self) -> int:
        return self.update.shape[1]

    @property
    def n_states(self) -> int:
        return self.update.shape[2]

    @cached_property
    def is_binary(self) -> bool:
        return bool(np.all((self.output == 0) | (self.output == 1)))

    def fits(self, m: MultiStakeholderMDP) -> bool:
        return self.n_actions == m.n_actions and self.n_states == m.n_states


def memory_path(mm: MemoryMachine, tau: BoundedTrace) -> list[int]:
    """Memory values ``m_1 .. m_{T+1}`` along ``tau``."""
    path = [mm.init]
    g = mm.update
    mem = mm.init
    for a, s2 in zip(tau.actions, tau.states[1:]):
        mem = int(g[mem, a, s2])
        path.append(mem)
    return path


def memory_run(mm: MemoryMachine, tau: BoundedTrace) -> np.ndarray:
    """Signal ``f_t = F(s_{t+1}, m_{t+1})`` for ``t = 1..T``."""
    path = memory_path(mm, tau)
    return np.array([mm.output[s2, mem] for s2, mem in zip(tau.states[1:], path[1:])], dtype=float)


class MachineFairness(TraceFairness):
    """A memory machine viewed as a trace fairness function."""

    name = "memory"

    def __init__(self, mm: MemoryMachine):
        self.machine = mm
        lo, hi = float(mm.output.min()), float(mm.output.max())
        self.codomain = UNIT if lo >= 0 and hi <= 1 else REAL

    def __call__(self, tau, m=None):
        if not tau.actions:
            raise ValueError("memory fairness is defined after at least one action")
        return float(memory_run(self.machine, tau)[-1])

    def signal(self, tau, m=None):
        return memory_run(self.machine, tau)


def saturating_difference_machine(partition: Sequence[Sequence[int]], n_states: int, n_actions: int,
                                  bound: int) -> MemoryMachine:
    """Track ``#class0 - #class1`` clipped to ``[-bound, bound]``; output 1 iff it is 0."""
    if bound < 1:
        raise ValueError("bound must be >= 1")
    if len(partition) != 2:
        raise ValueError("saturating difference machine needs exactly two action classes")
    sign = np.zeros(n_actions, dtype=int)
    for a in partition[0]:
        sign[a] = 1
    for a in partition[1]:
        sign[a] = -1
    if np.any(sign == 0):
        raise ValueError(f"actions {np.flatnonzero(sign == 0).tolist()} not covered by partition")
    values = list(range(-bound, bound + 1))
    M = len(values)
    update = np.empty((M, n_actions, n_states), dtype=int)
    for k, v in enumerate(values):
        for a in range(n_actions):
            update[k, a, :] = min(max(v + sign[a], -bound), bound) + bound
    output = np.zeros((n_states, M))
    output[:, bound] = 1.0
    return MemoryMachine(tuple(str(v) for v in values), bound, update, output)


# --- DFAs -------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DFA:
    """Complete deterministic automaton; ``delta[q, k]`` is the successor on ``alphabet[k]``."""

    alphabet: tuple[Hashable, ...]
    delta: np.ndarray
    q0: int
    accepting: frozenset[int]
    state_labels: tuple[str, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "alphabet", tuple(self.alphabet))
        d = np.array(self.delta, dtype=np.int64).reshape(-1, len(self.alphabet))
        d.setflags(write=False)
        object.__setattr__(self, "delta", d)
        object.__setattr__(self, "accepting", frozenset(int(q) for q in self.accepting))
        n = d.shape[0]
        if d.size and (d.min() < 0 or d.max() >= n):
            raise ValueError("delta leaves the state set")
        if not 0 <= self.q0 < n:
            raise ValueError("initial state out of range")
        if any(not 0 <= q < n for q in self.accepting):
            raise ValueError("accepting states out of range")
        if len(set(self.alphabet)) != len(self.alphabet):
            raise ValueError("duplicate alphabet symbols")
        if self.state_labels is None:
            object.__setattr__(self, "state_labels", tuple(f"q{i}" for i in range(n)))

    @property
    def n_states(self) -> int:
        return self.delta.shape[0]

    @cached_property
    def index(self) -> dict:
        return {sym: k for k, sym in enumerate(self.alphabet)}

    def step(self, q: int, symbol, position: int = 0) -> int:
        try:
            return int(self.delta[q, self.index[symbol]])
        except KeyError:
            raise EncodingError(position, symbol) from None

    def run(self, symbols: Iterable) -> tuple[int, bool]:
        q = self.q0
        for pos, sym in enumerate(symbols):
            q = self.step(q, sym, pos)
        return q, q in self.accepting

    def accepts(self, symbols: Iterable) -> bool:
        return self.run(symbols)[1]


def encode(tau: BoundedTrace, encoding: str) -> list:
    if encoding == INTERLEAVED:
        out: list = [("s", tau.states[0])]
        for a, s2 in zip(tau.actions, tau.states[1:]):
            out += [("a", a), ("s", s2)]
        return out
    if encoding == PAIRED:
        return list(zip(tau.actions, tau.states[1:]))
    raise ValueError(f"unknown encoding {encoding!r}")


def decode(symbols: Sequence, encoding: str, init: int | None = None) -> BoundedTrace:
    """Inverse of :func:`encode`; the paired encoding needs the initial state."""
    if encoding == INTERLEAVED:
        if len(symbols) % 2 != 1:
            raise ValueError("interleaved trace must have odd length")
        states, actions = [], []
        for pos, sym in enumerate(symbols):
            kind = "s" if pos % 2 == 0 else "a"
            if not (isinstance(sym, tuple) and len(sym) == 2 and sym[0] == kind):
                raise EncodingError(pos, sym)
            (states if kind == "s" else actions).append(sym[1])
        return BoundedTrace(tuple(states), tuple(actions))
    if encoding == PAIRED:
        if init is None:
            raise ValueError("paired encoding needs the initial state to decode")
        return BoundedTrace((init, *(s for _, s in symbols)), tuple(a for a, _ in symbols))
    raise ValueError(f"unknown encoding {encoding!r}")


def reencode(symbols: Sequence, source: str, target: str, init: int | None = None) -> list:
    """Translate a trace spelling between encodings."""
    if source == target:
        return list(symbols)
    if source == INTERLEAVED:
        return encode(decode(symbols, source), target)
    return encode(decode(symbols, source, init), target)


def interleaved_alphabet(n_states: int, n_actions: int) -> tuple:
    return tuple(("s", s) for s in range(n_states)) + tuple(("a", a) for a in range(n_actions))


def paired_alphabet(n_states: int, n_actions: int) -> tuple:
    return tuple((a, s) for a in range(n_actions) for s in range(n_states))


def dfa_run(d: DFA, tau: BoundedTrace, encoding: str) -> tuple[int, bool]:
    """Final automaton state and acceptance of ``tau``'s encoding."""
    return d.run(encode(tau, encoding))


def dfa_signal(d: DFA, tau: BoundedTrace, encoding: str) -> np.ndarray:
    """Acceptance (0/1) of every prefix ``tau_{1,t}``, ``t = 1..T``."""
    syms = encode(tau, encoding)
    q = d.q0
    out = []
    if encoding == INTERLEAVED:
        q = d.step(q, syms[0], 0)
        for t in range(len(tau.actions)):
            q = d.step(q, syms[2 * t + 1], 2 * t + 1)
            q = d.step(q, syms[2 * t + 2], 2 * t + 2)
            out.append(1.0 if q in d.accepting else 0.0)
    else:
        for pos, sym in enumerate(syms):
            q = d.step(q, sym, pos)
            out.append(1.0 if q in d.accepting else 0.0)
    return np.array(out)


class DFAFairness(TraceFairness):
    """Binary fairness: 1 iff the automaton accepts the prefix read so far."""

    codomain = UNIT
    name = "dfa"

    def __init__(self, dfa: DFA, encoding: str):
        self.dfa = dfa
        self.encoding = encoding

    def __call__(self, tau, m=None):
        return 1.0 if dfa_run(self.dfa, tau, self.encoding)[1] else 0.0

    def signal(self, tau, m=None):
        return dfa_signal(self.dfa, tau, self.encoding)


def reachable(d: DFA) -> list[int]:
    seen = {d.q0}
    order = [d.q0]
    queue = deque([d.q0])
    while queue:
        q = queue.popleft()
        for q2 in d.delta[q].tolist():
            if q2 not in seen:
                seen.add(q2)
                order.append(q2)
                queue.append(q2)
    return order


def minimize(d: DFA) -> DFA:
    """Hopcroft partition refinement on the reachable part of ``d``.

    States of the result are numbered in breadth-first order from the start
    state, so equal languages give identical tables.
    """
    live = reachable(d)
    live_set = set(live)
    k = len(d.alphabet)
    preds: list[dict[int, list[int]]] = [dict() for _ in range(k)]
    for q in live:
        for c in range(k):
            preds[c].setdefault(int(d.delta[q, c]), []).append(q)
    acc = frozenset(q for q in live if q in d.accepting)
    rej = frozenset(live_set - acc)
    partition = {b for b in (acc, rej) if b}
    work = set(partition) if len(partition) < 2 else {min(partition, key=len)}
    while work:
        splitter = work.pop()
        for c in range(k):
            x = set()
            for q in splitter:
                x.update(preds[c].get(q, ()))
            if not x:
                continue
            for block in [b for b in partition if b & x and b - x]:
                inside, outside = frozenset(block & x), frozenset(block - x)
                partition.remove(block)
                partition.update((inside, outside))
                if block in work:
                    work.remove(block)
                    work.update((inside, outside))
                else:
                    work.add(min(inside, outside, key=len))
    block_of = {q: b for b in partition for q in b}
    # renumber blocks breadth-first from the start block
    numbering: dict[frozenset, int] = {}
    queue = deque([block_of[d.q0]])
    numbering[block_of[d.q0]] = 0
    rows = []
    while queue:
        b = queue.popleft()
        rep = next(iter(b))
        row = []
        for c in range(k):
            b2 = block_of[int(d.delta[rep, c])]
            if b2 not in numbering:
                numbering[b2] = len(numbering)
                queue.append(b2)
            row.append(numbering[b2])
        rows.append(row)
    accepting = {numbering[b] for b in partition if b <= acc}
    return DFA(d.alphabet, np.array(rows, dtype=np.int64).reshape(-1, k), 0, frozenset(accepting))


def memory_to_dfa(mm: MemoryMachine, m: MultiStakeholderMDP) -> DFA:
    """Automaton over ``<a, s'>`` symbols whose state is the pair ``<s, m>``.

    State ``<s, mem>`` is numbered ``s * |M| + mem``; it accepts iff
    ``F(s, mem) = 1``.
    """
    if not mm.is_binary:
        raise NonBinaryMachineError(
            "memory_to_dfa needs a {0,1}-valued output table; threshold the machine first "
            "(e.g. output >= level)"
        )
    if not mm.fits(m):
        raise ValueError("machine tables do not match the model's states/actions")
    nS, nA, M = m.n_states, m.n_actions, mm.n_memory
    alphabet = paired_alphabet(nS, nA)
    delta = np.empty((nS * M, len(alphabet)), dtype=np.int64)
    for s in range(nS):
        for mem in range(M):
            q = s * M + mem
            for k, (a, s2) in enumerate(alphabet):
                delta[q, k] = s2 * M + mm.update[mem, a, s2]
    accepting = {s * M + mem for s in range(nS) for mem in range(M) if mm.output[s, mem] == 1}
    labels = tuple(f"<{m.state_labels[s]},{mm.memory_labels[mem]}>" for s in range(nS) for mem in range(M))
    return DFA(alphabet, delta, m.init * M + mm.init, frozenset(accepting), labels)


def dfa_to_memory(d: DFA, n_states: int, n_actions: int) -> MemoryMachine:
    """Use the automaton state itself as memory: ``g(q, a, s') = delta(q, <a, s'>)``."""
    cols = np.empty((n_actions, n_states), dtype=np.int64)
    for a in range(n_actions):
        for s in range(n_states):
            try:
                cols[a, s] = d.index[(a, s)]
            except KeyError:
                raise EncodingError(-1, (a, s)) from None
    update = d.delta[:, cols]  # shape (Q, A, S)
    output = np.zeros((n_states, d.n_states))
    output[:, sorted(d.accepting)] = 1.0
    return MemoryMachine(d.state_labels, d.q0, update, output)


def interleaved_to_paired(d: DFA, init_state: int, n_states: int, n_actions: int) -> DFA:
    """Paired-encoding automaton accepting ``<a_1,s_2>..`` iff ``d`` accepts ``s_init a_1 s_2 ..``."""
    alphabet = paired_alphabet(n_states, n_actions)
    delta = np.empty((d.n_states, len(alphabet)), dtype=np.int64)
    for q in range(d.n_states):
        for k, (a, s2) in enumerate(alphabet):
            delta[q, k] = d.step(d.step(q, ("a", a)), ("s", s2))
    start = d.step(d.q0, ("s", init_state))
    return minimize(DFA(alphabet, delta, start, d.accepting))
