"""Finite multi-stakeholder MDPs, bounded traces, policies and rollouts.

Time indexing: trace positions are 1-based (``s_1, a_1, s_2, ...``) in
docstrings and reports, while storage is 0-based, so ``trace.states[0]`` is
``s_1`` and ``trace.actions[t - 1]`` is ``a_t``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

PROB_TOL = 1e-9


class TraceError(ValueError):
    """A trace does not fit the model it is evaluated against."""


class PolicyEvaluationError(RuntimeError):
    """A policy produced an invalid action distribution."""

    def __init__(self, time_step: int, message: str):
        super().__init__(f"t={time_step}: {message}")
        self.time_step = time_step


def _frozen(arr, dtype=float) -> np.ndarray:
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class MultiStakeholderMDP:
    """Finite MDP with one reward table per stakeholder.

    ``transitions[s, a, s2]`` is P(s2 | s, a) and ``rewards[i, s, a, s2]`` is
    R_i(s, a, s2). Construction does not validate; call :func:`validate_mdp`.
    """

    state_labels: tuple[str, ...]
    action_labels: tuple[str, ...]
    stakeholder_labels: tuple[str, ...]
    init: int
    transitions: np.ndarray
    rewards: np.ndarray
    gamma: float

    def __post_init__(self):
        object.__setattr__(self, "state_labels", tuple(self.state_labels))
        object.__setattr__(self, "action_labels", tuple(self.action_labels))
        object.__setattr__(self, "stakeholder_labels", tuple(self.stakeholder_labels))
        object.__setattr__(self, "init", int(self.init))
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "transitions", _frozen(self.transitions))
        object.__setattr__(self, "rewards", _frozen(self.rewards))

    @property
    def n_states(self) -> int:
        return len(self.state_labels)

    @property
    def n_actions(self) -> int:
        return len(self.action_labels)

    @property
    def n_stakeholders(self) -> int:
        return len(self.stakeholder_labels)

    @cached_property
    def _cumulative(self) -> np.ndarray:
        return np.cumsum(self.transitions, axis=2)

    @cached_property
    def integer_rewards(self) -> bool:
        return bool(np.all(self.rewards == np.round(self.rewards)))

    def state_index(self, label) -> int:
        return _lookup(label, self.state_labels, "state")

    def action_index(self, label) -> int:
        return _lookup(label, self.action_labels, "action")


def _lookup(label, labels: Sequence[str], kind: str) -> int:
    if isinstance(label, (int, np.integer)) and not isinstance(label, bool):
        if 0 <= label < len(labels):
            return int(label)
        raise KeyError(f"{kind} index {label} out of range")
    try:
        return labels.index(label)
    except ValueError:
        raise KeyError(f"unknown {kind} {label!r}") from None


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def validate_mdp(m: MultiStakeholderMDP) -> ValidationReport:
    """Check every model invariant and report all violations found."""
    report = ValidationReport()
    v = report.violations
    nS, nA, n = m.n_states, m.n_actions, m.n_stakeholders
    if nS == 0:
        v.append("no states")
    if nA == 0:
        v.append("no actions")
    if n < 1:
        v.append("at least one stakeholder required")
    if not 0 <= m.init < max(nS, 1):
        v.append(f"init {m.init} out of range")
    if not (0.0 < m.gamma <= 1.0) or math.isnan(m.gamma):
        v.append(f"gamma out of (0,1]: {m.gamma}")
    if m.transitions.shape != (nS, nA, nS):
        v.append(f"transition table shape {m.transitions.shape} != {(nS, nA, nS)}")
        return report
    if m.rewards.shape != (n, nS, nA, nS):
        v.append(f"reward table shape {m.rewards.shape} != {(n, nS, nA, nS)}")
    for s in range(nS):
        for a in range(nA):
            row = m.transitions[s, a]
            if np.any(row < 0) or np.any(np.isnan(row)):
                v.append(f"negative probability at (s={s},a={a})")
            total = float(row.sum())
            if abs(total - 1.0) > PROB_TOL:
                v.append(f"distribution at (s={s},a={a}) sums to {total!r}")
    if m.rewards.shape == (n, nS, nA, nS) and not np.all(np.isfinite(m.rewards)):
        v.append("non-finite reward entries")
    return report


@dataclass(frozen=True)
class BoundedTrace:
    """Alternating sequence ``s_x, a_x, ..., a_y, s_{y+1}`` starting at time ``start_time``."""

    states: tuple[int, ...]
    actions: tuple[int, ...]
    start_time: int = 1

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(int(s) for s in self.states))
        object.__setattr__(self, "actions", tuple(int(a) for a in self.actions))
        if len(self.states) != len(self.actions) + 1:
            raise TraceError(
                f"trace needs one more state than actions, got {len(self.states)} and {len(self.actions)}"
            )
        if self.start_time < 1:
            raise TraceError("start_time must be positive")

    def __len__(self) -> int:
        return len(self.actions)

    @property
    def last_state(self) -> int:
        return self.states[-1]


def prefix(tau: BoundedTrace, t: int) -> BoundedTrace:
    """First ``t`` actions of ``tau`` plus the state they lead to."""
    if not 0 <= t <= len(tau.actions):
        raise TraceError(f"prefix length {t} outside [0, {len(tau.actions)}]")
    return BoundedTrace(tau.states[: t + 1], tau.actions[:t], tau.start_time)


def suffix(tau: BoundedTrace, t: int) -> BoundedTrace:
    """Remainder of ``tau`` after its first ``t`` actions."""
    if not 0 <= t <= len(tau.actions):
        raise TraceError(f"suffix offset {t} outside [0, {len(tau.actions)}]")
    return BoundedTrace(tau.states[t:], tau.actions[t:], tau.start_time + t)


def check_trace(m: MultiStakeholderMDP, tau: BoundedTrace, *, require_positive: bool = True) -> list[str]:
    """Index-range and (optionally) positive-probability problems of ``tau`` on ``m``."""
    problems = []
    for s in tau.states:
        if not 0 <= s < m.n_states:
            problems.append(f"state {s} out of range")
    for a in tau.actions:
        if not 0 <= a < m.n_actions:
            problems.append(f"action {a} out of range")
    if problems:
        return problems
    if tau.start_time == 1 and tau.states[0] != m.init:
        problems.append(f"trace starting at time 1 begins in {tau.states[0]}, not init {m.init}")
    if require_positive:
        for t, (s, a, s2) in enumerate(zip(tau.states, tau.actions, tau.states[1:]), start=tau.start_time):
            if m.transitions[s, a, s2] <= 0:
                problems.append(f"zero-probability transition at t={t}: ({s},{a},{s2})")
    return problems


def step(m: MultiStakeholderMDP, s: int, a: int, rng: np.random.Generator) -> tuple[int, np.ndarray]:
    """Sample a successor of ``(s, a)`` and return it with the reward vector."""
    s2 = _sample_cumulative(m._cumulative[s, a], rng)
    return s2, m.rewards[:, s, a, s2].copy()


def _sample_cumulative(cum: np.ndarray, rng: np.random.Generator) -> int:
    i = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
    return min(i, len(cum) - 1)


def spawn_generators(seed: int, n: int) -> list[np.random.Generator]:
    """Independent per-rollout generators derived from one 64-bit seed."""
    children = np.random.SeedSequence(int(seed)).spawn(n)
    return [np.random.default_rng(c) for c in children]


def discounted_return(tau: BoundedTrace, i: int, m: MultiStakeholderMDP) -> float:
    """Discounted sum of stakeholder ``i``'s rewards, exponent counted from the trace's first action."""
    if not 0 <= i < m.n_stakeholders:
        raise IndexError(f"stakeholder index {i} out of range")
    total = 0.0
    R = m.rewards[i]
    for k, (s, a, s2) in enumerate(zip(tau.states, tau.actions, tau.states[1:])):
        total += m.gamma**k * R[s, a, s2]
    return float(total)


def running_returns(tau: BoundedTrace, m: MultiStakeholderMDP) -> np.ndarray:
    """Array ``G[t-1, i]`` holding G_i of each prefix of length ``t``."""
    T = len(tau.actions)
    out = np.empty((T, m.n_stakeholders))
    acc = np.zeros(m.n_stakeholders)
    for k, (s, a, s2) in enumerate(zip(tau.states, tau.actions, tau.states[1:])):
        acc = acc + m.gamma**k * m.rewards[:, s, a, s2]
        out[k] = acc
    return out


# --- policies ---------------------------------------------------------------


class Policy:
    """Map from a history prefix to a distribution over actions.

    ``distribution`` receives the states ``s_1..s_t`` and actions ``a_1..a_{t-1}``
    seen so far and returns a probability vector over actions.
    """

    concurrent_safe: bool = True

    def distribution(self, states: Sequence[int], actions: Sequence[int], n_actions: int) -> np.ndarray:
        raise NotImplementedError


class MarkovPolicy(Policy):
    """Stationary tabular policy ``table[s, a]``."""

    def __init__(self, table):
        self.table = _frozen(table)
        if self.table.ndim != 2:
            raise ValueError("Markov policy table must be 2-D")
        bad = np.abs(self.table.sum(axis=1) - 1.0) > PROB_TOL
        if np.any(bad) or np.any(self.table < 0):
            raise ValueError(f"policy rows must be distributions, bad rows {np.flatnonzero(bad).tolist()}")

    @classmethod
    def deterministic(cls, actions: Sequence[int], n_actions: int) -> "MarkovPolicy":
        table = np.zeros((len(actions), n_actions))
        table[np.arange(len(actions)), list(actions)] = 1.0
        return cls(table)

    @classmethod
    def uniform(cls, n_states: int, n_actions: int) -> "MarkovPolicy":
        return cls(np.full((n_states, n_actions), 1.0 / n_actions))

    def distribution(self, states, actions, n_actions):
        return self.table[states[-1]]


class HistoryPolicy(Policy):
    """Policy given by a callable on the current :class:`BoundedTrace` prefix.

    The callable may return an action index (deterministic choice), a mapping
    ``{action: prob}`` or a probability vector.
    """

    def __init__(self, fn: Callable[[BoundedTrace], object], *, concurrent_safe: bool = False):
        self.fn = fn
        self.concurrent_safe = concurrent_safe

    def distribution(self, states, actions, n_actions):
        out = self.fn(BoundedTrace(tuple(states), tuple(actions)))
        return as_distribution(out, n_actions)


def sequence_policy(sequence: Sequence[int]) -> HistoryPolicy:
    """Open-loop cyclic schedule: ``a_t = sequence[(t - 1) mod len(sequence)]``."""
    seq = tuple(int(a) for a in sequence)
    if not seq:
        raise ValueError("empty action sequence")
    return HistoryPolicy(lambda prefix_: seq[len(prefix_.actions) % len(seq)], concurrent_safe=True)


def as_distribution(out, n_actions: int) -> np.ndarray:
    if isinstance(out, (int, np.integer)) and not isinstance(out, bool):
        if not 0 <= out < n_actions:
            raise ValueError(f"action {out} out of range")
        p = np.zeros(n_actions)
        p[int(out)] = 1.0
        return p
    if isinstance(out, dict):
        p = np.zeros(n_actions)
        for a, q in out.items():
            p[int(a)] += q
        out = p
    p = np.asarray(out, dtype=float)
    if p.shape != (n_actions,):
        raise ValueError(f"distribution has shape {p.shape}, expected ({n_actions},)")
    if np.any(p < 0) or abs(p.sum() - 1.0) > PROB_TOL:
        raise ValueError(f"not a probability distribution: {p.tolist()}")
    return p


def _policy_dist(pi: Policy, states, actions, n_actions: int) -> np.ndarray:
    t = len(actions) + 1
    try:
        p = pi.distribution(states, actions, n_actions)
        return as_distribution(p, n_actions) if not isinstance(pi, MarkovPolicy) else p
    except (ValueError, TypeError, KeyError, IndexError) as exc:
        raise PolicyEvaluationError(t, str(exc)) from exc


def rollout(m: MultiStakeholderMDP, pi: Policy, horizon: int, rng: np.random.Generator) -> BoundedTrace:
    """Sample ``tau_{1,horizon}`` from ``m`` under ``pi``; deterministic given the generator state."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    states = [m.init]
    actions: list[int] = []
    cum = m._cumulative
    for _ in range(horizon):
        p = _policy_dist(pi, states, actions, m.n_actions)
        a = _sample_cumulative(np.cumsum(p), rng)
        s2 = _sample_cumulative(cum[states[-1], a], rng)
        actions.append(a)
        states.append(s2)
    return BoundedTrace(tuple(states), tuple(actions))


def trace_probability(m: MultiStakeholderMDP, pi: Policy, tau: BoundedTrace) -> float:
    """Probability of the actions and successors of ``tau`` given its first state."""
    prob = 1.0
    for t in range(len(tau.actions)):
        p = _policy_dist(pi, tau.states[: t + 1], tau.actions[:t], m.n_actions)
        s, a, s2 = tau.states[t], tau.actions[t], tau.states[t + 1]
        prob *= p[a] * m.transitions[s, a, s2]
    return float(prob)
