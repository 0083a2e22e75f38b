"""Decide fair-policy notions on single traces and estimate them for policies.

Trace-level checks are exact. Policy-level checks either enumerate every
positive-probability trace up to a horizon or sample rollouts; sampled
reports are always labelled ``monte-carlo`` and carry a confidence interval.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np
from scipy import stats

from .fairness import TraceFairness, fairness_signal, require_unit
from .model import (BoundedTrace, MultiStakeholderMDP, Policy, _policy_dist, rollout,
                    spawn_generators)

EQ_TOL = 1e-12


class Verdict(str, enum.Enum):
    PASS = "pass"
    FAIL = "fail"
    INCONCLUSIVE = "inconclusive"

    @property
    def exit_code(self) -> int:
        return {"pass": 0, "fail": 1, "inconclusive": 2}[self.value]


@dataclass(frozen=True)
class Limit:
    """Fairness settles at ``>= 1 - delta`` from ``t_check`` on (default: 10% of the horizon)."""

    delta: float
    t_check: int | None = None

    def __post_init__(self):
        if not 0 <= self.delta < 1:
            raise ValueError("delta must lie in [0, 1)")


@dataclass(frozen=True)
class Anytime:
    epsilon: float
    lo: int = 1
    hi: int | None = None

    def __post_init__(self):
        if not 0 <= self.epsilon < 1:
            raise ValueError("epsilon must lie in [0, 1)")
        if self.lo < 1 or (self.hi is not None and self.hi < self.lo):
            raise ValueError("empty interval")


@dataclass(frozen=True)
class Periodic:
    k: int

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("period must be >= 1")


@dataclass(frozen=True)
class ExactPeriodic(Periodic):
    pass


@dataclass(frozen=True)
class Bounded:
    """Fairness must be exactly 1 whenever the state reached satisfies ``checkpoint``."""

    checkpoint: frozenset[int] | Callable[[int], bool]

    def is_checkpoint(self, s: int) -> bool:
        if callable(self.checkpoint):
            return bool(self.checkpoint(s))
        return s in self.checkpoint


Notion = Limit | Anytime | Periodic | ExactPeriodic | Bounded


@dataclass
class TraceVerdict:
    verdict: Verdict
    step: int | None = None
    value: float | None = None
    detail: str = ""


def _is_one(x: float) -> bool:
    return abs(x - 1.0) <= EQ_TOL


def check_signal(notion: Notion, signal: Sequence[float], states: Sequence[int] | None = None) -> TraceVerdict:
    """Decide ``notion`` on ``f_1..f_T``; ``states`` are ``s_2..s_{T+1}`` (needed for bounded)."""
    f = np.asarray(signal, dtype=float)
    T = len(f)
    if T < 1:
        return TraceVerdict(Verdict.INCONCLUSIVE, detail="empty signal")
    if isinstance(notion, Anytime):
        hi = T if notion.hi is None else min(notion.hi, T)
        if notion.lo > T:
            return TraceVerdict(Verdict.INCONCLUSIVE, detail=f"interval starts after T={T}")
        threshold = 1.0 - notion.epsilon
        for t in range(notion.lo, hi + 1):
            if f[t - 1] < threshold:
                return TraceVerdict(Verdict.FAIL, t, float(f[t - 1]), f"f_{t} < {threshold}")
        return TraceVerdict(Verdict.PASS)
    if isinstance(notion, ExactPeriodic):
        if T < notion.k:
            return TraceVerdict(Verdict.INCONCLUSIVE, detail=f"T={T} shorter than period {notion.k}")
        for t in range(notion.k, T + 1, notion.k):
            if not _is_one(f[t - 1]):
                return TraceVerdict(Verdict.FAIL, t, float(f[t - 1]), f"f_{t} != 1 at a period boundary")
        return TraceVerdict(Verdict.PASS)
    if isinstance(notion, Periodic):
        k = notion.k
        if T < k:
            return TraceVerdict(Verdict.INCONCLUSIVE, detail=f"T={T} shorter than period {k}")
        ones = np.array([_is_one(x) for x in f])
        for t1 in range(1, T - k + 2):
            if not ones[t1 - 1: t1 - 1 + k].any():
                end = t1 + k - 1
                return TraceVerdict(Verdict.FAIL, end, float(f[end - 1]), f"no f_t = 1 for t in [{t1}, {end}]")
        return TraceVerdict(Verdict.PASS)
    if isinstance(notion, Bounded):
        if states is None or len(states) != T:
            raise ValueError("bounded fairness needs the resulting states s_2..s_{T+1}")
        for t in range(1, T + 1):
            if notion.is_checkpoint(states[t - 1]) and not _is_one(f[t - 1]):
                return TraceVerdict(Verdict.FAIL, t, float(f[t - 1]), f"checkpoint state at t={t} with f_t != 1")
        return TraceVerdict(Verdict.PASS)
    if isinstance(notion, Limit):
        t_check = notion.t_check or max(1, math.ceil(0.1 * T))
        if t_check > T:
            return TraceVerdict(Verdict.INCONCLUSIVE, detail=f"burn-in {t_check} beyond T={T}")
        threshold = 1.0 - notion.delta
        for t in range(t_check, T + 1):
            if f[t - 1] < threshold:
                return TraceVerdict(Verdict.FAIL, t, float(f[t - 1]), f"f_{t} < {threshold} after burn-in")
        return TraceVerdict(Verdict.PASS)
    raise TypeError(f"unknown notion {notion!r}")


def check_trace(notion: Notion, f: TraceFairness, tau: BoundedTrace, m: MultiStakeholderMDP) -> TraceVerdict:
    require_unit(f)
    if len(tau.actions) < 1:
        return TraceVerdict(Verdict.INCONCLUSIVE, detail="trace has no actions")
    return check_signal(notion, fairness_signal(f, tau, m), tau.states[1:])


# --- policy-level verification ------------------------------------------------


@dataclass
class VerificationReport:
    verdict: Verdict
    method: str
    counterexample: BoundedTrace | None = None
    counterexample_step: int | None = None
    traces: int = 0
    passes: int = 0
    confidence: float | None = None
    interval: tuple[float, float] | None = None
    failure_upper_bound: float | None = None
    statistics: dict = field(default_factory=dict)
    detail: str = ""

    @property
    def pass_fraction(self) -> float:
        return self.passes / self.traces if self.traces else float("nan")

    def to_dict(self, m: MultiStakeholderMDP | None = None) -> dict:
        out = {
            "verdict": self.verdict.value,
            "method": self.method,
            "traces": self.traces,
            "passes": self.passes,
            "pass_fraction": self.pass_fraction if self.traces else None,
            "detail": self.detail,
        }
        if self.confidence is not None:
            out["confidence"] = self.confidence
            out["interval"] = list(self.interval)
            out["failure_upper_bound"] = self.failure_upper_bound
        if self.counterexample is not None:
            out["counterexample"] = {"step": self.counterexample_step,
                                     "trace": trace_labels(self.counterexample, m)}
        if self.statistics:
            out["statistics"] = self.statistics
        return out


def trace_labels(tau: BoundedTrace, m: MultiStakeholderMDP | None) -> dict:
    if m is None:
        return {"start_time": tau.start_time, "states": list(tau.states), "actions": list(tau.actions)}
    return {"start_time": tau.start_time,
            "states": [m.state_labels[s] for s in tau.states],
            "actions": [m.action_labels[a] for a in tau.actions]}


class BudgetExceeded(Exception):
    def __init__(self, count: int):
        super().__init__(f"trace budget exceeded after {count} traces")
        self.count = count


def enumerate_traces(m: MultiStakeholderMDP, pi: Policy, horizon: int,
                     budget: int = 10**6) -> Iterator[tuple[BoundedTrace, float]]:
    """All positive-probability traces of length ``horizon`` in lexicographic order, with probabilities."""
    count = 0
    states = [m.init]
    actions: list[int] = []

    def walk(prob: float):
        nonlocal count
        if len(actions) == horizon:
            count += 1
            if count > budget:
                raise BudgetExceeded(count - 1)
            yield BoundedTrace(tuple(states), tuple(actions)), prob
            return
        p = _policy_dist(pi, states, actions, m.n_actions)
        for a in np.flatnonzero(p > 0).tolist():
            row = m.transitions[states[-1], a]
            for s2 in np.flatnonzero(row > 0).tolist():
                actions.append(a)
                states.append(s2)
                yield from walk(prob * p[a] * row[s2])
                actions.pop()
                states.pop()

    yield from walk(1.0)


def _horizon_too_short(notion: Notion, horizon: int) -> bool:
    if isinstance(notion, Periodic):
        return horizon < notion.k
    if isinstance(notion, Anytime):
        return notion.lo > horizon
    return False


def verify_policy_exhaustive(m: MultiStakeholderMDP, pi: Policy, notion: Notion, f: TraceFairness,
                             horizon: int, budget: int = 10**6) -> VerificationReport:
    require_unit(f)
    if _horizon_too_short(notion, horizon):
        return VerificationReport(Verdict.INCONCLUSIVE, "exhaustive", detail="horizon shorter than the notion needs")
    n = passes = 0
    inconclusive = 0
    try:
        for tau, _ in enumerate_traces(m, pi, horizon, budget):
            n += 1
            v = check_trace(notion, f, tau, m)
            if v.verdict is Verdict.FAIL:
                return VerificationReport(Verdict.FAIL, "exhaustive", tau, v.step, n, passes, detail=v.detail)
            if v.verdict is Verdict.PASS:
                passes += 1
            else:
                inconclusive += 1
    except BudgetExceeded as exc:
        return VerificationReport(Verdict.INCONCLUSIVE, "exhaustive", traces=exc.count, passes=passes,
                                  detail=f"budget of {budget} traces exceeded; {exc.count} checked")
    verdict = Verdict.INCONCLUSIVE if inconclusive else Verdict.PASS
    return VerificationReport(verdict, "exhaustive", traces=n, passes=passes)


def clopper_pearson(successes: int, n: int, confidence: float) -> tuple[float, float]:
    """Two-sided exact binomial interval for a success probability."""
    alpha = 1.0 - confidence
    lo = 0.0 if successes == 0 else float(stats.beta.ppf(alpha / 2, successes, n - successes + 1))
    hi = 1.0 if successes == n else float(stats.beta.ppf(1 - alpha / 2, successes + 1, n - successes))
    return lo, hi


def failure_upper_bound(failures: int, n: int, confidence: float) -> float:
    """One-sided upper confidence bound on the failure probability (about 3/n for 0 failures at 95%)."""
    if failures >= n:
        return 1.0
    return float(stats.beta.ppf(confidence, failures + 1, n - failures))


def verify_policy_monte_carlo(m: MultiStakeholderMDP, pi: Policy, notion: Notion, f: TraceFairness,
                              horizon: int, rollouts: int, confidence: float = 0.95,
                              seed: int = 0) -> VerificationReport:
    require_unit(f)
    if rollouts < 1:
        raise ValueError("need at least one rollout")
    if _horizon_too_short(notion, horizon):
        return VerificationReport(Verdict.INCONCLUSIVE, "monte-carlo", detail="horizon shorter than the notion needs")
    passes = inconclusive = 0
    first_fail: tuple[BoundedTrace, TraceVerdict] | None = None
    for rng in spawn_generators(seed, rollouts):
        tau = rollout(m, pi, horizon, rng)
        v = check_trace(notion, f, tau, m)
        if v.verdict is Verdict.PASS:
            passes += 1
        elif v.verdict is Verdict.FAIL:
            if first_fail is None:
                first_fail = (tau, v)
        else:
            inconclusive += 1
    failures = rollouts - passes - inconclusive
    report = VerificationReport(
        Verdict.PASS, "monte-carlo", traces=rollouts, passes=passes, confidence=confidence,
        interval=clopper_pearson(passes, rollouts, confidence),
        failure_upper_bound=failure_upper_bound(failures, rollouts, confidence),
        statistics={"failures": failures, "inconclusive": inconclusive, "seed": seed},
        detail="statistical: sampled traces only",
    )
    if first_fail is not None:
        report.verdict = Verdict.FAIL
        report.counterexample, report.counterexample_step = first_fail[0], first_fail[1].step
    elif inconclusive:
        report.verdict = Verdict.INCONCLUSIVE
    return report


def _signals(m, pi, f, horizon, rollouts, seed) -> np.ndarray:
    require_unit(f)
    out = np.empty((rollouts, horizon))
    for r, rng in enumerate(spawn_generators(seed, rollouts)):
        out[r] = fairness_signal(f, rollout(m, pi, horizon, rng), m)
    return out


def estimate_limit(m: MultiStakeholderMDP, pi: Policy, f: TraceFairness, schedule: Sequence[int],
                   delta: float, rollouts: int = 1, seed: int = 0) -> VerificationReport:
    """Empirical surrogate for fairness in the limit.

    For each window ``[T_{j-1}, T_j]`` of the schedule (``T_0 = 1``) the minimum
    of ``f_t`` is taken per rollout. The policy passes when every rollout's
    minimum over the last window is at least ``1 - delta`` and the mean window
    minima do not decrease beyond sampling noise; a passing final window with
    a decreasing trend is inconclusive. This never decides the true limit.
    """
    schedule = sorted(int(t) for t in schedule)
    if not schedule:
        raise ValueError("empty horizon schedule")
    H = schedule[-1]
    sig = _signals(m, pi, f, H, rollouts, seed)
    bounds = [1, *schedule]
    minima = np.array([[sig[r, lo - 1: hi].min() for lo, hi in zip(bounds, bounds[1:])]
                       for r in range(rollouts)])
    means = minima.mean(axis=0)
    se = minima.std(axis=0, ddof=1) / math.sqrt(rollouts) if rollouts > 1 else np.zeros(len(schedule))
    monotone = all(means[j] >= means[j - 1] - 2 * math.hypot(se[j], se[j - 1]) - EQ_TOL
                   for j in range(1, len(schedule)))
    final = minima[:, -1]
    statistics = {
        "schedule": schedule,
        "window_min_mean": means.tolist(),
        "window_min_per_rollout": minima.tolist(),
        "final_value_mean": float(sig[:, -1].mean()),
        "final_window_mean": float(sig[:, bounds[-2] - 1:].mean()),
        "monotone": monotone,
    }
    report = VerificationReport(Verdict.PASS, "monte-carlo", traces=rollouts,
                                passes=int((final >= 1 - delta).sum()), statistics=statistics,
                                detail="empirical limit surrogate")
    if not np.all(final >= 1 - delta):
        r = int(np.argmin(final))
        lo = bounds[-2]
        t = lo + int(np.argmin(sig[r, lo - 1:]))
        report.verdict = Verdict.FAIL
        report.counterexample_step = t
        report.counterexample = rollout(m, pi, H, spawn_generators(seed, rollouts)[r])
        report.detail = f"rollout {r}: f_{t} = {sig[r, t - 1]} < {1 - delta}"
    elif not monotone:
        report.verdict = Verdict.INCONCLUSIVE
        report.detail = "final window passes but window minima are not nondecreasing"
    return report


def find_t1(m: MultiStakeholderMDP, pi: Policy, f: TraceFairness, epsilon: float, max_horizon: int,
            rollouts: int = 1, seed: int = 0) -> int | None:
    """Smallest ``t1`` with ``f_t >= 1 - epsilon`` for all sampled rollouts and all ``t`` in ``[t1, max_horizon]``."""
    sig = _signals(m, pi, f, max_horizon, rollouts, seed)
    bad = np.flatnonzero((sig < 1 - epsilon).any(axis=0))
    t1 = 1 if bad.size == 0 else int(bad[-1]) + 2
    return t1 if t1 <= max_horizon else None
