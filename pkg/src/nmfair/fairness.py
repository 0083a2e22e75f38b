"""Whole-history fairness functions over bounded traces.

Every evaluator exposes two routes: calling it on a trace evaluates the
complete trace, and :meth:`TraceFairness.signal` produces ``f_1..f_T`` for all
prefixes with constant work per step. The signal route must agree with
per-prefix re-evaluation; the test-suite checks this against brute force.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .model import BoundedTrace, MultiStakeholderMDP, discounted_return, prefix, running_returns

UNIT = "unit"
NONNEGATIVE = "nonnegative"
REAL = "real"


class FairnessDomainError(ValueError):
    """A fairness function's range does not fit where it is used."""


class TraceFairness:
    codomain: str = REAL
    concurrent_safe: bool = True
    name: str = "fairness"

    def __call__(self, tau: BoundedTrace, m: MultiStakeholderMDP) -> float:
        raise NotImplementedError

    def signal(self, tau: BoundedTrace, m: MultiStakeholderMDP) -> np.ndarray:
        return naive_signal(self, tau, m)

    def warnings(self, tau: BoundedTrace, m: MultiStakeholderMDP) -> list[str]:
        return []


def naive_signal(f: TraceFairness, tau: BoundedTrace, m: MultiStakeholderMDP) -> np.ndarray:
    """``f`` re-evaluated from scratch on every prefix."""
    return np.array([f(prefix(tau, t), m) for t in range(1, len(tau.actions) + 1)], dtype=float)


def fairness_signal(f: TraceFairness, tau: BoundedTrace, m: MultiStakeholderMDP) -> np.ndarray:
    """The per-step signal ``f_t = F(tau_{1,t})`` for ``t = 1..T``."""
    if len(tau.actions) < 1:
        raise ValueError("fairness signal needs at least one action")
    values = np.asarray(f.signal(tau, m), dtype=float)
    assert values.shape == (len(tau.actions),)
    return values


@dataclass
class FairnessEvaluation:
    value: float
    signal: np.ndarray
    warnings: list[str] = field(default_factory=list)


def evaluate(f: TraceFairness, tau: BoundedTrace, m: MultiStakeholderMDP) -> FairnessEvaluation:
    sig = fairness_signal(f, tau, m)
    return FairnessEvaluation(float(sig[-1]), sig, f.warnings(tau, m))


def _returns(tau, m) -> list[float]:
    return [discounted_return(tau, i, m) for i in range(m.n_stakeholders)]


class NashWelfare(TraceFairness):
    """Product of the stakeholders' discounted returns."""

    name = "nash"

    def __call__(self, tau, m):
        return float(math.prod(_returns(tau, m)))

    def signal(self, tau, m):
        return np.array([math.prod(row.tolist()) for row in running_returns(tau, m)])

    def warnings(self, tau, m):
        neg = [m.stakeholder_labels[i] for i, g in enumerate(_returns(tau, m)) if g < 0]
        return [f"negative return for {', '.join(neg)}; Nash welfare sign is not meaningful"] if neg else []


class RawlsianWelfare(TraceFairness):
    """Return of the worst-off stakeholder."""

    name = "rawlsian"

    def __call__(self, tau, m):
        return float(min(_returns(tau, m)))

    def signal(self, tau, m):
        return np.array([min(row.tolist()) for row in running_returns(tau, m)])


def tie_tolerance(m: MultiStakeholderMDP) -> float:
    # exact ties are reliable only for undiscounted integer bookkeeping
    return 0.0 if m.gamma == 1.0 and m.integer_rewards else 1e-12


def first_place_sets(G: np.ndarray, tol: float) -> np.ndarray:
    """Boolean ``[t, i]``: stakeholder i holds the greatest return after t+1 steps."""
    return G >= G.max(axis=1, keepdims=True) - tol


class TimeInFirstPlace(TraceFairness):
    """Smallest fraction of steps any stakeholder spends tied for the lead."""

    codomain = UNIT
    name = "first_place"

    def __call__(self, tau, m):
        T = len(tau.actions)
        if T == 0:
            raise ValueError("time in first place needs at least one action")
        leads = first_place_sets(running_returns(tau, m), tie_tolerance(m))
        return float(min(leads.sum(axis=0).tolist()) / T)

    def signal(self, tau, m):
        leads = first_place_sets(running_returns(tau, m), tie_tolerance(m))
        counts = np.cumsum(leads, axis=0)
        steps = np.arange(1, len(tau.actions) + 1)
        return np.array([min(row) / t for row, t in zip(counts.tolist(), steps.tolist())])


def _check_partition(partition: Sequence[Sequence[int]], n_actions: int | None = None):
    seen: dict[int, int] = {}
    for k, cls in enumerate(partition):
        for a in cls:
            if a in seen:
                raise ValueError(f"action {a} appears in classes {seen[a]} and {k}")
            seen[a] = k
    if n_actions is not None:
        missing = sorted(set(range(n_actions)) - set(seen))
        if missing:
            raise ValueError(f"actions {missing} not covered by partition")
    return seen


class AllocationImbalance(TraceFairness):
    """Absolute difference between how often each class of actions was taken.

    With two classes this is ``|#A_1 - #A_2|``. More classes use the spread
    ``max - min`` of the class counts, which is an extension of the two-party
    form (``two_party`` is False then).
    """

    codomain = NONNEGATIVE
    name = "imbalance"

    def __init__(self, partition: Sequence[Sequence[int]]):
        self.partition = tuple(tuple(int(a) for a in cls) for cls in partition)
        if len(self.partition) < 2:
            raise ValueError("imbalance needs at least two action classes")
        self._class_of = _check_partition(self.partition)

    @property
    def two_party(self) -> bool:
        return len(self.partition) == 2

    def _class(self, a: int) -> int:
        try:
            return self._class_of[a]
        except KeyError:
            raise ValueError(f"action {a} not covered by partition") from None

    def counts(self, actions: Sequence[int]) -> list[int]:
        c = [0] * len(self.partition)
        for a in actions:
            c[self._class(a)] += 1
        return c

    @staticmethod
    def _spread(c: Sequence[int]) -> int:
        return abs(c[0] - c[1]) if len(c) == 2 else max(c) - min(c)

    def __call__(self, tau, m=None):
        return float(self._spread(self.counts(tau.actions)))

    def signal(self, tau, m=None):
        c = [0] * len(self.partition)
        out = []
        for a in tau.actions:
            c[self._class(a)] += 1
            out.append(self._spread(c))
        return np.array(out, dtype=float)


class BalanceRatio(AllocationImbalance):
    """``1 - imbalance_t / t``: 1 for an even split, 0 when one class took every step."""

    codomain = UNIT
    name = "balance_ratio"

    def __call__(self, tau, m=None):
        T = len(tau.actions)
        if T == 0:
            raise ValueError("balance ratio needs at least one action")
        return 1.0 - self._spread(self.counts(tau.actions)) / T

    def signal(self, tau, m=None):
        imb = super().signal(tau, m)
        return 1.0 - imb / np.arange(1, len(imb) + 1)


# --- normalization ----------------------------------------------------------


class NormalizationMap:
    domain: tuple[str, ...] = ()
    name = "map"

    def __call__(self, x: float) -> float:
        raise NotImplementedError


class Reciprocal(NormalizationMap):
    """``x -> 1 / (1 + x)`` for nonnegative unbounded scores."""

    domain = (NONNEGATIVE, UNIT)
    name = "reciprocal"

    def __call__(self, x):
        if x < 0:
            raise FairnessDomainError(f"reciprocal map needs nonnegative input, got {x}")
        return 1.0 / (1.0 + x)


class Clamp(NormalizationMap):
    """Clip to ``[lo, hi]`` then rescale affinely onto ``[0, 1]``."""

    domain = (REAL, NONNEGATIVE, UNIT)
    name = "clamp"

    def __init__(self, lo: float, hi: float):
        if not hi > lo:
            raise ValueError("clamp needs lo < hi")
        self.lo, self.hi = float(lo), float(hi)

    def __call__(self, x):
        return (min(max(x, self.lo), self.hi) - self.lo) / (self.hi - self.lo)


class Identity(NormalizationMap):
    domain = (UNIT,)
    name = "identity"

    def __call__(self, x):
        return float(x)


class Normalized(TraceFairness):
    codomain = UNIT

    def __init__(self, inner: TraceFairness, map: NormalizationMap):
        self.inner = inner
        self.map = map
        self.name = f"{map.name}({inner.name})"
        self.concurrent_safe = inner.concurrent_safe

    def __call__(self, tau, m):
        return self.map(self.inner(tau, m))

    def signal(self, tau, m):
        return np.array([self.map(x) for x in self.inner.signal(tau, m).tolist()])

    def warnings(self, tau, m):
        return self.inner.warnings(tau, m)


def normalize(f: TraceFairness, map: NormalizationMap) -> Normalized:
    """Compose ``f`` with a map onto ``[0, 1]``; the map must accept ``f``'s range."""
    if f.codomain not in map.domain:
        raise FairnessDomainError(f"{map.name} map does not accept {f.codomain}-valued {f.name}")
    return Normalized(f, map)


class Custom(TraceFairness):
    """Wrap a callable ``fn(tau, m) -> float`` evaluated per prefix."""

    def __init__(self, fn: Callable[[BoundedTrace, MultiStakeholderMDP], float], *,
                 codomain: str = REAL, name: str = "custom", concurrent_safe: bool = False):
        self.fn = fn
        self.codomain = codomain
        self.name = name
        self.concurrent_safe = concurrent_safe

    def __call__(self, tau, m):
        return float(self.fn(tau, m))


def constant(value: float = 1.0) -> Custom:
    return Custom(lambda tau, m: value, codomain=UNIT if 0 <= value <= 1 else REAL,
                  name=f"constant({value})", concurrent_safe=True)


def require_unit(f: TraceFairness) -> TraceFairness:
    if f.codomain != UNIT:
        raise FairnessDomainError(f"{f.name} is {f.codomain}-valued; normalize it onto [0,1] first")
    return f


# convenience functional forms
def nash_welfare(tau, m) -> float:
    return NashWelfare()(tau, m)


def rawlsian_welfare(tau, m) -> float:
    return RawlsianWelfare()(tau, m)


def time_in_first_place(tau, m) -> float:
    return TimeInFirstPlace()(tau, m)


def allocation_imbalance(tau, partition) -> float:
    return AllocationImbalance(partition)(tau)
