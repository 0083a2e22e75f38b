"""Fair-optimal objective and tabular planners/learners on the product model.

The objective blends weighted stakeholder returns with the discounted sum of
prefix fairness values. On a product model whose fairness is Markovian both
parts fold into a single per-transition reward ``rho`` sharing the model's
discount, which is what value iteration and Q-learning optimize.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .fairness import TraceFairness, fairness_signal
from .model import (BoundedTrace, MarkovPolicy, MultiStakeholderMDP, Policy, discounted_return, rollout,
                    spawn_generators)
from .product import ProductMDP, ProductPolicy


@dataclass
class LearnerConfig:
    alpha1: float = 1.0
    alpha2: float = 1.0
    weights: tuple[float, ...] | None = None
    learning_rate: float = 0.1
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    decay_fraction: float = 0.8
    episodes: int = 5000
    horizon: int | None = 50
    seed: int = 0
    vi_tolerance: float = 1e-10
    max_iterations: int = 1_000_000
    # Q-values closer than this count as tied; ties go to the lowest action index
    tie_tolerance: float = 1e-9

    def __post_init__(self):
        if self.alpha1 < 0 or self.alpha2 < 0 or self.alpha1 + self.alpha2 <= 0:
            raise ValueError("alpha1, alpha2 must be nonnegative with a positive sum")
        if self.weights is not None and any(w < 0 for w in self.weights):
            raise ValueError("stakeholder weights must be nonnegative")

    def stakeholder_weights(self, n: int) -> np.ndarray:
        if self.weights is None:
            return np.ones(n)
        if len(self.weights) != n:
            raise ValueError(f"{len(self.weights)} weights for {n} stakeholders")
        return np.asarray(self.weights, dtype=float)


def fair_optimal_objective(tau: BoundedTrace, m: MultiStakeholderMDP, f: TraceFairness,
                           cfg: LearnerConfig) -> float:
    """``alpha1 * sum_i w_i G_i(tau) + alpha2 * sum_t gamma^(t-1) F(tau_{1,t})`` over the finite trace."""
    w = cfg.stakeholder_weights(m.n_stakeholders)
    utility = sum(w[i] * discounted_return(tau, i, m) for i in range(m.n_stakeholders))
    fair = 0.0
    if cfg.alpha2 and tau.actions:
        for k, ft in enumerate(fairness_signal(f, tau, m).tolist()):
            fair += m.gamma**k * ft
    return float(cfg.alpha1 * utility + cfg.alpha2 * fair)


def combined_reward(p: ProductMDP, cfg: LearnerConfig) -> np.ndarray:
    """Per-transition reward ``rho[s', a, s'']`` on the product."""
    w = cfg.stakeholder_weights(p.mdp.n_stakeholders)
    return cfg.alpha1 * np.tensordot(w, p.mdp.rewards, axes=1) + cfg.alpha2 * p.markov_fairness


def discounted_sum(values, gamma: float) -> float:
    total = 0.0
    for k, v in enumerate(values):
        total += gamma**k * v
    return total


def rho_return(p: ProductMDP, rho: np.ndarray, tau: BoundedTrace) -> float:
    return discounted_sum([rho[i, a, j] for i, a, j in zip(tau.states, tau.actions, tau.states[1:])],
                          p.mdp.gamma)


@dataclass
class GreedyTabularPolicy:
    actions: np.ndarray
    q_values: np.ndarray
    visited: np.ndarray
    log: list[dict] = field(default_factory=list)

    @property
    def unvisited(self) -> list[int]:
        return np.flatnonzero(~self.visited).tolist()

    def as_markov(self) -> MarkovPolicy:
        return MarkovPolicy.deterministic(self.actions.tolist(), self.q_values.shape[1])

    def on_base(self, p: ProductMDP) -> Policy:
        return ProductPolicy(p, self.as_markov().table)


def greedy_actions(q: np.ndarray, tol: float) -> np.ndarray:
    best = q.max(axis=1, keepdims=True)
    return np.argmax(q >= best - tol, axis=1)


def value_iteration(p: ProductMDP, cfg: LearnerConfig) -> GreedyTabularPolicy:
    """Bellman backups on ``rho`` until the sup-norm change drops below ``vi_tolerance``.

    With ``gamma = 1`` the configured horizon is used for finite-horizon
    backward induction and the returned policy is the greedy policy with the
    full horizon remaining.
    """
    P = p.mdp.transitions
    gamma = p.mdp.gamma
    rho = combined_reward(p, cfg)
    expected = (P * rho).sum(axis=2)
    V = np.zeros(p.n_states)
    log = []
    if gamma < 1:
        for it in range(1, cfg.max_iterations + 1):
            Q = expected + gamma * (P @ V)
            V_new = Q.max(axis=1)
            change = float(np.abs(V_new - V).max())
            V = V_new
            log.append({"iteration": it, "sup_change": change})
            if change < cfg.vi_tolerance:
                break
        Q = expected + gamma * (P @ V)
    else:
        if not cfg.horizon:
            raise ValueError("gamma = 1 needs a finite horizon")
        for it in range(1, cfg.horizon + 1):
            Q = expected + P @ V
            V = Q.max(axis=1)
            log.append({"iteration": it, "value_at_init": float(V[0])})
    return GreedyTabularPolicy(greedy_actions(Q, cfg.tie_tolerance), Q, np.ones(p.n_states, dtype=bool), log)


def _epsilon(cfg: LearnerConfig, episode: int) -> float:
    decay = max(1, int(cfg.decay_fraction * cfg.episodes))
    frac = min(1.0, episode / decay)
    return cfg.epsilon_start + (cfg.epsilon_end - cfg.epsilon_start) * frac


def q_learning(p: ProductMDP, cfg: LearnerConfig) -> GreedyTabularPolicy:
    """One-step Q-learning with epsilon-greedy exploration on ``rho``.

    Episodes start at the product's initial state and run ``cfg.horizon``
    steps. States never updated keep action 0 and are listed in
    ``unvisited``.
    """
    if cfg.episodes < 1:
        raise ValueError("need at least one episode")
    if not cfg.horizon:
        raise ValueError("q_learning needs a finite episode horizon")
    rng = np.random.default_rng(cfg.seed)
    gamma = p.mdp.gamma
    nA = p.mdp.n_actions
    rho = combined_reward(p, cfg).tolist()
    cum = np.cumsum(p.mdp.transitions, axis=2).tolist()
    Q = [[0.0] * nA for _ in range(p.n_states)]
    visited = np.zeros(p.n_states, dtype=bool)
    lr = cfg.learning_rate
    log = []
    for ep in range(cfg.episodes):
        eps = _epsilon(cfg, ep)
        s = p.mdp.init
        ret = 0.0
        for t in range(cfg.horizon):
            row = Q[s]
            if rng.random() < eps:
                a = int(rng.integers(nA))
            else:
                a = row.index(max(row))
            u = rng.random()
            c = cum[s][a]
            s2 = next((j for j, x in enumerate(c) if u * c[-1] < x), len(c) - 1)
            r = rho[s][a][s2]
            ret += gamma**t * r
            last = t == cfg.horizon - 1
            target = r if (last and gamma == 1.0) else r + gamma * max(Q[s2])
            row[a] += lr * (target - row[a])
            visited[s] = True
            s = s2
        log.append({"episode": ep + 1, "epsilon": eps, "objective": ret})
    q = np.array(Q)
    actions = greedy_actions(q, cfg.tie_tolerance)
    actions[~visited] = 0
    return GreedyTabularPolicy(actions, q, visited, log)


@dataclass
class PolicyEvaluation:
    mean: float
    interval: tuple[float, float]
    std: float
    values: np.ndarray
    horizon: int


def evaluate_policy(m: MultiStakeholderMDP, pi: Policy, f: TraceFairness, cfg: LearnerConfig, horizon: int,
                    rollouts: int = 100, seed: int = 0, confidence: float = 0.95) -> PolicyEvaluation:
    """Monte Carlo estimate of the objective at a finite horizon, with a t-interval for the mean."""
    values = np.array([fair_optimal_objective(rollout(m, pi, horizon, rng), m, f, cfg)
                       for rng in spawn_generators(seed, rollouts)])
    mean = float(values.mean())
    std = float(values.std(ddof=1)) if rollouts > 1 else 0.0
    if std == 0.0:
        return PolicyEvaluation(mean, (mean, mean), 0.0, values, horizon)
    half = float(stats.t.ppf(0.5 + confidence / 2, rollouts - 1)) * std / math.sqrt(rollouts)
    return PolicyEvaluation(mean, (mean - half, mean + half), std, values, horizon)
