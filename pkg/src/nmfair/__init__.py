"""History-dependent fairness for multi-stakeholder MDPs.

Fairness functions over traces, fair-policy verification, compilation of
finite-memory fairness into a Markovian product model, and tabular learning
on that product.
"""
__version__ = "0.1.0"

from .model import (BoundedTrace, HistoryPolicy, MarkovPolicy, MultiStakeholderMDP, discounted_return, prefix,
                    rollout, sequence_policy, spawn_generators, step, validate_mdp)
from .fairness import (AllocationImbalance, BalanceRatio, NashWelfare, RawlsianWelfare, Reciprocal,
                       TimeInFirstPlace, fairness_signal, normalize)
from .automata import DFA, MemoryMachine, dfa_run, dfa_to_memory, memory_run, memory_to_dfa
from .regex import regex_to_dfa, turn_taking_regex
from .product import ProductMDP, build_product, lift_trace, markov_fairness_eval, project_trace
from .verify import check_trace, estimate_limit, find_t1, verify_policy_exhaustive, verify_policy_monte_carlo
from .learn import LearnerConfig, combined_reward, fair_optimal_objective, q_learning, value_iteration
from .envs import DoughnutSpec, build_doughnut, unbounded_memory_witness

__all__ = [name for name in dir() if not name.startswith("_")]
