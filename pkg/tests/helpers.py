"""Random model, trace and machine generators shared by the tests."""
import numpy as np

from nmfair.automata import MemoryMachine
from nmfair.model import BoundedTrace, MultiStakeholderMDP


def random_mdp(rng, n_states=3, n_actions=2, n_holders=2, gamma=1.0, integer=True, sparse=0.5,
               deterministic=False):
    P = np.zeros((n_states, n_actions, n_states))
    for s in range(n_states):
        for a in range(n_actions):
            if deterministic:
                P[s, a, rng.integers(n_states)] = 1.0
                continue
            mask = rng.random(n_states) < sparse
            mask[rng.integers(n_states)] = True
            w = rng.random(n_states) * mask
            P[s, a] = w / w.sum()
    shape = (n_holders, n_states, n_actions, n_states)
    R = rng.integers(-2, 4, size=shape).astype(float) if integer else rng.normal(size=shape)
    return MultiStakeholderMDP(
        tuple(f"s{i}" for i in range(n_states)), tuple(f"a{i}" for i in range(n_actions)),
        tuple(f"h{i}" for i in range(n_holders)), 0, P, R, gamma,
    )


def random_path(rng, m, length):
    """Positive-probability trace from init with uniformly chosen actions."""
    states, actions = [m.init], []
    for _ in range(length):
        a = int(rng.integers(m.n_actions))
        row = m.transitions[states[-1], a]
        s2 = int(rng.choice(m.n_states, p=row / row.sum()))
        actions.append(a)
        states.append(s2)
    return BoundedTrace(tuple(states), tuple(actions))


def random_machine(rng, n_memory, n_states, n_actions, binary=True):
    update = rng.integers(n_memory, size=(n_memory, n_actions, n_states))
    if binary:
        output = rng.integers(2, size=(n_states, n_memory)).astype(float)
    else:
        output = rng.random((n_states, n_memory))
    return MemoryMachine(tuple(f"m{k}" for k in range(n_memory)), int(rng.integers(n_memory)), update, output)


def doughnut_trace(actions):
    return BoundedTrace((0,) * (len(actions) + 1), tuple(actions))
