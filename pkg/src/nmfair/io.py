"""JSON model, product, policy and trace-file formats (``format_version`` 1)."""
from __future__ import annotations

import json
import logging
import warnings
from pathlib import Path

import numpy as np

from .fairspec import machine_from_json, machine_to_json
from .model import (PROB_TOL, BoundedTrace, MarkovPolicy, MultiStakeholderMDP, Policy, _lookup,
                    sequence_policy)
from .product import ProductMDP, ProductPolicy, build_product

FORMAT_VERSION = 1
log = logging.getLogger(__name__)


class FormatError(ValueError):
    pass


class RenormalizedWarning(UserWarning):
    pass


def read_json(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=1) + "\n", encoding="utf-8")


def _check_version(obj: dict, what: str) -> None:
    v = obj.get("format_version")
    if v != FORMAT_VERSION:
        raise FormatError(f"{what}: unsupported format_version {v!r} (expected {FORMAT_VERSION})")


def model_from_json(obj: dict) -> MultiStakeholderMDP:
    _check_version(obj, "model")
    try:
        states = [str(s) for s in obj["states"]]
        actions = [str(a) for a in obj["actions"]]
        holders = [str(h) for h in obj["stakeholders"]]
    except KeyError as exc:
        raise FormatError(f"model: missing field {exc}") from None
    sidx = lambda x: _lookup(x, states, "state")  # noqa: E731
    aidx = lambda x: _lookup(x, actions, "action")  # noqa: E731
    nS, nA, n = len(states), len(actions), len(holders)
    P = np.zeros((nS, nA, nS))
    seen = np.zeros((nS, nA), dtype=bool)
    for s, a, succ in obj.get("transitions", []):
        si, ai = sidx(s), aidx(a)
        seen[si, ai] = True
        for s2, p in succ:
            P[si, ai, sidx(s2)] += float(p)
    missing = np.argwhere(~seen)
    if missing.size:
        s, a = missing[0]
        raise FormatError(f"model: no transition row for (s={states[s]}, a={actions[a]})")
    for s in range(nS):
        for a in range(nA):
            total = P[s, a].sum()
            if total <= 0:
                raise FormatError(f"model: empty distribution at (s={states[s]}, a={actions[a]})")
            if abs(total - 1.0) > PROB_TOL:
                msg = f"renormalized distribution at (s={states[s]}, a={actions[a]}) from sum {total!r}"
                warnings.warn(msg, RenormalizedWarning, stacklevel=2)
                log.warning(msg)
                P[s, a] /= total
    R = np.zeros((n, nS, nA, nS))
    raw = obj.get("rewards", {})
    tables = [raw.get(h, []) for h in holders] if isinstance(raw, dict) else raw
    if len(tables) != n:
        raise FormatError(f"model: {len(tables)} reward tables for {n} stakeholders")
    for i, triples in enumerate(tables):
        for s, a, s2, r in triples:
            R[i, sidx(s), aidx(a), sidx(s2)] = float(r)
    init = sidx(obj.get("init", 0))
    return MultiStakeholderMDP(states, actions, holders, init, P, R, float(obj.get("gamma", 1.0)))


def model_to_json(m: MultiStakeholderMDP) -> dict:
    S, A = m.state_labels, m.action_labels
    transitions = []
    for s in range(m.n_states):
        for a in range(m.n_actions):
            succ = [[S[s2], float(m.transitions[s, a, s2])] for s2 in np.flatnonzero(m.transitions[s, a]).tolist()]
            transitions.append([S[s], A[a], succ])
    rewards = {}
    for i, h in enumerate(m.stakeholder_labels):
        rewards[h] = [[S[s], A[a], S[s2], float(m.rewards[i, s, a, s2])]
                      for s, a, s2 in np.argwhere(m.rewards[i] != 0).tolist()]
    return {
        "format_version": FORMAT_VERSION,
        "states": list(S),
        "actions": list(A),
        "stakeholders": list(m.stakeholder_labels),
        "init": S[m.init],
        "gamma": m.gamma,
        "transitions": transitions,
        "rewards": rewards,
    }


def load_model(path) -> tuple[MultiStakeholderMDP, dict]:
    obj = read_json(path)
    return model_from_json(obj), obj


# --- product ------------------------------------------------------------------


def product_to_json(p: ProductMDP) -> dict:
    out = model_to_json(p.mdp)
    P = p.mdp.transitions
    out["memory"] = {
        "machine": machine_to_json(p.machine),
        "product_states": [list(ps) for ps in p.product_states],
        "base_model": model_to_json(p.base),
    }
    out["markov_fairness"] = [[i, a, j, float(p.markov_fairness[i, a, j])]
                              for i, a, j in np.argwhere(P > 0).tolist()]
    return out


def product_from_json(obj: dict) -> ProductMDP:
    """Rebuild the product from its base model and machine, checking it against the stored tables."""
    _check_version(obj, "product")
    if "memory" not in obj:
        raise FormatError("product: missing 'memory' section")
    base = model_from_json(obj["memory"]["base_model"])
    machine = machine_from_json(obj["memory"]["machine"], base)
    p = build_product(base, machine)
    stored = [tuple(ps) for ps in obj["memory"]["product_states"]]
    if stored != list(p.product_states):
        raise FormatError("product: stored product states disagree with the rebuilt product")
    for i, a, j, v in obj.get("markov_fairness", []):
        if p.markov_fairness[i, a, j] != v:
            raise FormatError(f"product: markov_fairness entry ({i},{a},{j}) disagrees with the machine")
    return p


def is_product(obj: dict) -> bool:
    return "memory" in obj


# --- policies -----------------------------------------------------------------


def policy_from_json(obj: dict, m: MultiStakeholderMDP, model_obj: dict | None = None) -> Policy:
    """Load a policy for model ``m`` (``model_obj`` is the raw model document, needed for product policies)."""
    _check_version(obj, "policy")
    kind = obj.get("kind")
    if kind == "uniform":
        return MarkovPolicy.uniform(m.n_states, m.n_actions)
    if kind == "sequence":
        return sequence_policy([m.action_index(a) for a in obj["sequence"]])
    if kind == "markov":
        table = np.zeros((m.n_states, m.n_actions))
        rows = obj["table"]
        for s_label, dist in rows.items():
            s = m.state_index(s_label)
            if isinstance(dist, dict):
                for a_label, p in dist.items():
                    table[s, m.action_index(a_label)] = float(p)
            else:
                table[s, m.action_index(dist)] = 1.0
        return MarkovPolicy(table)
    if kind == "product":
        if model_obj is not None and is_product(model_obj):
            # model is the product itself: a plain table over its states
            actions = [m.action_index(a) for a in obj["actions"]]
            return MarkovPolicy.deterministic(actions, m.n_actions)
        machine = machine_from_json(obj["machine"], m)
        p = build_product(m, machine)
        actions = [m.action_index(a) for a in obj["actions"]]
        if len(actions) != p.n_states:
            raise FormatError("product policy does not match the product built from this model")
        return ProductPolicy(p, MarkovPolicy.deterministic(actions, m.n_actions).table)
    raise FormatError(f"unknown policy kind {kind!r}")


def product_policy_to_json(p: ProductMDP, greedy) -> dict:
    A = p.mdp.action_labels
    return {
        "format_version": FORMAT_VERSION,
        "kind": "product",
        "product_states": [[p.base.state_labels[s], p.machine.memory_labels[k]] for s, k in p.product_states],
        "actions": [A[a] for a in greedy.actions.tolist()],
        "q_values": greedy.q_values.tolist(),
        "unvisited": [p.mdp.state_labels[i] for i in greedy.unvisited],
        "machine": machine_to_json(p.machine),
    }


# --- traces -------------------------------------------------------------------


def trace_to_json(tau: BoundedTrace, m: MultiStakeholderMDP) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "start_time": tau.start_time,
        "states": [m.state_labels[s] for s in tau.states],
        "actions": [m.action_labels[a] for a in tau.actions],
    }


def trace_from_json(obj: dict, m: MultiStakeholderMDP) -> BoundedTrace:
    _check_version(obj, "trace")
    return BoundedTrace(tuple(m.state_index(s) for s in obj["states"]),
                        tuple(m.action_index(a) for a in obj["actions"]),
                        int(obj.get("start_time", 1)))


def read_traces(path, m: MultiStakeholderMDP) -> list[BoundedTrace]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(trace_from_json(json.loads(line), m))
    return out


def write_traces(path, traces, m: MultiStakeholderMDP) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for tau in traces:
            fh.write(json.dumps(trace_to_json(tau, m)) + "\n")
