"""Declarative fairness specs as found under a model file's ``fairness`` key.

``{"kind": "nash"|"rawlsian"|"first_place"|"imbalance"|"balance"|"memory"|"regex",
"params": {...}, "normalize": "reciprocal"|"clamp"|"identity"}``
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fairness import (AllocationImbalance, BalanceRatio, Clamp, Identity, NashWelfare, RawlsianWelfare,
                       Reciprocal, TimeInFirstPlace, TraceFairness, normalize)
from .automata import (DFA, INTERLEAVED, DFAFairness, MachineFairness, MemoryMachine, dfa_to_memory,
                       interleaved_to_paired, saturating_difference_machine)
from .model import MultiStakeholderMDP
from .regex import model_regex_dfa, parse, turn_taking_regex


class SpecError(ValueError):
    pass


@dataclass
class FairnessSpec:
    """A trace fairness function plus, when one exists, a finite memory machine computing it."""

    kind: str
    trace: TraceFairness
    machine: MemoryMachine | None = None
    dfa: DFA | None = None  # over the interleaved encoding
    params: dict = field(default_factory=dict)
    normalization: str | None = None

    def require_machine(self):
        if self.machine is None:
            raise SpecError(
                f"fairness kind {self.kind!r} has no finite memory machine; "
                "give 'bound' for imbalance or use kind 'memory'/'regex'"
            )
        return self.machine


def _partition(m: MultiStakeholderMDP, raw) -> list[list[int]]:
    if raw is None:
        raise SpecError("missing 'partition' (list of action-label lists)")
    return [[m.action_index(a) for a in cls] for cls in raw]


def _map(name: str | None, params: dict):
    if name in (None, "none"):
        return None
    if name == "reciprocal":
        return Reciprocal()
    if name == "identity":
        return Identity()
    if name == "clamp":
        try:
            return Clamp(params["lo"], params["hi"])
        except KeyError:
            raise SpecError("clamp normalization needs params 'lo' and 'hi'") from None
    raise SpecError(f"unknown normalization {name!r}")


def machine_from_json(obj: dict, m: MultiStakeholderMDP):
    """Dense memory machine: ``update[m][a][s']`` and ``output[s][m]``; memory entries by label or index."""
    labels = [str(x) for x in obj["memory"]]

    def mem(x):
        if isinstance(x, int):
            return x
        return labels.index(str(x))

    update = np.array([[[mem(x) for x in row] for row in block] for block in obj["update"]], dtype=int)
    output = np.array(obj["output"], dtype=float)
    mm = MemoryMachine(tuple(labels), mem(obj.get("init", 0)), update, output)
    if not mm.fits(m):
        raise SpecError("memory machine tables do not match the model's states and actions")
    return mm


def machine_to_json(mm) -> dict:
    return {
        "memory": list(mm.memory_labels),
        "init": mm.init,
        "update": mm.update.tolist(),
        "output": mm.output.tolist(),
    }


def fairness_from_json(obj: dict, m: MultiStakeholderMDP) -> FairnessSpec:
    kind = obj.get("kind")
    params = dict(obj.get("params", {}))
    norm = obj.get("normalize")
    machine = dfa = None
    if kind == "nash":
        raw: TraceFairness = NashWelfare()
    elif kind == "rawlsian":
        raw = RawlsianWelfare()
    elif kind == "first_place":
        raw = TimeInFirstPlace()
    elif kind in ("imbalance", "balance"):
        part = _partition(m, params.get("partition"))
        try:
            raw = AllocationImbalance(part) if kind == "imbalance" else BalanceRatio(part)
        except ValueError as exc:
            raise SpecError(str(exc)) from None
        _check_cover(part, m)
        if "bound" in params:
            machine = saturating_difference_machine(part, m.n_states, m.n_actions, int(params["bound"]))
    elif kind == "memory":
        machine = machine_from_json(params, m)
        raw = MachineFairness(machine)
    elif kind == "regex":
        part = _partition(m, params["partition"]) if "partition" in params else None
        if params.get("turn_taking"):
            if part is None:
                raise SpecError("turn_taking needs a 'partition'")
            ast = turn_taking_regex(len(part), accept_empty=bool(params.get("accept_empty", False)))
        else:
            ast = parse(params["pattern"])
        dfa = model_regex_dfa(ast, m, part, params.get("classes"))
        raw = DFAFairness(dfa, INTERLEAVED)
        paired = interleaved_to_paired(dfa, m.init, m.n_states, m.n_actions)
        machine = dfa_to_memory(paired, m.n_states, m.n_actions)
    else:
        raise SpecError(f"unknown fairness kind {kind!r}")
    fmap = _map(norm, params)
    trace = normalize(raw, fmap) if fmap is not None else raw
    return FairnessSpec(kind, trace, machine, dfa, params, norm)


def _check_cover(part, m):
    covered = {a for cls in part for a in cls}
    missing = [m.action_labels[a] for a in range(m.n_actions) if a not in covered]
    if missing:
        raise SpecError(f"actions {missing} not covered by partition")
