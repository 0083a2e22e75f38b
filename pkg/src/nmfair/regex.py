"""Regular fairness specifications over symbol classes.

Concrete syntax: class names (identifiers) separated by whitespace for
concatenation, ``|`` for alternation, postfix ``*`` and ``?``, parentheses.
A class name stands for a set of trace symbols, e.g. ``S`` for any state or
``A1`` for any action of stakeholder 1.

Compilation goes syntax tree -> Thompson NFA -> subset construction ->
Hopcroft minimization. Two matchers that never build an automaton are kept
alongside as references: a backtracking position-set matcher and a
Brzozowski-derivative matcher.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

from .automata import DFA, interleaved_alphabet, minimize


class RegexSyntaxError(ValueError):
    pass


class UnresolvedClassError(KeyError):
    pass


@dataclass(frozen=True)
class Sym:
    name: str


@dataclass(frozen=True)
class Concat:
    items: tuple


@dataclass(frozen=True)
class Alt:
    options: tuple


@dataclass(frozen=True)
class Star:
    inner: object


@dataclass(frozen=True)
class Opt:
    inner: object


@dataclass(frozen=True)
class Epsilon:
    pass


# --- parsing ------------------------------------------------------------------

_TOKEN = re.compile(r"\s*(?:([A-Za-z_][A-Za-z0-9_]*)|([|*?()]))")


def _tokenize(text: str) -> list[str]:
    pos, out = 0, []
    text = text.rstrip()
    while pos < len(text):
        mo = _TOKEN.match(text, pos)
        if not mo:
            pos += len(text[pos:]) - len(text[pos:].lstrip())
            raise RegexSyntaxError(f"unexpected character {text[pos]!r} at offset {pos}")
        out.append(mo.group(1) or mo.group(2))
        pos = mo.end()
    return out


def parse(text: str):
    tokens = _tokenize(text)
    pos = 0

    def peek():
        return tokens[pos] if pos < len(tokens) else None

    def alt():
        nonlocal pos
        options = [concat()]
        while peek() == "|":
            pos += 1
            options.append(concat())
        return options[0] if len(options) == 1 else Alt(tuple(options))

    def concat():
        items = []
        while peek() not in (None, "|", ")"):
            items.append(repeat())
        if not items:
            return Epsilon()
        return items[0] if len(items) == 1 else Concat(tuple(items))

    def repeat():
        nonlocal pos
        node = atom()
        while peek() in ("*", "?"):
            node = Star(node) if tokens[pos] == "*" else Opt(node)
            pos += 1
        return node

    def atom():
        nonlocal pos
        tok = peek()
        if tok is None:
            raise RegexSyntaxError("unexpected end of pattern")
        if tok == "(":
            pos += 1
            node = alt()
            if peek() != ")":
                raise RegexSyntaxError("missing ')'")
            pos += 1
            return node
        if tok in ("*", "?", "|", ")"):
            raise RegexSyntaxError(f"unexpected {tok!r}")
        pos += 1
        return Sym(tok)

    node = alt()
    if pos != len(tokens):
        raise RegexSyntaxError(f"unexpected {tokens[pos]!r}")
    return node


def to_text(node) -> str:
    if isinstance(node, Sym):
        return node.name
    if isinstance(node, Epsilon):
        return "()"
    if isinstance(node, Concat):
        return " ".join(_wrap(i, (Alt,)) for i in node.items)
    if isinstance(node, Alt):
        return " | ".join(to_text(o) for o in node.options)
    if isinstance(node, Star):
        return _wrap(node.inner, (Alt, Concat)) + "*"
    if isinstance(node, Opt):
        return _wrap(node.inner, (Alt, Concat)) + "?"
    raise TypeError(node)


def _wrap(node, kinds) -> str:
    text = to_text(node)
    return f"({text})" if isinstance(node, kinds) else text


def class_names(node) -> set[str]:
    if isinstance(node, Sym):
        return {node.name}
    if isinstance(node, Concat):
        return set().union(*(class_names(i) for i in node.items))
    if isinstance(node, Alt):
        return set().union(*(class_names(o) for o in node.options))
    if isinstance(node, (Star, Opt)):
        return class_names(node.inner)
    return set()


# --- turn taking ----------------------------------------------------------------


def turn_taking_regex(n: int, *, accept_empty: bool = False):
    """Stakeholders act in numerical order; any partial last round is allowed.

    ``(S A1 S A2 ... S An)* ((S A1) | (S A1 S A2) | ... | (S A1 ... S An)) S``.
    With ``accept_empty`` the final partial round may also be absent, so the
    bare initial state counts as fair.
    """
    if n < 1:
        raise ValueError("need at least one stakeholder")
    steps = [(Sym("S"), Sym(f"A{i}")) for i in range(1, n + 1)]
    rounds = Star(Concat(tuple(x for pair in steps for x in pair)))
    partials = tuple(Concat(tuple(x for pair in steps[:j] for x in pair)) for j in range(1, n + 1))
    last = partials[0] if n == 1 else Alt(partials)
    if accept_empty:
        last = Opt(last)
    return Concat((rounds, last, Sym("S")))


def symbol_classes(m, partition: Sequence[Sequence[int]] | None = None,
                   extra: Mapping[str, Sequence] | None = None) -> dict[str, frozenset]:
    """Class-name table for interleaved symbols of model ``m``.

    Provides ``S`` (any state), ``A`` (any action), ``A1..An`` for the action
    partition, each state/action label that is a valid identifier, and any
    ``extra`` classes given as lists of state or action labels.
    """
    classes: dict[str, frozenset] = {}
    for s, label in enumerate(m.state_labels):
        if label.isidentifier():
            classes[label] = frozenset({("s", s)})
    for a, label in enumerate(m.action_labels):
        if label.isidentifier():
            classes[label] = frozenset({("a", a)})
    classes["S"] = frozenset(("s", s) for s in range(m.n_states))
    classes["A"] = frozenset(("a", a) for a in range(m.n_actions))
    for i, cls in enumerate(partition or (), start=1):
        classes[f"A{i}"] = frozenset(("a", int(a)) for a in cls)
    for name, members in (extra or {}).items():
        syms = set()
        for lab in members:
            if lab in m.state_labels:
                syms.add(("s", m.state_labels.index(lab)))
            elif lab in m.action_labels:
                syms.add(("a", m.action_labels.index(lab)))
            else:
                raise UnresolvedClassError(f"class {name!r}: unknown label {lab!r}")
        classes[name] = frozenset(syms)
    return classes


def _resolve(node, classes: Mapping[str, frozenset]) -> None:
    for name in class_names(node):
        if name not in classes:
            raise UnresolvedClassError(f"unresolvable class name {name!r}")
        if not classes[name]:
            raise UnresolvedClassError(f"class {name!r} is empty")


# --- compilation ------------------------------------------------------------------


class _NFA:
    def __init__(self):
        self.eps: list[list[int]] = []
        self.edges: list[list[tuple[frozenset, int]]] = []

    def new(self) -> int:
        self.eps.append([])
        self.edges.append([])
        return len(self.eps) - 1

    def build(self, node, classes) -> tuple[int, int]:
        s, t = self.new(), self.new()
        if isinstance(node, Sym):
            self.edges[s].append((classes[node.name], t))
        elif isinstance(node, Epsilon):
            self.eps[s].append(t)
        elif isinstance(node, Concat):
            cur = s
            for item in node.items:
                a, b = self.build(item, classes)
                self.eps[cur].append(a)
                cur = b
            self.eps[cur].append(t)
        elif isinstance(node, Alt):
            for opt in node.options:
                a, b = self.build(opt, classes)
                self.eps[s].append(a)
                self.eps[b].append(t)
        elif isinstance(node, (Star, Opt)):
            a, b = self.build(node.inner, classes)
            self.eps[s] += [a, t]
            self.eps[b].append(t)
            if isinstance(node, Star):
                self.eps[b].append(a)
        else:
            raise TypeError(node)
        return s, t

    def closure(self, states) -> frozenset:
        stack = list(states)
        seen = set(states)
        while stack:
            q = stack.pop()
            for q2 in self.eps[q]:
                if q2 not in seen:
                    seen.add(q2)
                    stack.append(q2)
        return frozenset(seen)


def determinize(node, classes: Mapping[str, frozenset], alphabet: Sequence) -> DFA:
    """Thompson construction then subset construction, with an explicit empty-set sink."""
    _resolve(node, classes)
    nfa = _NFA()
    start, final = nfa.build(node, classes)
    first = nfa.closure([start])
    ids = {first: 0}
    order = [first]
    rows = []
    i = 0
    while i < len(order):
        cur = order[i]
        row = []
        for sym in alphabet:
            nxt = nfa.closure({t for q in cur for syms, t in nfa.edges[q] if sym in syms})
            if nxt not in ids:
                ids[nxt] = len(order)
                order.append(nxt)
            row.append(ids[nxt])
        rows.append(row)
        i += 1
    accepting = {k for k, S in enumerate(order) if final in S}
    return DFA(tuple(alphabet), np.array(rows, dtype=np.int64).reshape(-1, len(alphabet)), 0, frozenset(accepting))


def regex_to_dfa(r, classes: Mapping[str, frozenset], alphabet: Sequence | None = None) -> DFA:
    """Minimal complete DFA for ``r``; unmatched input falls into a rejecting sink."""
    if isinstance(r, str):
        r = parse(r)
    if alphabet is None:
        alphabet = sorted(set().union(*classes.values()))
    return minimize(determinize(r, classes, alphabet))


def model_regex_dfa(r, m, partition=None, extra=None) -> DFA:
    """Compile ``r`` over the interleaved alphabet of model ``m``."""
    classes = symbol_classes(m, partition, extra)
    return regex_to_dfa(r, classes, interleaved_alphabet(m.n_states, m.n_actions))


# --- reference matchers -------------------------------------------------------------


def reference_match(node, classes: Mapping[str, frozenset], symbols: Sequence) -> bool:
    """Backtracking matcher computing the set of end positions reachable per sub-pattern."""
    if isinstance(node, str):
        node = parse(node)
    _resolve(node, classes)
    symbols = tuple(symbols)

    def ends(n, i: int) -> frozenset:
        if isinstance(n, Sym):
            return frozenset({i + 1}) if i < len(symbols) and symbols[i] in classes[n.name] else frozenset()
        if isinstance(n, Epsilon):
            return frozenset({i})
        if isinstance(n, Concat):
            cur = {i}
            for item in n.items:
                cur = {j for k in cur for j in ends(item, k)}
            return frozenset(cur)
        if isinstance(n, Alt):
            return frozenset().union(*(ends(o, i) for o in n.options))
        if isinstance(n, Opt):
            return ends(n.inner, i) | {i}
        if isinstance(n, Star):
            seen = {i}
            frontier = [i]
            while frontier:
                k = frontier.pop()
                for j in ends(n.inner, k):
                    if j not in seen:
                        seen.add(j)
                        frontier.append(j)
            return frozenset(seen)
        raise TypeError(n)

    return len(symbols) in ends(node, 0)


# Derivative terms: ("0",) empty language, ("e",) empty word, ("c", frozenset),
# ("cat", a, b), ("alt", frozenset of terms), ("star", a).
NULL = ("0",)
EPS = ("e",)


def _cat(a, b):
    if a == NULL or b == NULL:
        return NULL
    if a == EPS:
        return b
    if b == EPS:
        return a
    if a[0] == "cat":  # right-associate
        return _cat(a[1], _cat(a[2], b))
    return ("cat", a, b)


def _alt(*terms):
    flat = set()
    for t in terms:
        if t == NULL:
            continue
        if t[0] == "alt":
            flat |= t[1]
        else:
            flat.add(t)
    if not flat:
        return NULL
    if len(flat) == 1:
        return next(iter(flat))
    return ("alt", frozenset(flat))


def _star(a):
    if a in (NULL, EPS):
        return EPS
    if a[0] == "star":
        return a
    return ("star", a)


def to_term(node, classes: Mapping[str, frozenset]):
    if isinstance(node, Sym):
        return ("c", frozenset(classes[node.name]))
    if isinstance(node, Epsilon):
        return EPS
    if isinstance(node, Concat):
        out = EPS
        for item in reversed(node.items):
            out = _cat(to_term(item, classes), out)
        return out
    if isinstance(node, Alt):
        return _alt(*(to_term(o, classes) for o in node.options))
    if isinstance(node, Opt):
        return _alt(EPS, to_term(node.inner, classes))
    if isinstance(node, Star):
        return _star(to_term(node.inner, classes))
    raise TypeError(node)


@lru_cache(maxsize=None)
def nullable(t) -> bool:
    kind = t[0]
    if kind in ("e", "star"):
        return True
    if kind in ("0", "c"):
        return False
    if kind == "cat":
        return nullable(t[1]) and nullable(t[2])
    return any(nullable(x) for x in t[1])


@lru_cache(maxsize=None)
def derivative(t, sym):
    """Brzozowski derivative of term ``t`` by one symbol."""
    kind = t[0]
    if kind in ("0", "e"):
        return NULL
    if kind == "c":
        return EPS if sym in t[1] else NULL
    if kind == "cat":
        head = _cat(derivative(t[1], sym), t[2])
        return _alt(head, derivative(t[2], sym)) if nullable(t[1]) else head
    if kind == "alt":
        return _alt(*(derivative(x, sym) for x in t[1]))
    if kind == "star":
        return _cat(derivative(t[1], sym), t)
    raise TypeError(t)


def derivative_match(node, classes: Mapping[str, frozenset], symbols: Sequence) -> bool:
    if isinstance(node, str):
        node = parse(node)
    _resolve(node, classes)
    t = to_term(node, classes)
    for sym in symbols:
        t = derivative(t, sym)
    return nullable(t)
